// apl.hpp
//
// Umbrella header for the whole library.
#pragma once

#include "apl/core.hpp"
#include "apl/energy.hpp"
#include "apl/experiment.hpp"
#include "apl/expression.hpp"
#include "apl/fit.hpp"
#include "apl/geometry.hpp"
#include "apl/inequalities.hpp"
#include "apl/oracle.hpp"
#include "apl/phases.hpp"
#include "apl/scalelab.hpp"
#include "apl/solver.hpp"
