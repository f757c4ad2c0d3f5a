// fit.hpp
//
// Ordinary least squares on log-log data, shared by the exponent fits and the
// dimension/content estimators.
#pragma once

#include <cmath>
#include <vector>

#include "apl/core.hpp"

namespace apl {

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double residual = 0.0;  // root-mean-square residual of the fit
  double window_min = 0.0;
  double window_max = 0.0;
  std::size_t points = 0;
  std::size_t dropped = 0;  // non-positive samples skipped
};

// Least-squares line y = slope * x + intercept.
inline FitResult fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("fit_line: size mismatch");
  if (x.size() < 2) throw Error("fit_line: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error("fit_line: abscissae are all equal");
  FitResult f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += e * e;
  }
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  f.residual = std::sqrt(ss_res / n);
  f.points = x.size();
  return f;
}

// Fits log(value) against log(scale). Pairs with value <= 0 are dropped and
// counted. The window records the scale range actually used.
inline FitResult fit_log_log(const std::vector<double>& scale, const std::vector<double>& value) {
  if (scale.size() != value.size()) throw Error("fit_log_log: size mismatch");
  std::vector<double> lx, ly;
  std::size_t dropped = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 0; i < scale.size(); ++i) {
    if (!(value[i] > 0.0) || !(scale[i] > 0.0)) {
      ++dropped;
      continue;
    }
    lx.push_back(std::log(scale[i]));
    ly.push_back(std::log(value[i]));
    lo = std::min(lo, scale[i]);
    hi = std::max(hi, scale[i]);
  }
  if (lx.empty()) throw Error("fit_log_log: all values are zero");
  if (lx.size() < 2) throw Error("fit_log_log: fewer than two positive samples");
  FitResult f = fit_line(lx, ly);
  f.dropped = dropped;
  f.window_min = lo;
  f.window_max = hi;
  return f;
}

}  // namespace apl
