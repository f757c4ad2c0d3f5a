// core.hpp
//
// Problem parameters, axis-aligned node grids, node-centered scalar and
// vector fields, ball/region helpers and the APFIELD text format. Every other
// header in apl builds on these types.
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace apl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Index = std::size_t;
using NodeSet = std::vector<Index>;      // sorted node indices
using NodeMask = std::vector<std::uint8_t>;  // one flag per node

constexpr int kMaxDim = 3;
using Point = std::array<double, kMaxDim>;

// ---------------------------------------------------------------------------
// Params
// ---------------------------------------------------------------------------

struct ParamsSpec {
  double p = 2.0;
  double gamma = 1.0;
  double lambda_plus = 1.0;
  double lambda_minus = 1.0;
  double delta = 1.0;
  // Optimal Hoelder exponent of gradients of p-harmonic functions. There is no
  // closed form for general (N, p); only p = 2 has a default (1.0).
  std::optional<double> alpha_p;
  double eps_fit = 0.01;
};

class Params {
 public:
  explicit Params(const ParamsSpec& s)
      : p_(s.p),
        gamma_(s.gamma),
        lambda_plus_(s.lambda_plus),
        lambda_minus_(s.lambda_minus),
        delta_(s.delta),
        eps_fit_(s.eps_fit) {
    if (!(std::isfinite(p_) && p_ > 1.0)) throw Error("Params: p must satisfy 1 < p < inf");
    if (!(gamma_ > 0.0 && gamma_ < p_)) throw Error("Params: gamma must satisfy 0 < gamma < p");
    if (!(lambda_plus_ >= 0.0) || !(lambda_minus_ >= 0.0) || !std::isfinite(lambda_plus_) ||
        !std::isfinite(lambda_minus_))
      throw Error("Params: lambda_plus and lambda_minus must be finite and >= 0");
    if (!(delta_ >= 0.0) || !std::isfinite(delta_)) throw Error("Params: delta must be finite and >= 0");
    if (!(eps_fit_ > 0.0)) throw Error("Params: eps_fit must be > 0");
    if (s.alpha_p) {
      alpha_p_ = *s.alpha_p;
    } else if (p_ == 2.0) {
      alpha_p_ = 1.0;
    } else {
      throw Error("Params: alpha_p is required when p != 2");
    }
    if (!(alpha_p_ > 0.0 && alpha_p_ <= 1.0)) throw Error("Params: alpha_p must lie in (0, 1]");
  }

  double p() const { return p_; }
  double gamma() const { return gamma_; }
  double lambda_plus() const { return lambda_plus_; }
  double lambda_minus() const { return lambda_minus_; }
  double delta() const { return delta_; }
  double alpha_p() const { return alpha_p_; }
  double eps_fit() const { return eps_fit_; }

  // Scaling exponent tau = gamma / (p - gamma); minimizers grow like dist^(1+tau).
  double tau() const { return gamma_ / (p_ - gamma_); }
  double tau_star() const { return std::min(tau(), alpha_p_ - eps_fit_); }
  // gamma < min{1, p alpha_p / (1 + alpha_p)}, where tau_star == tau.
  bool restricted_range() const { return gamma_ < std::min(1.0, p_ * alpha_p_ / (1.0 + alpha_p_)); }

  Params with_delta(double delta) const {
    ParamsSpec s = spec();
    s.delta = delta;
    return Params(s);
  }

  ParamsSpec spec() const {
    return ParamsSpec{p_, gamma_, lambda_plus_, lambda_minus_, delta_, alpha_p_, eps_fit_};
  }

 private:
  double p_, gamma_, lambda_plus_, lambda_minus_, delta_;
  double alpha_p_ = 1.0;
  double eps_fit_;
};

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

struct Interval {
  double lower;
  double upper;
};

class Grid {
 public:
  Grid() = default;

  Grid(const std::vector<Interval>& extents, const std::vector<std::size_t>& resolution) {
    if (extents.empty() || extents.size() > static_cast<std::size_t>(kMaxDim))
      throw Error("Grid: dimension must be 1, 2 or 3");
    if (extents.size() != resolution.size()) throw Error("Grid: extents/resolution size mismatch");
    dim_ = static_cast<int>(extents.size());
    total_ = 1;
    for (int k = 0; k < dim_; ++k) {
      const auto& iv = extents[k];
      if (!(std::isfinite(iv.lower) && std::isfinite(iv.upper) && iv.lower < iv.upper))
        throw Error("Grid: degenerate interval on axis " + std::to_string(k));
      if (resolution[k] < 2) throw Error("Grid: resolution must be >= 2 on axis " + std::to_string(k));
      lower_[k] = iv.lower;
      upper_[k] = iv.upper;
      n_[k] = resolution[k];
      h_[k] = (iv.upper - iv.lower) / static_cast<double>(resolution[k] - 1);
      total_ *= resolution[k];
    }
    // Row-major: the last axis varies fastest.
    stride_[dim_ - 1] = 1;
    for (int k = dim_ - 2; k >= 0; --k) stride_[k] = stride_[k + 1] * n_[k + 1];
  }

  int dim() const { return dim_; }
  std::size_t size() const { return total_; }
  std::size_t n(int axis) const { return n_[axis]; }
  double lower(int axis) const { return lower_[axis]; }
  double upper(int axis) const { return upper_[axis]; }
  double spacing(int axis) const { return h_[axis]; }
  std::size_t stride(int axis) const { return stride_[axis]; }
  double max_spacing() const { return *std::max_element(h_.begin(), h_.begin() + dim_); }
  double min_spacing() const { return *std::min_element(h_.begin(), h_.begin() + dim_); }

  double cell_volume() const {
    double v = 1.0;
    for (int k = 0; k < dim_; ++k) v *= h_[k];
    return v;
  }

  // Smallest box side length.
  double domain_size() const {
    double s = std::numeric_limits<double>::infinity();
    for (int k = 0; k < dim_; ++k) s = std::min(s, upper_[k] - lower_[k]);
    return s;
  }

  std::array<std::size_t, kMaxDim> unflatten(Index i) const {
    std::array<std::size_t, kMaxDim> m{0, 0, 0};
    for (int k = 0; k < dim_; ++k) {
      m[k] = i / stride_[k];
      i -= m[k] * stride_[k];
    }
    return m;
  }

  Index flatten(const std::array<std::size_t, kMaxDim>& m) const {
    Index i = 0;
    for (int k = 0; k < dim_; ++k) i += m[k] * stride_[k];
    return i;
  }

  double coordinate(std::size_t i, int axis) const { return lower_[axis] + static_cast<double>(i) * h_[axis]; }

  Point point(Index i) const {
    Point x{0.0, 0.0, 0.0};
    const auto m = unflatten(i);
    for (int k = 0; k < dim_; ++k) x[k] = coordinate(m[k], k);
    return x;
  }

  bool on_boundary(Index i) const {
    const auto m = unflatten(i);
    for (int k = 0; k < dim_; ++k)
      if (m[k] == 0 || m[k] + 1 == n_[k]) return true;
    return false;
  }

  // Trapezoidal quadrature weight of a node.
  double weight(Index i) const {
    const auto m = unflatten(i);
    double w = 1.0;
    for (int k = 0; k < dim_; ++k) w *= (m[k] == 0 || m[k] + 1 == n_[k]) ? 0.5 * h_[k] : h_[k];
    return w;
  }

  // Nearest node to a point (clamped into the box).
  Index nearest(const Point& x) const {
    std::array<std::size_t, kMaxDim> m{0, 0, 0};
    for (int k = 0; k < dim_; ++k) {
      const double t = std::round((x[k] - lower_[k]) / h_[k]);
      m[k] = static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(n_[k] - 1)));
    }
    return flatten(m);
  }

  // Calls fn(j) for every face neighbor j of node i.
  template <class Fn>
  void for_each_face_neighbor(Index i, Fn&& fn) const {
    const auto m = unflatten(i);
    for (int k = 0; k < dim_; ++k) {
      if (m[k] > 0) fn(i - stride_[k]);
      if (m[k] + 1 < n_[k]) fn(i + stride_[k]);
    }
  }

  std::vector<Interval> extents() const {
    std::vector<Interval> e;
    for (int k = 0; k < dim_; ++k) e.push_back({lower_[k], upper_[k]});
    return e;
  }

  std::vector<std::size_t> resolution() const { return {n_.begin(), n_.begin() + dim_}; }

  friend bool operator==(const Grid& a, const Grid& b) {
    if (a.dim_ != b.dim_) return false;
    for (int k = 0; k < a.dim_; ++k)
      if (a.n_[k] != b.n_[k] || a.lower_[k] != b.lower_[k] || a.upper_[k] != b.upper_[k]) return false;
    return true;
  }

 private:
  int dim_ = 0;
  std::size_t total_ = 0;
  std::array<double, kMaxDim> lower_{}, upper_{}, h_{};
  std::array<std::size_t, kMaxDim> n_{}, stride_{};
};

inline Grid build_grid(const std::vector<Interval>& extents, const std::vector<std::size_t>& resolution) {
  return Grid(extents, resolution);
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

class ScalarField {
 public:
  ScalarField() = default;

  explicit ScalarField(Grid grid, double fill = 0.0)
      : grid_(std::move(grid)), values_(grid_.size(), fill), mask_(grid_.size(), 0), bvals_(grid_.size(), 0.0) {}

  ScalarField(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size()) throw Error("ScalarField: value count does not match grid");
    mask_.assign(grid_.size(), 0);
    bvals_.assign(grid_.size(), 0.0);
    check_finite();
  }

  // Samples fn at every node.
  template <class Fn>
  static ScalarField sample(const Grid& grid, Fn&& fn) {
    std::vector<double> v(grid.size());
    for (Index i = 0; i < grid.size(); ++i) v[i] = fn(grid.point(i));
    return ScalarField(grid, std::move(v));
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }
  double& operator[](Index i) { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool masked(Index i) const { return mask_[i] != 0; }
  const NodeMask& mask() const { return mask_; }
  double boundary_value(Index i) const { return bvals_[i]; }
  std::size_t masked_count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
  }

  // Fixes node i to value v (Dirichlet).
  void fix(Index i, double v) {
    mask_[i] = 1;
    bvals_[i] = v;
    values_[i] = v;
  }

  void release(Index i) {
    mask_[i] = 0;
    bvals_[i] = 0.0;
  }

  // Fixes every node on the box boundary to its current value.
  void fix_box_boundary() {
    for (Index i = 0; i < size(); ++i)
      if (grid_.on_boundary(i)) fix(i, values_[i]);
  }

  void enforce_mask() {
    for (Index i = 0; i < size(); ++i)
      if (mask_[i]) values_[i] = bvals_[i];
  }

  void check_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) throw Error("ScalarField: non-finite value");
  }

  friend bool operator==(const ScalarField& a, const ScalarField& b) {
    return a.grid_ == b.grid_ && a.values_ == b.values_ && a.mask_ == b.mask_ && a.bvals_ == b.bvals_;
  }

 private:
  Grid grid_;
  std::vector<double> values_;
  NodeMask mask_;
  std::vector<double> bvals_;
};

class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(Grid grid) : grid_(std::move(grid)), data_(grid_.size() * grid_.dim(), 0.0) {}

  const Grid& grid() const { return grid_; }
  int dim() const { return grid_.dim(); }
  double component(Index i, int axis) const { return data_[i * dim() + axis]; }
  double& component(Index i, int axis) { return data_[i * dim() + axis]; }
  double norm(Index i) const {
    double s = 0.0;
    for (int k = 0; k < dim(); ++k) s += component(i, k) * component(i, k);
    return std::sqrt(s);
  }

 private:
  Grid grid_;
  std::vector<double> data_;
};

// Central differences in the interior, one-sided first differences on the box
// boundary. Exact on affine fields.
inline VectorField gradient_field(const ScalarField& f) {
  f.check_finite();
  const Grid& g = f.grid();
  VectorField out(g);
  for (Index i = 0; i < g.size(); ++i) {
    const auto m = g.unflatten(i);
    for (int k = 0; k < g.dim(); ++k) {
      const std::size_t s = g.stride(k);
      const double h = g.spacing(k);
      double d;
      if (m[k] == 0) {
        d = (f[i + s] - f[i]) / h;
      } else if (m[k] + 1 == g.n(k)) {
        d = (f[i] - f[i - s]) / h;
      } else {
        d = (f[i + s] - f[i - s]) / (2.0 * h);
      }
      out.component(i, k) = d;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Balls and node regions
// ---------------------------------------------------------------------------

struct BallSpec {
  Point center{0.0, 0.0, 0.0};
  double radius = 0.0;
};

inline double distance(const Point& a, const Point& b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

// Node-center inclusion with a relative slack so that nodes lying on the sphere
// are included consistently across rescaled grids.
inline bool in_ball(const Grid& g, Index i, const BallSpec& b) {
  return distance(g.point(i), b.center, g.dim()) <= b.radius * (1.0 + 1e-12);
}

inline NodeMask ball_mask(const Grid& g, const BallSpec& b) {
  NodeMask m(g.size(), 0);
  for (Index i = 0; i < g.size(); ++i) m[i] = in_ball(g, i, b) ? 1 : 0;
  return m;
}

inline NodeMask full_mask(const Grid& g) { return NodeMask(g.size(), 1); }

inline NodeSet mask_to_set(const NodeMask& m) {
  NodeSet s;
  for (Index i = 0; i < m.size(); ++i)
    if (m[i]) s.push_back(i);
  return s;
}

inline NodeMask set_to_mask(const NodeSet& s, std::size_t n) {
  NodeMask m(n, 0);
  for (Index i : s) m[i] = 1;
  return m;
}

// Whether the closed ball plus `margin_cells` cells stays inside the box.
inline bool ball_inside(const Grid& g, const BallSpec& b, double margin_cells = 0.0) {
  for (int k = 0; k < g.dim(); ++k) {
    const double m = margin_cells * g.spacing(k);
    if (b.center[k] - b.radius - m < g.lower(k) - 1e-12 * g.spacing(k)) return false;
    if (b.center[k] + b.radius + m > g.upper(k) + 1e-12 * g.spacing(k)) return false;
  }
  return true;
}

inline double ball_volume(double r, int dim) {
  switch (dim) {
    case 1: return 2.0 * r;
    case 2: return M_PI * r * r;
    default: return 4.0 / 3.0 * M_PI * r * r * r;
  }
}

// ---------------------------------------------------------------------------
// Multilinear interpolation
// ---------------------------------------------------------------------------

// Multilinear interpolation of f at x. Points outside the box are an error.
inline double interpolate(const ScalarField& f, const Point& x) {
  const Grid& g = f.grid();
  std::array<std::size_t, kMaxDim> base{0, 0, 0};
  std::array<double, kMaxDim> t{0.0, 0.0, 0.0};
  for (int k = 0; k < g.dim(); ++k) {
    const double s = (x[k] - g.lower(k)) / g.spacing(k);
    const double top = static_cast<double>(g.n(k) - 1);
    if (s < -1e-9 || s > top + 1e-9) throw Error("interpolate: point outside grid");
    const double sc = std::clamp(s, 0.0, top);
    auto b = static_cast<std::size_t>(std::floor(sc));
    if (b + 1 >= g.n(k)) b = g.n(k) - 2;
    base[k] = b;
    t[k] = sc - static_cast<double>(b);
  }
  double acc = 0.0;
  const int corners = 1 << g.dim();
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    auto m = base;
    for (int k = 0; k < g.dim(); ++k) {
      if (c & (1 << k)) {
        w *= t[k];
        m[k] += 1;
      } else {
        w *= 1.0 - t[k];
      }
    }
    if (w != 0.0) acc += w * f[g.flatten(m)];
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Parallel helpers
// ---------------------------------------------------------------------------

// Worker cap from APL_THREADS; defaults to hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("APL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, count). Tasks must be independent.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Sum of term(i) over [0, count) with a summation order fixed by the chunk
// size, so the result does not depend on the number of workers.
template <class Term>
double chunked_sum(std::size_t count, Term&& term, std::size_t chunk = 4096) {
  const std::size_t chunks = (count + chunk - 1) / chunk;
  std::vector<double> partial(chunks, 0.0);
  auto work = [&](std::size_t c) {
    double s = 0.0;
    const std::size_t end = std::min(count, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) s += term(i);
    partial[c] = s;
  };
  if (chunks <= 1) {
    if (chunks == 1) work(0);
  } else {
    parallel_for(chunks, work);
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

// ---------------------------------------------------------------------------
// APFIELD v1 text format
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error("APFIELD: malformed number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

}  // namespace detail

// Header line, node values in row-major order, then MASK flags and BVALS for
// the masked nodes. Numbers use shortest round-trip formatting.
inline void write_field(std::ostream& os, const ScalarField& f) {
  const Grid& g = f.grid();
  std::vector<double> a, b;
  std::string n;
  for (int k = 0; k < g.dim(); ++k) {
    a.push_back(g.lower(k));
    b.push_back(g.upper(k));
    if (k) n += ',';
    n += std::to_string(g.n(k));
  }
  os << "APFIELD v1 dim=" << g.dim() << " n=" << n << " a=" << detail::join_doubles(a)
     << " b=" << detail::join_doubles(b) << '\n';
  for (double v : f.values()) os << detail::format_double(v) << '\n';
  os << "MASK\n";
  for (Index i = 0; i < f.size(); ++i) os << (f.masked(i) ? '1' : '0') << '\n';
  os << "BVALS\n";
  for (Index i = 0; i < f.size(); ++i)
    if (f.masked(i)) os << detail::format_double(f.boundary_value(i)) << '\n';
}

inline std::string serialize_field(const ScalarField& f) {
  std::ostringstream os;
  write_field(os, f);
  return os.str();
}

inline ScalarField read_field(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("APFIELD: empty stream");
  const auto tokens = detail::split(line, ' ');
  if (tokens.size() != 6 || tokens[0] != "APFIELD") throw Error("APFIELD: corrupted header");
  if (tokens[1] != "v1") throw Error("APFIELD: unsupported version '" + std::string(tokens[1]) + "'");
  auto value_of = [&](std::string_view tok, std::string_view key) {
    if (tok.substr(0, key.size()) != key) throw Error("APFIELD: corrupted header, expected " + std::string(key));
    return tok.substr(key.size());
  };
  const auto dim_str = value_of(tokens[2], "dim=");
  int dim = 0;
  if (std::from_chars(dim_str.data(), dim_str.data() + dim_str.size(), dim).ec != std::errc() || dim < 1 ||
      dim > kMaxDim)
    throw Error("APFIELD: bad dim");
  const auto ns = detail::split(value_of(tokens[3], "n="), ',');
  const auto as = detail::split(value_of(tokens[4], "a="), ',');
  const auto bs = detail::split(value_of(tokens[5], "b="), ',');
  if (ns.size() != static_cast<std::size_t>(dim) || as.size() != ns.size() || bs.size() != ns.size())
    throw Error("APFIELD: shape mismatch in header");
  std::vector<Interval> ext;
  std::vector<std::size_t> res;
  for (int k = 0; k < dim; ++k) {
    std::size_t nk = 0;
    if (std::from_chars(ns[k].data(), ns[k].data() + ns[k].size(), nk).ec != std::errc())
      throw Error("APFIELD: bad resolution");
    res.push_back(nk);
    ext.push_back({detail::parse_double(as[k]), detail::parse_double(bs[k])});
  }
  Grid grid(ext, res);
  std::vector<double> values;
  values.reserve(grid.size());
  while (std::getline(is, line) && line != "MASK") values.push_back(detail::parse_double(line));
  if (line != "MASK") throw Error("APFIELD: missing MASK section");
  if (values.size() != grid.size()) throw Error("APFIELD: shape mismatch, value count differs from grid");
  ScalarField f(grid, std::move(values));
  NodeSet masked;
  Index i = 0;
  while (std::getline(is, line) && line != "BVALS") {
    if (i >= grid.size() || (line != "0" && line != "1")) throw Error("APFIELD: malformed MASK section");
    if (line == "1") masked.push_back(i);
    ++i;
  }
  if (line != "BVALS") throw Error("APFIELD: missing BVALS section");
  if (i != grid.size()) throw Error("APFIELD: shape mismatch in MASK section");
  std::size_t k = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (k >= masked.size()) throw Error("APFIELD: shape mismatch in BVALS section");
    const double bv = detail::parse_double(line);
    const double v = f[masked[k]];
    f.fix(masked[k], bv);
    f[masked[k]] = v;
    ++k;
  }
  if (k != masked.size()) throw Error("APFIELD: shape mismatch in BVALS section");
  return f;
}

inline ScalarField deserialize_field(const std::string& bytes) {
  std::istringstream is(bytes);
  return read_field(is);
}

}  // namespace apl
