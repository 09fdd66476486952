#ifndef REGIONAL_MODEL_HPP
#define REGIONAL_MODEL_HPP

// Problem parameters, uniform grids, grid functions and scope functions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "regional/errors.hpp"

namespace regional {

inline constexpr int kMaxDim = 3;
using Point = std::array<double, kMaxDim>;

inline double norm(const Point& x, int n) {
  double s = 0.0;
  for (int d = 0; d < n; ++d) s += x[d] * x[d];
  return std::sqrt(s);
}

/// (n-1)-dimensional measure of the unit sphere in R^n, with |S^0| = 2.
inline double sphere_measure(int n) {
  if (n < 1) throw DomainError("sphere_measure: dimension must be >= 1");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

// ---------------------------------------------------------------------------
// ProblemParams
// ---------------------------------------------------------------------------

/// Parameters of eps^{2a} (-Delta)_rho^a u + u = lambda u^q + u^{2*-1}.
/// The critical exponent is derived on every call and never cached.
class ProblemParams {
 public:
  ProblemParams(int n, double alpha, double lambda, double q, double eps = 1.0)
      : n_(n), alpha_(alpha), lambda_(lambda), q_(q), eps_(eps) {
    if (n < 1 || n > kMaxDim) throw DomainError("n must be in [1, 3]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
    if (!(2.0 * alpha < n)) throw DomainError("2*alpha < n is required");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be >= 0");
    if (!(q > 1.0 && q + 1.0 < crit_exp() * (1.0 - 1e-12))) throw DomainError("q must lie in (1, 2*_alpha - 1)");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("eps must be > 0");
  }

  int n() const { return n_; }
  double alpha() const { return alpha_; }
  double lambda() const { return lambda_; }
  double q() const { return q_; }
  double eps() const { return eps_; }
  double crit_exp() const { return 2.0 * n_ / (n_ - 2.0 * alpha_); }

  ProblemParams with_lambda(double lambda) const { return {n_, alpha_, lambda, q_, eps_}; }
  ProblemParams with_eps(double eps) const { return {n_, alpha_, lambda_, q_, eps}; }

 private:
  int n_;
  double alpha_;
  double lambda_;
  double q_;
  double eps_;
};

// ---------------------------------------------------------------------------
// GridSpec / GridFunction
// ---------------------------------------------------------------------------

/// Uniform tensor grid on [-L, L]^n with m points per axis.
class GridSpec {
 public:
  GridSpec(int n, double extent, int points) : n_(n), extent_(extent), points_(points) {
    if (n < 1 || n > kMaxDim) throw DomainError("grid dimension must be in [1, 3]");
    if (points < 8) throw DomainError("grid needs at least 8 points per axis");
    if (!(extent > 0.0) || !std::isfinite(extent)) throw DomainError("grid extent must be > 0");
  }

  int n() const { return n_; }
  double extent() const { return extent_; }
  int points() const { return points_; }
  double h() const { return 2.0 * extent_ / (points_ - 1); }
  double cell_volume() const { return std::pow(h(), n_); }
  std::size_t size() const {
    std::size_t s = 1;
    for (int d = 0; d < n_; ++d) s *= static_cast<std::size_t>(points_);
    return s;
  }
  double coordinate(int i) const { return -extent_ + i * h(); }

  /// Row-major multi-index of a linear index (last axis fastest).
  std::array<int, kMaxDim> multi_index(std::size_t idx) const {
    std::array<int, kMaxDim> mi{};
    for (int d = n_ - 1; d >= 0; --d) {
      mi[d] = static_cast<int>(idx % points_);
      idx /= points_;
    }
    return mi;
  }
  std::size_t linear_index(const std::array<int, kMaxDim>& mi) const {
    std::size_t idx = 0;
    for (int d = 0; d < n_; ++d) idx = idx * points_ + static_cast<std::size_t>(mi[d]);
    return idx;
  }
  Point point(std::size_t idx) const {
    const auto mi = multi_index(idx);
    Point x{};
    for (int d = 0; d < n_; ++d) x[d] = coordinate(mi[d]);
    return x;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  int n_;
  double extent_;
  int points_;
};

/// Real function sampled on a GridSpec; identically zero outside the box.
class GridFunction {
 public:
  /// Placeholder on the smallest 1-D grid, for default-constructed reports.
  GridFunction() : GridFunction(GridSpec(1, 1.0, 8)) {}
  explicit GridFunction(GridSpec spec) : spec_(spec), values_(spec.size(), 0.0) {}
  GridFunction(GridSpec spec, std::vector<double> values)
      : spec_(spec), values_(std::move(values)) {
    if (values_.size() != spec_.size()) throw ShapeError("value count does not match grid");
    for (double v : values_)
      if (!std::isfinite(v)) throw DomainError("grid function values must be finite");
  }

  template <class F>
  static GridFunction sample(const GridSpec& spec, F&& f) {
    GridFunction u(spec);
    for (std::size_t i = 0; i < u.size(); ++i) u.values_[i] = f(spec.point(i));
    return u;
  }

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  GridFunction& operator+=(const GridFunction& o) {
    require_same_grid(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    require_same_grid(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  GridFunction& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(double s, GridFunction a) { return a *= s; }
  friend GridFunction operator*(GridFunction a, double s) { return a *= s; }

  GridFunction positive_part() const {
    GridFunction r = *this;
    for (double& v : r.values_) v = std::max(v, 0.0);
    return r;
  }
  /// u_- = max(-u, 0), so that u = u_+ - u_-.
  GridFunction negative_part() const {
    GridFunction r = *this;
    for (double& v : r.values_) v = std::max(-v, 0.0);
    return r;
  }

  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  /// Index of the maximum; ties go to the smallest index, i.e. the
  /// lexicographically smallest grid point.
  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) -
                                    values_.begin());
  }
  bool is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }

  /// Multilinear interpolation; zero outside [-L, L]^n.
  double interpolate(const Point& x) const {
    const int n = spec_.n();
    const double h = spec_.h();
    const int m = spec_.points();
    std::array<int, kMaxDim> base{};
    std::array<double, kMaxDim> frac{};
    for (int d = 0; d < n; ++d) {
      const double s = (x[d] + spec_.extent()) / h;
      if (s < 0.0 || s > m - 1) return 0.0;
      int i = std::min(static_cast<int>(std::floor(s)), m - 2);
      base[d] = i;
      frac[d] = s - i;
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << n); ++corner) {
      double wgt = 1.0;
      std::array<int, kMaxDim> mi{};
      for (int d = 0; d < n; ++d) {
        const bool up = (corner >> d) & 1;
        mi[d] = base[d] + (up ? 1 : 0);
        wgt *= up ? frac[d] : 1.0 - frac[d];
      }
      if (wgt != 0.0) acc += wgt * values_[spec_.linear_index(mi)];
    }
    return acc;
  }

  void require_same_grid(const GridFunction& o) const {
    if (!(spec_ == o.spec_)) throw ShapeError("grid functions live on different grids");
  }

 private:
  GridSpec spec_;
  std::vector<double> values_;
};

/// Discrete L2 pairing sum(u v) h^n.
inline double l2_inner(const GridFunction& u, const GridFunction& v) {
  u.require_same_grid(v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s * u.spec().cell_volume();
}

/// Lattice translation: result(x) = u(x + shift*h), zero-filled.
inline GridFunction shift_lattice(const GridFunction& u, const std::array<int, kMaxDim>& shift) {
  const GridSpec& g = u.spec();
  GridFunction r(g);
  for (std::size_t i = 0; i < u.size(); ++i) {
    auto mi = g.multi_index(i);
    bool inside = true;
    for (int d = 0; d < g.n(); ++d) {
      mi[d] += shift[d];
      if (mi[d] < 0 || mi[d] >= g.points()) inside = false;
    }
    if (inside) r[i] = u[g.linear_index(mi)];
  }
  return r;
}

// ---------------------------------------------------------------------------
// ScopeFunction
// ---------------------------------------------------------------------------

enum class ScopeKind { constant, radial_well, radial_bump, linear_growth };

inline std::string to_string(ScopeKind k) {
  switch (k) {
    case ScopeKind::constant: return "constant";
    case ScopeKind::radial_well: return "radial_well";
    case ScopeKind::radial_bump: return "radial_bump";
    case ScopeKind::linear_growth: return "linear_growth";
  }
  return "unknown";
}

inline ScopeKind scope_kind_from_string(const std::string& s) {
  if (s == "constant") return ScopeKind::constant;
  if (s == "radial_well" || s == "radial-well" || s == "shifted_well") return ScopeKind::radial_well;
  if (s == "radial_bump" || s == "radial-bump") return ScopeKind::radial_bump;
  if (s == "linear_growth" || s == "linear-growth") return ScopeKind::linear_growth;
  throw ValidationError("scope.kind", "unknown scope family '" + s + "'");
}

/// Interaction radius rho(x) with its structural bounds rho0 <= rho < rho_inf.
///
/// Families (c = center, s = sigma):
///   constant       rho(x) = value
///   radial_well    rho(x) = rho_inf - (rho_inf - rho0) exp(-|x-c|^2 / s^2)
///   radial_bump    rho(x) = rho_inf - (rho_inf - rho0) / (1 + |x-c|^2 / s^2)
///   linear_growth  rho(x) = rho0 + slope |x-c|, with rho_inf = inf and declared bound a
///
/// Every scope carries an affine reparametrisation x -> rho(scale x + shift) / scale,
/// which is how rescaled scopes rho(eps x + eps z)/eps are represented.
class ScopeFunction {
 public:
  static ScopeFunction constant(double value, double rho0, double rho_inf) {
    ScopeFunction s(ScopeKind::constant, rho0, rho_inf);
    s.value_ = value;
    if (!(value > 0.0)) throw DomainError("constant scope must be positive");
    return s;
  }
  static ScopeFunction constant(double value) {
    return constant(value, value, std::numeric_limits<double>::infinity());
  }
  static ScopeFunction radial_well(double rho0, double rho_inf, double sigma, Point center = {}) {
    ScopeFunction s(ScopeKind::radial_well, rho0, rho_inf);
    s.sigma_ = sigma;
    s.center_ = center;
    if (!(sigma > 0.0)) throw DomainError("well width must be positive");
    if (!std::isfinite(rho_inf)) throw DomainError("radial_well needs a finite rho_inf");
    return s;
  }
  static ScopeFunction radial_bump(double rho0, double rho_inf, double sigma, Point center = {}) {
    ScopeFunction s = radial_well(rho0, rho_inf, sigma, center);
    s.kind_ = ScopeKind::radial_bump;
    return s;
  }
  static ScopeFunction linear_growth(double rho0, double slope, double a, Point center = {}) {
    ScopeFunction s(ScopeKind::linear_growth, rho0, std::numeric_limits<double>::infinity());
    s.slope_ = slope;
    s.a_ = a;
    s.center_ = center;
    if (!(slope >= 0.0)) throw DomainError("slope must be nonnegative");
    return s;
  }

  ScopeKind kind() const { return kind_; }
  double rho0() const { return rho0_ / scale_; }
  double rho_inf() const { return rho_inf_ / scale_; }
  bool unbounded() const { return !std::isfinite(rho_inf_); }
  double a() const { return a_; }
  double sigma() const { return sigma_; }
  double value() const { return value_ / scale_; }
  double slope() const { return slope_; }
  const Point& center() const { return center_; }
  double scale() const { return scale_; }
  const Point& shift() const { return shift_; }

  /// Location of the family's minimum in the scope's own coordinates.
  Point argmin_point() const {
    Point p{};
    for (int d = 0; d < kMaxDim; ++d) p[d] = (center_[d] - shift_[d]) / scale_;
    return p;
  }

  double operator()(const Point& x, int n) const {
    Point y{};
    for (int d = 0; d < n; ++d) y[d] = scale_ * x[d] + shift_[d];
    return base(y, n) / scale_;
  }

  /// x -> rho(eps x + eps z) / eps, composed with any existing reparametrisation.
  ScopeFunction rescaled(double eps, const Point& z) const {
    if (!(eps > 0.0)) throw DomainError("rescale: eps must be > 0");
    ScopeFunction r = *this;
    // rho_old(x) = base(s x + t)/s; new(x) = rho_old(eps x + eps z)/eps
    //           = base(s eps x + s eps z + t)/(s eps)
    for (int d = 0; d < kMaxDim; ++d) r.shift_[d] = scale_ * eps * z[d] + shift_[d];
    r.scale_ = scale_ * eps;
    return r;
  }

 private:
  ScopeFunction(ScopeKind kind, double rho0, double rho_inf)
      : kind_(kind), rho0_(rho0), rho_inf_(rho_inf) {
    if (!(rho0 > 0.0)) throw DomainError("rho0 must be > 0");
    if (!(rho_inf > rho0)) throw DomainError("rho_inf must exceed rho0");
  }

  double base(const Point& y, int n) const {
    double r2 = 0.0;
    for (int d = 0; d < n; ++d) r2 += (y[d] - center_[d]) * (y[d] - center_[d]);
    switch (kind_) {
      case ScopeKind::constant: return value_;
      case ScopeKind::radial_well:
        return rho_inf_ - (rho_inf_ - rho0_) * std::exp(-r2 / (sigma_ * sigma_));
      case ScopeKind::radial_bump:
        return rho_inf_ - (rho_inf_ - rho0_) / (1.0 + r2 / (sigma_ * sigma_));
      case ScopeKind::linear_growth: return rho0_ + slope_ * std::sqrt(r2);
    }
    return value_;
  }

  ScopeKind kind_;
  double rho0_;
  double rho_inf_;
  double a_ = 0.5;
  double sigma_ = 1.0;
  double value_ = 1.0;
  double slope_ = 0.0;
  Point center_{};
  double scale_ = 1.0;
  Point shift_{};
};

// ---------------------------------------------------------------------------
// Hypothesis predicates
// ---------------------------------------------------------------------------

struct HypothesisReport {
  bool rho1 = false;               // rho0 <= rho(x) < rho_inf on all samples
  std::optional<bool> rho3;        // asymptotic slope <= a; only when rho_inf = inf
  bool continuous = false;         // sampled modulus of continuity shrinks with spacing
  std::string rho2 = "not checked";  // C^1 surface condition is not verified
  double min_sampled = 0.0;
  double max_sampled = 0.0;
  double asymptotic_slope = 0.0;   // meaningful only for unbounded scopes
};

namespace detail {
// Directions used for ray sampling: +-e_d and the normalised diagonals.
inline std::vector<Point> sample_directions(int n) {
  std::vector<Point> dirs;
  for (int d = 0; d < n; ++d) {
    Point e{};
    e[d] = 1.0;
    dirs.push_back(e);
    e[d] = -1.0;
    dirs.push_back(e);
  }
  if (n >= 2) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      Point e{};
      for (int d = 0; d < n; ++d) e[d] = ((mask >> d) & 1 ? -1.0 : 1.0) / std::sqrt(double(n));
      dirs.push_back(e);
    }
  }
  return dirs;
}
}  // namespace detail

/// Samples rho on the grid and along rays out to radius 10 L.
inline HypothesisReport check_hypotheses(const ScopeFunction& rho, const GridSpec& grid) {
  const int n = grid.n();
  const double L = grid.extent();
  const double r0 = rho.rho0();
  const double rinf = rho.rho_inf();
  const double tol = 1e-12 * std::max(1.0, r0);
  HypothesisReport rep;
  rep.min_sampled = std::numeric_limits<double>::infinity();
  rep.max_sampled = -std::numeric_limits<double>::infinity();
  bool ok = true;
  // A well saturates to rho_inf in floating point a few widths out, so the
  // upper bound is checked non-strictly.
  auto record = [&](double v) {
    rep.min_sampled = std::min(rep.min_sampled, v);
    rep.max_sampled = std::max(rep.max_sampled, v);
    if (!(v >= r0 - tol) || !(v <= rinf)) ok = false;
  };
  for (std::size_t i = 0; i < grid.size(); ++i) record(rho(grid.point(i), n));

  const auto dirs = detail::sample_directions(n);
  const int ray_samples = 400;
  const double r_max = 10.0 * L;
  double worst_slope = 0.0;
  double coarse_jump = 0.0, fine_jump = 0.0;
  for (const Point& dir : dirs) {
    auto at = [&](double r) {
      Point x{};
      for (int d = 0; d < n; ++d) x[d] = r * dir[d];
      return rho(x, n);
    };
    for (int k = 0; k <= ray_samples; ++k) record(at(r_max * k / ray_samples));
    const double step = grid.h();
    for (int k = 0; k < 4 * grid.points(); ++k) {
      const double r = k * step / 4.0;
      coarse_jump = std::max(coarse_jump, std::abs(at(r + step / 4.0) - at(r)));
      fine_jump = std::max(fine_jump, std::abs(at(r + step / 8.0) - at(r)));
    }
    if (rho.unbounded()) {
      // Secant slope between 5L and 10L estimates limsup rho(x)/|x| for
      // asymptotically linear scopes.
      worst_slope = std::max(worst_slope, (at(r_max) - at(0.5 * r_max)) / (0.5 * r_max));
    }
  }
  rep.rho1 = ok;
  rep.continuous = fine_jump <= 0.75 * coarse_jump + 1e-12;
  if (rho.unbounded()) {
    rep.asymptotic_slope = worst_slope;
    rep.rho3 = worst_slope <= rho.a() + 1e-9;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Talenti-type extremal and its concentrating rescaling
// ---------------------------------------------------------------------------

/// Samples c / (theta^2 + |x - x0|^2)^{(n - 2 alpha)/2}.
inline GridFunction talenti_extremal(const ProblemParams& params, const GridSpec& grid, double c,
                                     double theta, const Point& x0 = {}) {
  if (!(theta > 0.0)) throw DomainError("talenti_extremal: theta must be > 0");
  if (grid.n() != params.n()) throw ShapeError("grid dimension differs from params.n");
  const int n = grid.n();
  const double expo = 0.5 * (n - 2.0 * params.alpha());
  return GridFunction::sample(grid, [&](const Point& x) {
    double r2 = 0.0;
    for (int d = 0; d < n; ++d) r2 += (x[d] - x0[d]) * (x[d] - x0[d]);
    return c / std::pow(theta * theta + r2, expo);
  });
}

namespace detail {
inline double lp_sum(const GridFunction& u, double p) {
  double s = 0.0;
  for (double v : u.values()) s += std::pow(std::abs(v), p);
  return s * u.spec().cell_volume();
}
}  // namespace detail

/// U_eps(x) = eps^{-(n-2a)/2} u~(x / (eps S^{1/(2a)})), u~ = u0 / ||u0||_{2*}.
/// Resampled by multilinear interpolation; zero outside the box.
inline GridFunction rescale_U_eps(const GridFunction& u0, const ProblemParams& params, double eps,
                                  double S_est) {
  if (!(eps > 0.0)) throw DomainError("rescale_U_eps: eps must be > 0");
  if (!(S_est > 0.0)) throw DomainError("rescale_U_eps: S_est must be > 0");
  if (u0.is_zero()) throw DomainError("rescale_U_eps: u0 must be nonzero");
  const int n = params.n();
  const double a = params.alpha();
  const double norm2s = std::pow(detail::lp_sum(u0, params.crit_exp()), 1.0 / params.crit_exp());
  const double amp = std::pow(eps, -0.5 * (n - 2.0 * a)) / norm2s;
  const double dil = eps * std::pow(S_est, 1.0 / (2.0 * a));
  return GridFunction::sample(u0.spec(), [&](const Point& x) {
    Point y{};
    for (int d = 0; d < n; ++d) y[d] = x[d] / dil;
    return amp * u0.interpolate(y);
  });
}

}  // namespace regional

#endif  // REGIONAL_MODEL_HPP
