#ifndef REGIONAL_CONCENTRATION_HPP
#define REGIONAL_CONCENTRATION_HPP

// Concentration function H, epsilon sweeps and the asymptotic ratio check.
//
//   H(x) = -(|S^{n-1}| / 2a) (rho(x)^{-2a} - rho_inf^{-2a})
//          + 1/2 int_{C+(x)} |y|^{-n-2a} dy - 1/2 int_{C-(x)} |y|^{-n-2a} dy
//
//   C+(x) = { rho(x) < |y| < rho(x+y) },  C-(x) = { rho(x+y) < |y| < rho(x) }

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "regional/errors.hpp"
#include "regional/forms.hpp"
#include "regional/functionals.hpp"
#include "regional/model.hpp"
#include "regional/parallel.hpp"
#include "regional/solver.hpp"

namespace regional {

struct HQuadrature {
  int angular = 64;  // directions in 2-D, azimuths in 3-D; 1-D always uses +-1
  int radial = 400;  // nodes on each side of rho(x)
};

struct Direction {
  Point omega{};
  double weight = 0.0;
};

/// Angular rule whose weights sum to |S^{n-1}|.
inline std::vector<Direction> angular_rule(int n, int count) {
  std::vector<Direction> dirs;
  if (n == 1) {
    dirs.push_back({{1.0, 0.0, 0.0}, 1.0});
    dirs.push_back({{-1.0, 0.0, 0.0}, 1.0});
  } else if (n == 2) {
    for (int j = 0; j < count; ++j) {
      const double t = 2.0 * std::numbers::pi * (j + 0.5) / count;
      dirs.push_back({{std::cos(t), std::sin(t), 0.0}, 2.0 * std::numbers::pi / count});
    }
  } else {
    // Midpoint in cos(polar) times uniform azimuth.
    const int polar = std::max(2, count / 2);
    for (int i = 0; i < polar; ++i) {
      const double c = -1.0 + 2.0 * (i + 0.5) / polar;
      const double s = std::sqrt(1.0 - c * c);
      for (int j = 0; j < count; ++j) {
        const double t = 2.0 * std::numbers::pi * (j + 0.5) / count;
        dirs.push_back({{s * std::cos(t), s * std::sin(t), c},
                        (2.0 / polar) * (2.0 * std::numbers::pi / count)});
      }
    }
  }
  return dirs;
}

namespace detail {

// int_a^b r^{-1-2 alpha} dr
inline double radial_kernel_integral(double a, double b, double alpha) {
  return (std::pow(a, -2.0 * alpha) - std::pow(b, -2.0 * alpha)) / (2.0 * alpha);
}

// Largest |y| that can belong to C+(x) along any direction.
inline double h_radius_bound(const ScopeFunction& rho, double rho_x) {
  if (!rho.unbounded()) return rho.rho_inf();
  if (rho.kind() == ScopeKind::linear_growth && rho.slope() < 1.0)
    return rho_x / (1.0 - rho.slope()) * (1.0 + 1e-12);
  throw DomainError("eval_H: C+ is unbounded for this scope (growth slope >= 1)");
}

}  // namespace detail

/// Closed-form first term of H.
inline double H_local_term(double rho_x, const ScopeFunction& rho, int n, double alpha) {
  const double inf_term = rho.unbounded() ? 0.0 : std::pow(rho.rho_inf(), -2.0 * alpha);
  return -sphere_measure(n) / (2.0 * alpha) * (std::pow(rho_x, -2.0 * alpha) - inf_term);
}

inline double eval_H(const Point& x, const ScopeFunction& rho, int n, double alpha,
                     const HQuadrature& quad = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("eval_H: alpha must lie in (0,1)");
  const double rx = rho(x, n);
  const double r_lo = std::min(rho.rho0(), rx);
  const double r_hi = std::max(detail::h_radius_bound(rho, rx), rx);
  const int N = std::max(8, quad.radial);
  double geometric = 0.0;
  std::vector<double> breaks;
  for (const Direction& dir : angular_rule(n, quad.angular)) {
    auto g = [&](double r) {
      Point y = x;
      for (int d = 0; d < n; ++d) y[d] += r * dir.omega[d];
      return rho(y, n) - r;
    };
    // Nodes cluster quadratically at r = rho(x), where membership flips.
    breaks.clear();
    for (int j = 0; j <= N; ++j) {
      const double s = double(N - j) / N;
      breaks.push_back(r_lo + (rx - r_lo) * (1.0 - s * s));
    }
    for (int j = 1; j <= N; ++j) {
      const double s = double(j) / N;
      breaks.push_back(rx + (r_hi - rx) * s * s);
    }
    const std::size_t nodes = breaks.size();
    for (std::size_t j = 0; j + 1 < nodes; ++j) {
      double a = breaks[j], b = breaks[j + 1];
      if (!(b > a)) continue;
      double ga = g(a), gb = g(b);
      if ((ga > 0.0) == (gb > 0.0)) continue;
      for (int it = 0; it < 80 && b - a > 1e-15 * b; ++it) {
        const double mid = 0.5 * (a + b);
        const double gm = g(mid);
        if ((gm > 0.0) == (ga > 0.0)) {
          a = mid;
          ga = gm;
        } else {
          b = mid;
        }
      }
      breaks.push_back(0.5 * (a + b));
    }
    std::sort(breaks.begin(), breaks.end());
    double plus = 0.0, minus = 0.0;
    for (std::size_t j = 0; j + 1 < breaks.size(); ++j) {
      const double a = breaks[j], b = breaks[j + 1];
      if (!(b > a)) continue;
      const double mid = 0.5 * (a + b);
      const double gm = g(mid);
      if (mid > rx && gm > 0.0) plus += detail::radial_kernel_integral(a, b, alpha);
      else if (mid < rx && gm < 0.0) minus += detail::radial_kernel_integral(a, b, alpha);
    }
    geometric += dir.weight * (plus - minus);
  }
  return H_local_term(rx, rho, n, alpha) + 0.5 * geometric;
}

// ---------------------------------------------------------------------------
// Minimisation of H
// ---------------------------------------------------------------------------

struct HSearch {
  double half_width = 8.0;
  int coarse = 81;      // points per axis in 1-D; 2-D and 3-D use fewer
  int levels = 5;
  int candidates = 3;
  double decay_ratio = 0.1;
  HQuadrature quad{};
};

struct ConcentrationField {
  std::vector<Point> points;
  std::vector<double> values;
  Point argmin{};
  double min_value = 0.0;
  double boundary_max = 0.0;
  double cell = 0.0;  // spacing of the last refinement level
  int n = 1;
};

inline ConcentrationField find_H_minimum(const ScopeFunction& rho, int n, double alpha,
                                         const HSearch& opt = {}) {
  if (n < 1 || n > kMaxDim) throw DomainError("find_H_minimum: n must be 1, 2 or 3");
  if (!(opt.half_width > 0.0)) throw DomainError("find_H_minimum: half_width must be > 0");
  const int per_axis = n == 1 ? opt.coarse : (n == 2 ? std::max(9, opt.coarse / 4) : std::max(7, opt.coarse / 8));
  const double B = opt.half_width;
  const double spacing = 2.0 * B / (per_axis - 1);
  ConcentrationField f;
  f.n = n;

  std::vector<Point> coarse;
  std::array<int, kMaxDim> idx{};
  const std::size_t total = static_cast<std::size_t>(std::pow(per_axis, n));
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t rem = k;
    Point p{};
    for (int d = n - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(rem % per_axis);
      rem /= per_axis;
      p[d] = -B + idx[d] * spacing;
    }
    coarse.push_back(p);
  }
  std::vector<double> hv(coarse.size());
  parallel_for(coarse.size(), [&](std::size_t k) { hv[k] = eval_H(coarse[k], rho, n, alpha, opt.quad); });
  f.points = coarse;
  f.values = hv;

  std::vector<std::size_t> order(coarse.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hv[a] < hv[b]; });
  Point best = coarse[order[0]];
  double best_val = hv[order[0]];

  const int cands = std::min<int>(opt.candidates, static_cast<int>(order.size()));
  double cell = spacing;
  for (int c = 0; c < cands; ++c) {
    Point cur = coarse[order[c]];
    double cur_val = hv[order[c]];
    double step = spacing;
    for (int level = 0; level < opt.levels; ++level) {
      step /= 4.0;
      const int half = 4;
      const int side = 2 * half + 1;
      const std::size_t local = static_cast<std::size_t>(std::pow(side, n));
      std::vector<Point> pts(local);
      for (std::size_t k = 0; k < local; ++k) {
        std::size_t rem = k;
        Point p = cur;
        for (int d = n - 1; d >= 0; --d) {
          p[d] = std::clamp(cur[d] + (static_cast<int>(rem % side) - half) * step, -B, B);
          rem /= side;
        }
        pts[k] = p;
      }
      std::vector<double> vals(local);
      parallel_for(local, [&](std::size_t k) { vals[k] = eval_H(pts[k], rho, n, alpha, opt.quad); });
      for (std::size_t k = 0; k < local; ++k) {
        f.points.push_back(pts[k]);
        f.values.push_back(vals[k]);
        if (vals[k] < cur_val) {
          cur_val = vals[k];
          cur = pts[k];
        }
      }
    }
    cell = step;
    if (cur_val < best_val) {
      best_val = cur_val;
      best = cur;
    }
  }
  f.argmin = best;
  f.min_value = best_val;
  f.cell = cell;

  // Decay check on the boundary of the search box.
  double bmax = 0.0;
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    bool on_boundary = false;
    for (int d = 0; d < n; ++d)
      if (std::abs(std::abs(coarse[k][d]) - B) < 1e-12 * B) on_boundary = true;
    if (on_boundary) bmax = std::max(bmax, std::abs(hv[k]));
  }
  f.boundary_max = bmax;
  if (!(best_val < 0.0)) {
    std::ostringstream msg;
    msg << "find_H_minimum: H has no negative value in the search box (min " << best_val << ")";
    throw DomainError(msg.str());
  }
  if (!(bmax < opt.decay_ratio * std::abs(best_val))) {
    std::ostringstream msg;
    msg << "find_H_minimum: decay check failed, enlarge the search box (|H| on boundary " << bmax
        << ", H(x0) " << best_val << ", half_width " << B << ")";
    throw DomainError(msg.str());
  }
  return f;
}

inline ScopeFunction rescale_scope(const ScopeFunction& rho, double eps, const Point& z = {}) {
  return rho.rescaled(eps, z);
}

// ---------------------------------------------------------------------------
// Asymptotic ratio
// ---------------------------------------------------------------------------

struct RatioCheck {
  double ratio = 0.0;       // (I_rhobar(w) - I_{rho_inf/eps}(w)) / eps^{2 alpha}
  double prediction = 0.0;  // ||w||^2 H(eps z)
  double gap = 0.0;
  double complement = 0.0;
  bool truncated = false;   // rho_inf/eps beyond the kernel table's reach
};

inline RatioCheck asymptotic_ratio_check(const GridFunction& w, const ScopeFunction& rho, double alpha,
                                         double eps, const Point& z, const HQuadrature& quad = {}) {
  if (!(eps > 0.0)) throw DomainError("asymptotic_ratio_check: eps must be > 0");
  const int n = w.spec().n();
  const ScopeFunction bar = rho.rescaled(eps, z);
  const double outer = rho.unbounded() ? kInfinity : rho.rho_inf() / eps;
  RatioCheck rc;
  rc.complement = complement_form(w, bar, outer, alpha);
  rc.ratio = -0.5 * rc.complement / std::pow(eps, 2.0 * alpha);
  Point ez{};
  for (int d = 0; d < n; ++d) ez[d] = eps * z[d];
  rc.prediction = l2_inner(w, w) * eval_H(ez, rho, n, alpha, quad);
  rc.gap = std::abs(rc.ratio - rc.prediction);
  rc.truncated = outer > 2.0 * w.spec().extent();
  return rc;
}

// ---------------------------------------------------------------------------
// Epsilon sweep
// ---------------------------------------------------------------------------

struct SweepOptions {
  std::vector<double> eps = {0.5, 0.35, 0.25, 0.18, 0.125};
  HSearch h_search{};
  bool ratio_check = true;
};

struct SweepEntry {
  double eps = 0.0;
  double c_value = 0.0;
  double noise = 0.0;
  double grad_norm = 0.0;
  int iters = 0;
  Point y_eps{};
  Point eps_y_eps{};
  double mass = 0.0;
  double local_mass = 0.0;  // mass of v in B(y_eps, R)
  bool nondegenerate = false;
  double H_at_eps_y = 0.0;
  double recentring_gap = 0.0;
  RatioCheck ratio{};
  GridFunction v;
  GridFunction w;
};

struct SweepReport {
  std::vector<SweepEntry> entries;
  SolveReport limit;
  SobolevEstimate sobolev;
  double bound = 0.0;
  std::optional<ConcentrationField> field;
  std::string field_error;
  double R = 0.0;
  double beta = 0.0;
  bool all_below_C = false;
};

namespace detail {

inline double ball_mass(const GridFunction& v, const Point& c, double R) {
  const auto& g = v.spec();
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point x = g.point(i);
    double r2 = 0.0;
    for (int d = 0; d < g.n(); ++d) r2 += (x[d] - c[d]) * (x[d] - c[d]);
    if (r2 < R * R) s += v[i] * v[i];
  }
  return s * g.cell_volume();
}

}  // namespace detail

inline SweepReport run_eps_sweep(const ProblemParams& params, const ScopeFunction& rho,
                                 const GridSpec& grid, const SolverConfig& cfg,
                                 const SweepOptions& opt = {}) {
  if (opt.eps.empty()) throw ValidationError("eps", "empty eps list");
  for (std::size_t i = 0; i < opt.eps.size(); ++i) {
    if (!(opt.eps[i] > 0.0)) throw ValidationError("eps", "values must be > 0");
    if (i > 0 && !(opt.eps[i] < opt.eps[i - 1])) throw ValidationError("eps", "must be strictly decreasing");
    if (rho.rho0() / opt.eps[i] > grid.extent())
      throw DomainError("run_eps_sweep: rho0/eps exceeds the box half-width");
  }
  const int n = params.n();
  const double alpha = params.alpha();
  const ProblemParams base = params.with_eps(1.0);
  SweepReport rep;
  rep.limit = solve_limit_ground_state(base, grid, cfg);
  rep.sobolev = estimate_sobolev_constant(base, grid);
  rep.bound = critical_bound(base, rep.sobolev.S_est);
  try {
    rep.field = find_H_minimum(rho, n, alpha, opt.h_search);
  } catch (const DomainError& e) {
    rep.field_error = e.what();
  }

  const std::size_t E = opt.eps.size();
  rep.entries.resize(E);
  std::vector<std::optional<SolveReport>> solves(E);
  parallel_for(E, [&](std::size_t i) {
    const ScopeFunction scoped = rho.rescaled(opt.eps[i], {});
    solves[i] = solve_ground_state(base, scoped, grid, cfg);
  });

  const double h = grid.h();
  for (std::size_t i = 0; i < E; ++i) {
    const double eps = opt.eps[i];
    const SolveReport& s = *solves[i];
    SweepEntry& e = rep.entries[i];
    e.eps = eps;
    e.c_value = s.c_value;
    e.noise = s.noise;
    e.grad_norm = s.grad_norm;
    e.iters = s.iters;
    e.mass = s.mass;
    e.v = s.u_star;
    // Recentre by the nearest lattice vector to the maximiser.
    std::array<int, kMaxDim> shift{};
    for (int d = 0; d < n; ++d) {
      shift[d] = static_cast<int>(std::lround(s.maximizer[d] / h));
      e.y_eps[d] = shift[d] * h;
      e.eps_y_eps[d] = eps * e.y_eps[d];
    }
    e.w = shift_lattice(s.u_star, shift);
    const ScopeFunction scoped = rho.rescaled(eps, {});
    const ScopeFunction bar = rho.rescaled(eps, e.y_eps);
    const double quad_v = regional_form(e.v, e.v, scoped, alpha);
    const double quad_w = regional_form(e.w, e.w, bar, alpha);
    e.recentring_gap = std::abs(0.5 * (quad_v + l2_inner(e.v, e.v)) - 0.5 * (quad_w + l2_inner(e.w, e.w)));
    e.H_at_eps_y = eval_H(e.eps_y_eps, rho, n, alpha, opt.h_search.quad);
    if (opt.ratio_check) e.ratio = asymptotic_ratio_check(e.w, rho, alpha, eps, e.y_eps, opt.h_search.quad);
  }
  rep.R = 2.0 * rho.rho0();
  rep.beta = 0.5 * detail::ball_mass(rep.entries.front().v, rep.entries.front().y_eps, rep.R);
  rep.all_below_C = true;
  for (auto& e : rep.entries) {
    e.local_mass = detail::ball_mass(e.v, e.y_eps, rep.R);
    e.nondegenerate = e.local_mass >= rep.beta;
    if (!(e.c_value < rep.limit.c_value)) rep.all_below_C = false;
  }
  return rep;
}

}  // namespace regional

#endif  // REGIONAL_CONCENTRATION_HPP
