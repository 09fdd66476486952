#ifndef REGIONAL_SOLVER_HPP
#define REGIONAL_SOLVER_HPP

// Ground states by Nehari-projected descent.
//
// Each step moves along the Sobolev gradient d = (kappa A + I)^{-1} g, truncates
// to the positive part and projects back onto the Nehari set along the ray.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "regional/errors.hpp"
#include "regional/functionals.hpp"
#include "regional/model.hpp"
#include "regional/parallel.hpp"

namespace regional {

enum class SeedKind { talenti, gaussian, shifted_gaussian };

inline std::string to_string(SeedKind k) {
  switch (k) {
    case SeedKind::talenti: return "talenti";
    case SeedKind::gaussian: return "gaussian";
    case SeedKind::shifted_gaussian: return "shifted_gaussian";
  }
  return "?";
}

inline SeedKind seed_kind_from_string(const std::string& s) {
  if (s == "talenti") return SeedKind::talenti;
  if (s == "gaussian") return SeedKind::gaussian;
  if (s == "shifted_gaussian" || s == "shifted-gaussian" || s == "shifted") return SeedKind::shifted_gaussian;
  throw ValidationError("solver.seeds", "unknown seed kind '" + s + "'");
}

struct SeedSpec {
  SeedKind kind = SeedKind::gaussian;
  double width = 1.0;
  double shift = 0.0;  // fraction of the box half-width, along the first axis
};

struct SolverConfig {
  int max_iters = 2000;
  double armijo_c1 = 1e-4;
  double initial_step = 1.0;
  int max_halvings = 40;
  double grad_tol = 1e-8;
  double nehari_tol = 1e-10;
  double jitter = 1e-3;
  std::uint64_t seed = 0;
  std::vector<SeedSpec> seeds = {{SeedKind::talenti, 1.0, 0.0},
                                 {SeedKind::gaussian, 1.0, 0.0},
                                 {SeedKind::shifted_gaussian, 1.0, 0.25}};

  void validate() const {
    if (!(grad_tol > 0.0)) throw ValidationError("solver.grad_tol", "must be > 0");
    if (!(nehari_tol > 0.0)) throw ValidationError("solver.nehari_tol", "must be > 0");
    if (max_iters < 1) throw ValidationError("solver.max_iters", "must be >= 1");
    if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) throw ValidationError("solver.armijo_c1", "must lie in (0, 1)");
    if (!(initial_step > 0.0)) throw ValidationError("solver.initial_step", "must be > 0");
    if (max_halvings < 1) throw ValidationError("solver.max_halvings", "must be >= 1");
    if (!(jitter >= 0.0 && jitter < 0.5)) throw ValidationError("solver.jitter", "must lie in [0, 0.5)");
    if (seeds.empty()) throw ValidationError("solver.seeds", "at least one seed is required");
    for (const auto& s : seeds)
      if (!(s.width > 0.0)) throw ValidationError("solver.seeds", "seed width must be > 0");
  }
};

struct SeedOutcome {
  SeedKind kind = SeedKind::gaussian;
  double c_value = 0.0;
  double grad_norm = 0.0;
  int iters = 0;
  bool converged = false;
  std::string stop_reason;
};

struct SolveReport {
  GridFunction u_star;
  double c_value = 0.0;
  double grad_norm = 0.0;
  int iters = 0;
  Point maximizer{};
  std::size_t maximizer_index = 0;
  double mass = 0.0;
  double positivity_violation = 0.0;
  double nehari_residual = 0.0;
  bool converged = false;
  std::size_t best_seed = 0;
  std::vector<SeedOutcome> seeds;
  double noise = 0.0;  // spread of c over converged seeds
  std::size_t clamp_events = 0;
  std::vector<double> energy_trace;  // energies of accepted iterates, best seed
};

namespace detail {

inline GridFunction make_seed(const SeedSpec& s, const ProblemParams& params, const GridSpec& grid,
                              const Point& center, double jitter, std::uint64_t rng_seed) {
  Point c = center;
  c[0] += s.shift * grid.extent();
  GridFunction u(grid);
  if (s.kind == SeedKind::talenti) {
    u = talenti_extremal(params, grid, 1.0, s.width, c);
  } else {
    const int n = grid.n();
    u = GridFunction::sample(grid, [&](const Point& x) {
      double r2 = 0.0;
      for (int d = 0; d < n; ++d) r2 += (x[d] - c[d]) * (x[d] - c[d]);
      return std::exp(-r2 / (s.width * s.width));
    });
  }
  if (jitter > 0.0) {
    // Radial modulation about the seed centre, so reflection symmetries of the
    // seed survive and no spurious translation mode is excited.
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const double a1 = dist(rng), a2 = dist(rng);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const Point x = grid.point(i);
      double r2 = 0.0;
      for (int d = 0; d < grid.n(); ++d) r2 += (x[d] - c[d]) * (x[d] - c[d]);
      const double r = std::sqrt(r2) / s.width;
      u[i] *= 1.0 + 0.5 * jitter * (a1 * std::cos(r) + a2 * std::cos(2.0 * r));
    }
  }
  return u;
}

struct DescentResult {
  GridFunction u;
  double energy = 0.0;
  double grad_norm = 0.0;
  int iters = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> trace;
};

inline DescentResult nehari_descent(const Functional& F, const Eigen::LLT<Eigen::MatrixXd>& precond,
                                    GridFunction u, const SolverConfig& cfg) {
  const std::size_t N = u.size();
  DescentResult r{.u = u};
  auto project = [&](GridFunction v) -> std::optional<GridFunction> {
    v = v.positive_part();
    if (v.is_zero()) return std::nullopt;
    const auto np = F.nehari_project(v, 1e-12);
    return np.t * v;
  };
  auto start = project(std::move(u));
  if (!start) throw DomainError("seed has no positive part");
  r.u = std::move(*start);
  r.energy = F.energy(r.u).total;
  r.trace.push_back(r.energy);
  Eigen::VectorXd gv(N);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const GridFunction g = F.gradient(r.u);
    r.grad_norm = std::sqrt(l2_inner(g, g));
    r.iters = it;
    if (r.grad_norm <= cfg.grad_tol) {
      r.converged = true;
      r.stop_reason = "grad_tol";
      return r;
    }
    for (std::size_t i = 0; i < N; ++i) gv[i] = g[i];
    const Eigen::VectorXd dv = precond.solve(gv);
    GridFunction d(r.u.spec());
    for (std::size_t i = 0; i < N; ++i) d[i] = dv[i];
    const double slope = l2_inner(g, d);
    if (!(slope > 0.0)) {
      r.stop_reason = "non-descent direction";
      return r;
    }
    double s = cfg.initial_step;
    bool accepted = false;
    for (int k = 0; k < cfg.max_halvings; ++k, s *= 0.5) {
      GridFunction trial = r.u;
      for (std::size_t i = 0; i < N; ++i) trial[i] -= s * d[i];
      auto next = project(std::move(trial));
      if (!next) continue;
      const double delta = F.energy_difference(*next, r.u);
      if (delta <= -cfg.armijo_c1 * s * slope) {
        r.u = std::move(*next);
        r.energy += delta;
        r.trace.push_back(r.energy);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      r.stop_reason = "line search failed";
      r.energy = F.energy(r.u).total;
      return r;
    }
  }
  const GridFunction g = F.gradient(r.u);
  r.grad_norm = std::sqrt(l2_inner(g, g));
  r.iters = cfg.max_iters;
  r.converged = r.grad_norm <= cfg.grad_tol;
  r.stop_reason = r.converged ? "grad_tol" : "max_iters";
  r.energy = F.energy(r.u).total;
  return r;
}

}  // namespace detail

/// Minimum of I over the discrete Nehari set, from several seeds.
inline SolveReport solve_ground_state(const ProblemParams& params, const Scope& scope,
                                      const GridSpec& grid, const SolverConfig& cfg = {}) {
  cfg.validate();
  if (grid.n() != params.n()) throw ShapeError("grid dimension differs from params.n");
  Point center{};
  if (const auto* rho = std::get_if<ScopeFunction>(&scope)) {
    const auto hyp = check_hypotheses(*rho, grid);
    if (!hyp.rho1) throw DomainError("scope violates rho0 <= rho < rho_inf");
    if (hyp.rho3 && !*hyp.rho3) throw DomainError("scope violates the growth bound rho(x) <= rho0 + a|x|");
    center = rho->argmin_point();
    for (int d = 0; d < grid.n(); ++d) center[d] = std::clamp(center[d], -grid.extent(), grid.extent());
  }
  const Functional F = Functional::for_scope(params, grid, scope);
  Eigen::MatrixXd M = F.diffusion() * F.form().dense_matrix();
  M.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> precond(M);
  if (precond.info() != Eigen::Success) throw DomainError("preconditioner is not positive definite");

  const std::size_t S = cfg.seeds.size();
  std::vector<std::optional<detail::DescentResult>> results(S);
  std::vector<std::string> failures(S);
  parallel_for(S, [&](std::size_t k) {
    try {
      GridFunction u0 = detail::make_seed(cfg.seeds[k], params, grid, center, cfg.jitter,
                                          cfg.seed * 0x9E3779B97F4A7C15ULL + k);
      results[k] = detail::nehari_descent(F, precond, std::move(u0), cfg);
    } catch (const DomainError& e) {
      failures[k] = e.what();
    }
  });

  SolveReport rep{.u_star = GridFunction(grid)};
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < S; ++k) {
    SeedOutcome o{.kind = cfg.seeds[k].kind};
    if (results[k]) {
      o.c_value = results[k]->energy;
      o.grad_norm = results[k]->grad_norm;
      o.iters = results[k]->iters;
      o.converged = results[k]->converged;
      o.stop_reason = results[k]->stop_reason;
    } else {
      o.stop_reason = failures[k];
    }
    rep.seeds.push_back(o);
    if (!o.converged) continue;
    if (!best) {
      best = k;
      continue;
    }
    const auto& b = rep.seeds[*best];
    const double tie = 1e-12 * std::max(1.0, std::abs(b.c_value));
    if (o.c_value < b.c_value - tie ||
        (std::abs(o.c_value - b.c_value) <= tie && o.grad_norm < b.grad_norm))
      best = k;
  }
  rep.clamp_events = F.clamp_events();
  if (!best || rep.clamp_events > 0) {
    std::ostringstream msg;
    msg << "no seed converged";
    if (rep.clamp_events > 0) msg << " (" << rep.clamp_events << " clamp events)";
    for (const auto& o : rep.seeds)
      msg << "; " << to_string(o.kind) << ": " << o.stop_reason << ", |g|=" << o.grad_norm
          << ", iters=" << o.iters;
    throw ConvergenceError(msg.str());
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& o : rep.seeds)
    if (o.converged) {
      lo = std::min(lo, o.c_value);
      hi = std::max(hi, o.c_value);
    }
  rep.noise = hi - lo;
  auto& win = *results[*best];
  rep.best_seed = *best;
  rep.u_star = std::move(win.u);
  rep.c_value = F.energy(rep.u_star).total;
  rep.grad_norm = win.grad_norm;
  rep.iters = win.iters;
  rep.converged = true;
  rep.energy_trace = std::move(win.trace);
  rep.maximizer_index = rep.u_star.argmax();
  rep.maximizer = grid.point(rep.maximizer_index);
  rep.mass = l2_inner(rep.u_star, rep.u_star);
  rep.positivity_violation = std::max(0.0, -rep.u_star.min());
  rep.nehari_residual = F.nehari_energy_identity(rep.u_star).residual;
  return rep;
}

inline SolveReport solve_limit_ground_state(const ProblemParams& params, const GridSpec& grid,
                                            const SolverConfig& cfg = {}) {
  return solve_ground_state(params, FullRange{}, grid, cfg);
}

struct LambdaRow {
  double lambda = 0.0;
  double c_value = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

struct LambdaScan {
  std::vector<LambdaRow> rows;
  std::optional<double> lambda0;  // smallest scanned lambda with c < bound
  bool monotone = true;           // c nonincreasing in lambda
  double S_est = 0.0;
};

inline LambdaScan lambda_scan(const ProblemParams& params, const std::vector<double>& lambdas,
                              const Scope& scope, const GridSpec& grid, const SolverConfig& cfg,
                              double S_est) {
  if (lambdas.empty()) throw ValidationError("lambdas", "empty lambda list");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] > lambdas[i - 1])) throw ValidationError("lambdas", "must be strictly increasing");
  if (!(lambdas.front() > 0.0)) throw ValidationError("lambdas", "must be > 0");
  LambdaScan scan;
  scan.S_est = S_est;
  const double bound = critical_bound(params, S_est);
  scan.rows.resize(lambdas.size());
  parallel_for(lambdas.size(), [&](std::size_t i) {
    const auto rep = solve_ground_state(params.with_lambda(lambdas[i]), scope, grid, cfg);
    scan.rows[i] = {lambdas[i], rep.c_value, bound, rep.c_value < bound};
  });
  for (std::size_t i = 0; i < scan.rows.size(); ++i) {
    if (!scan.lambda0 && scan.rows[i].satisfied) scan.lambda0 = scan.rows[i].lambda;
    if (i > 0 && scan.rows[i].c_value > scan.rows[i - 1].c_value) scan.monotone = false;
  }
  return scan;
}

}  // namespace regional

#endif  // REGIONAL_SOLVER_HPP
