#ifndef REGIONAL_FUNCTIONALS_HPP
#define REGIONAL_FUNCTIONALS_HPP

// Energy functionals
//
//   I_rho(u) = 1/2 (kappa B_rho(u,u) + ||u||^2) - lambda/(q+1) int u_+^{q+1} - 1/2* int u_+^{2*}
//
// with kappa = eps^{2 alpha}, their L2 gradients, Nehari projection and the
// discrete Sobolev quotient.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <variant>
#include <vector>

#include "regional/errors.hpp"
#include "regional/forms.hpp"
#include "regional/model.hpp"

namespace regional {

/// Tag selecting the full (unrestricted) kernel, i.e. the limit functional I.
struct FullRange {};
using Scope = std::variant<ScopeFunction, FullRange>;

inline NonlocalForm make_form(const GridSpec& grid, double alpha, const Scope& scope) {
  if (const auto* rho = std::get_if<ScopeFunction>(&scope))
    return NonlocalForm::regional(grid, alpha, *rho);
  return NonlocalForm::full(grid, alpha);
}

struct EnergyBreakdown {
  double quad = 0.0;   // 1/2 ||u||_rho^2
  double sub = 0.0;    // lambda/(q+1) int u_+^{q+1}
  double crit = 0.0;   // 1/2* int u_+^{2*}
  double total = 0.0;  // quad - sub - crit
};

struct NehariProjection {
  double t = 1.0;
  double residual = 0.0;  // |I'(t u)(t u)|
  double scale = 1.0;     // max(1, largest of the three terms at t)
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  int iterations = 0;
  std::vector<double> bracket_widths;  // relative width after each bisection
};

struct NehariIdentity {
  double lhs = 0.0;       // I(u)
  double rhs = 0.0;       // lambda (1/2 - 1/(q+1)) A + (alpha/n) B
  double gap = 0.0;
  double residual = 0.0;  // I'(u)u
  bool precondition_met = false;
};

struct RayMax {
  double t_star = 0.0;
  double value = 0.0;
  double best_sampled = 0.0;  // max of I(t u) over the log-spaced samples
  bool dominates = false;
};

namespace detail {

inline constexpr double kClampLimit = 1e6;

// a^p - b^p for a, b >= 0 without cancellation.
inline double pow_difference(double a, double b, double p) {
  if (a == b) return 0.0;
  if (a == 0.0) return -std::pow(b, p);
  if (b == 0.0) return std::pow(a, p);
  const double ratio = (a - b) / b;
  if (std::abs(ratio) < 0.5) return std::pow(b, p) * std::expm1(p * std::log1p(ratio));
  return std::pow(a, p) - std::pow(b, p);
}

}  // namespace detail

/// Energy functional bound to a precomputed nonlocal form.
class Functional {
 public:
  Functional(ProblemParams params, NonlocalForm form, double diffusion = 1.0)
      : params_(params), form_(std::make_shared<const NonlocalForm>(std::move(form))),
        kappa_(diffusion) {
    if (form_->grid().n() != params_.n()) throw ShapeError("form dimension differs from params.n");
    if (!(diffusion > 0.0)) throw DomainError("diffusion coefficient must be > 0");
  }

  /// eps^{2a} (-Delta)_rho^a scaling taken from params.eps().
  static Functional for_scope(const ProblemParams& params, const GridSpec& grid,
                              const Scope& scope) {
    return Functional(params, make_form(grid, params.alpha(), scope),
                      std::pow(params.eps(), 2.0 * params.alpha()));
  }

  const ProblemParams& params() const { return params_; }
  const NonlocalForm& form() const { return *form_; }
  double diffusion() const { return kappa_; }
  std::size_t clamp_events() const { return clamp_events_->load(); }

  /// ||u||_rho^2 including the diffusion coefficient.
  double quadratic(const GridFunction& u) const { return kappa_ * (*form_)(u, u) + l2_inner(u, u); }

  double sub_integral(const GridFunction& u) const {  // int u_+^{q+1}
    return power_integral(u, params_.q() + 1.0);
  }
  double crit_integral(const GridFunction& u) const {  // int u_+^{2*}
    return power_integral(u, params_.crit_exp());
  }

  EnergyBreakdown energy(const GridFunction& u) const {
    EnergyBreakdown e;
    e.quad = 0.5 * quadratic(u);
    e.sub = params_.lambda() / (params_.q() + 1.0) * sub_integral(u);
    e.crit = crit_integral(u) / params_.crit_exp();
    e.total = e.quad - e.sub - e.crit;
    return e;
  }

  /// I(a) - I(b) evaluated termwise, accurate when a and b are close.
  double energy_difference(const GridFunction& a, const GridFunction& b) const {
    const GridFunction diff = a - b;
    const GridFunction sum = a + b;
    const double quad = 0.5 * (kappa_ * (*form_)(diff, sum) + l2_inner(diff, sum));
    const double p1 = params_.q() + 1.0, p2 = params_.crit_exp();
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = clamp(std::max(a[i], 0.0)), y = clamp(std::max(b[i], 0.0));
      s1 += detail::pow_difference(x, y, p1);
      s2 += detail::pow_difference(x, y, p2);
    }
    const double hv = a.spec().cell_volume();
    return quad - params_.lambda() / p1 * s1 * hv - s2 * hv / p2;
  }

  /// L2 Riesz representative g of I'(u): I'(u)v = h^n <g, v>.
  GridFunction gradient(const GridFunction& u) const {
    GridFunction g = form_->apply(u);
    g *= kappa_;
    const double q = params_.q(), pc = params_.crit_exp(), lam = params_.lambda();
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double up = clamp(std::max(u[i], 0.0));
      // 0^{q} = 0 convention; q > 1 keeps this continuous.
      const double f = up > 0.0 ? lam * std::pow(up, q) + std::pow(up, pc - 1.0) : 0.0;
      g[i] += u[i] - f;
    }
    return g;
  }

  double derivative(const GridFunction& u, const GridFunction& v) const {
    return l2_inner(gradient(u), v);
  }

  /// Unique t > 0 with Q = lambda t^{q-1} A + t^{2*-2} B.
  NehariProjection nehari_project(const GridFunction& u, double tol_root = 1e-12) const {
    const double Q = quadratic(u);
    const double A = sub_integral(u);
    const double B = crit_integral(u);
    return solve_nehari(Q, A, B, tol_root);
  }

  NehariProjection solve_nehari(double Q, double A, double B, double tol_root = 1e-12) const {
    const double lam = params_.lambda();
    const double q = params_.q(), pc = params_.crit_exp();
    if (!(lam * A > 0.0 || B > 0.0))
      throw DomainError("nehari_project: u_+ vanishes, the ray never meets the Nehari set");
    if (!(Q > 0.0)) throw DomainError("nehari_project: ||u||_rho must be positive");
    auto rhs = [&](double t) { return lam * std::pow(t, q - 1.0) * A + std::pow(t, pc - 2.0) * B; };
    NehariProjection np;
    double lo = 1.0, hi = 1.0;
    if (rhs(1.0) < Q) {
      while (rhs(hi) < Q) {
        lo = hi;
        hi *= 2.0;
      }
    } else {
      while (rhs(lo) > Q) {
        hi = lo;
        lo *= 0.5;
      }
    }
    // Bisection in log t; rhs is strictly increasing so the bracket always holds the root.
    while (hi / lo - 1.0 > 0.25 * tol_root && np.iterations < 200) {
      const double mid = std::sqrt(lo * hi);
      if (mid <= lo || mid >= hi) break;
      (rhs(mid) < Q ? lo : hi) = mid;
      ++np.iterations;
      np.bracket_widths.push_back(hi / lo - 1.0);
    }
    double t = std::abs(rhs(lo) - Q) <= std::abs(rhs(hi) - Q) ? lo : hi;
    // One Newton polish step, kept only if it improves the residual.
    const double d = lam * (q - 1.0) * std::pow(t, q - 2.0) * A + (pc - 2.0) * std::pow(t, pc - 3.0) * B;
    if (d > 0.0) {
      const double tn = t - (rhs(t) - Q) / d;
      if (tn > 0.0 && std::abs(rhs(tn) - Q) < std::abs(rhs(t) - Q)) t = tn;
    }
    np.t = t;
    np.bracket_lo = lo;
    np.bracket_hi = hi;
    const double t2 = t * t;
    np.residual = t2 * std::abs(Q - rhs(t));
    np.scale = std::max({1.0, t2 * Q, lam * std::pow(t, q + 1.0) * A, std::pow(t, pc) * B});
    return np;
  }

  NehariIdentity nehari_energy_identity(const GridFunction& u, double tol = 1e-8) const {
    NehariIdentity id;
    const double Q = quadratic(u), A = sub_integral(u), B = crit_integral(u);
    const double lam = params_.lambda(), q = params_.q(), pc = params_.crit_exp();
    id.lhs = 0.5 * Q - lam / (q + 1.0) * A - B / pc;
    id.rhs = lam * (0.5 - 1.0 / (q + 1.0)) * A + params_.alpha() / params_.n() * B;
    id.gap = std::abs(id.lhs - id.rhs);
    id.residual = Q - lam * A - B;
    const double scale = std::max({1.0, Q, lam * A, B});
    id.precondition_met = std::abs(id.residual) <= tol * scale;
    return id;
  }

  RayMax ray_max_energy(const GridFunction& u, int samples = 50) const {
    const auto np = nehari_project(u);
    RayMax rm;
    rm.t_star = np.t;
    rm.value = energy(np.t * u).total;
    rm.best_sampled = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < samples; ++k) {
      const double t = np.t * std::pow(10.0, -3.0 + 6.0 * k / (samples - 1));
      rm.best_sampled = std::max(rm.best_sampled, energy(t * u).total);
    }
    rm.dominates = rm.value >= rm.best_sampled - 1e-12 * std::max(1.0, std::abs(rm.value));
    return rm;
  }

 private:
  double clamp(double v) const {
    if (v > detail::kClampLimit) {
      clamp_events_->fetch_add(1);
      return detail::kClampLimit;
    }
    return v;
  }

  double power_integral(const GridFunction& u, double p) const {
    double s = 0.0;
    for (double v : u.values()) {
      const double up = clamp(std::max(v, 0.0));
      if (up > 0.0) s += std::pow(up, p);
    }
    return s * u.spec().cell_volume();
  }

  ProblemParams params_;
  std::shared_ptr<const NonlocalForm> form_;
  double kappa_;
  std::shared_ptr<std::atomic<std::size_t>> clamp_events_ =
      std::make_shared<std::atomic<std::size_t>>(0);
};

// ---------------------------------------------------------------------------
// Free-function surface
// ---------------------------------------------------------------------------

inline EnergyBreakdown energy(const GridFunction& u, const ProblemParams& params,
                              const Scope& scope) {
  return Functional::for_scope(params, u.spec(), scope).energy(u);
}

inline GridFunction gradient(const GridFunction& u, const ProblemParams& params,
                             const Scope& scope) {
  return Functional::for_scope(params, u.spec(), scope).gradient(u);
}

inline NehariProjection nehari_project(const GridFunction& u, const ProblemParams& params,
                                       const Scope& scope) {
  return Functional::for_scope(params, u.spec(), scope).nehari_project(u);
}

inline NehariIdentity nehari_energy_identity(const GridFunction& u, const ProblemParams& params,
                                             const Scope& scope) {
  return Functional::for_scope(params, u.spec(), scope).nehari_energy_identity(u);
}

inline RayMax ray_max_energy(const GridFunction& u, const ProblemParams& params,
                             const Scope& scope) {
  return Functional::for_scope(params, u.spec(), scope).ray_max_energy(u);
}

/// Critical level (alpha/n) S^{n/(2 alpha)}.
inline double critical_bound(const ProblemParams& params, double S) {
  return params.alpha() / params.n() * std::pow(S, params.n() / (2.0 * params.alpha()));
}

// ---------------------------------------------------------------------------
// Sobolev constant
// ---------------------------------------------------------------------------

enum class SobolevMethod { extremal_eval, minimized };

struct SobolevEstimate {
  double S_est = 0.0;        // best value found
  double S_extremal = 0.0;   // quotient at the Talenti extremal
  double S_minimized = 0.0;  // after descent on the quotient
  GridFunction minimizer;
  SobolevMethod method = SobolevMethod::extremal_eval;
  int iterations = 0;
  double theta = 0.0;
  /// Spread between the two estimates, used as the estimate's tolerance.
  double tolerance() const { return std::abs(S_extremal - S_minimized); }
};

struct SobolevOptions {
  double theta = 0.0;  // 0 selects max(4h, L/16)
  bool minimize = true;
  int max_iters = 400;
  double rel_tol = 1e-10;
};

/// Full-kernel Rayleigh quotient B(u,u) / ||u||_{2*}^2.
inline double sobolev_quotient(const GridFunction& u, const NonlocalForm& full, double crit_exp) {
  const double p = lp_norm(u, crit_exp);
  if (!(p > 0.0)) throw DomainError("sobolev_quotient: u must be nonzero");
  return full(u, u) / (p * p);
}

inline SobolevEstimate estimate_sobolev_constant(const ProblemParams& params, const GridSpec& grid,
                                                 SobolevOptions opt = {}) {
  const double h = grid.h();
  const double theta = opt.theta > 0.0 ? opt.theta : std::max(4.0 * h, grid.extent() / 16.0);
  if (theta < 4.0 * h * (1.0 - 1e-12))
    throw DomainError("estimate_sobolev_constant: grid does not resolve the extremal (theta < 4h)");
  if (theta > grid.extent())
    throw DomainError("estimate_sobolev_constant: extremal wider than the box");
  const NonlocalForm full = NonlocalForm::full(grid, params.alpha());
  const double p = params.crit_exp();
  GridFunction u = talenti_extremal(params, grid, 1.0, theta);
  SobolevEstimate est{.minimizer = u};
  est.theta = theta;
  est.S_extremal = sobolev_quotient(u, full, p);
  est.S_est = est.S_minimized = est.S_extremal;
  if (!opt.minimize) return est;

  // Preconditioned descent: direction u - (N/P) A^{-1}(|u|^{p-2} u), Armijo on
  // the 0-homogeneous quotient, renormalised to ||u||_p = 1 after each step.
  const Eigen::LLT<Eigen::MatrixXd> llt(full.dense_matrix());
  if (llt.info() != Eigen::Success) throw DomainError("full-form matrix is not positive definite");
  const double hv = grid.cell_volume();
  u *= 1.0 / lp_norm(u, p);
  double R = sobolev_quotient(u, full, p);
  const std::size_t N = grid.size();
  for (int it = 0; it < opt.max_iters; ++it) {
    Eigen::VectorXd phi(N), uv(N);
    for (std::size_t i = 0; i < N; ++i) {
      uv[i] = u[i];
      phi[i] = std::pow(std::abs(u[i]), p - 2.0) * u[i];
    }
    const double Nq = full(u, u);
    const double P = std::pow(lp_norm(u, p), p);
    const Eigen::VectorXd Ainv_phi = llt.solve(phi);
    const Eigen::VectorXd dir = uv - (Nq / P) * Ainv_phi;
    // L2 gradient of R at ||u||_p = 1: 2 (A u - N phi).
    const GridFunction uA = full.apply(u);
    double slope = 0.0;
    for (std::size_t i = 0; i < N; ++i) slope += 2.0 * (uA[i] - Nq / P * phi[i]) * dir[i];
    slope *= hv;
    if (!(slope > 0.0)) break;
    double s = 1.0;
    bool accepted = false;
    for (int k = 0; k < 40; ++k) {
      GridFunction trial = u;
      for (std::size_t i = 0; i < N; ++i) trial[i] -= s * dir[i];
      const double norm_p = lp_norm(trial, p);
      if (norm_p > 0.0) {
        trial *= 1.0 / norm_p;
        const double Rt = sobolev_quotient(trial, full, p);
        if (Rt <= R - 1e-4 * s * slope) {
          const double rel = (R - Rt) / R;
          u = std::move(trial);
          R = Rt;
          accepted = true;
          est.iterations = it + 1;
          if (rel < opt.rel_tol) it = opt.max_iters;
          break;
        }
      }
      s *= 0.5;
    }
    if (!accepted) break;
  }
  est.S_minimized = R;
  if (R < est.S_extremal) {
    est.S_est = R;
    est.minimizer = u;
    est.method = SobolevMethod::minimized;
  }
  return est;
}

}  // namespace regional

#endif  // REGIONAL_FUNCTIONALS_HPP
