#ifndef REGIONAL_FORMS_HPP
#define REGIONAL_FORMS_HPP

// Quadrature of the regional, full and complement fractional Dirichlet forms
//
//   B(u, v) = sum_x h^n sum_{k != 0, lo(x) <= |k h| < hi(x)} w_k [u(x+kh) - u(x)][v(x+kh) - v(x)]
//
// over the whole lattice, with u, v zero outside the box. The weight w_k is the
// exact integral of |y|^{-n-2a} over the lattice cell centred at k h; the cell
// containing the origin is excluded (see core_error_estimate). Offsets are
// truncated at R_far = 2L. Regional, full and complement forms differ only in
// the radii [lo(x), hi(x)), so any partition of [0, inf) into such annuli
// partitions the discrete sum exactly.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "regional/errors.hpp"
#include "regional/model.hpp"
#include "regional/parallel.hpp"

namespace regional {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Kernel weights
// ---------------------------------------------------------------------------

namespace detail {

inline const std::array<double, 4>& gauss4_nodes() {
  static const std::array<double, 4> x{-0.8611363115940526, -0.3399810435848563,
                                       0.3399810435848563, 0.8611363115940526};
  return x;
}
inline const std::array<double, 4>& gauss4_weights() {
  static const std::array<double, 4> w{0.3478548451374538, 0.6521451548625461,
                                       0.6521451548625461, 0.3478548451374538};
  return w;
}

// Integral of |y|^{-n-2a} over the cell prod_d [(k_d - 1/2) h, (k_d + 1/2) h].
inline double cell_weight(const std::array<int, kMaxDim>& k, int n, double h, double alpha) {
  if (n == 1) {
    const double lo = (std::abs(k[0]) - 0.5) * h;
    const double hi = (std::abs(k[0]) + 0.5) * h;
    return (std::pow(lo, -2.0 * alpha) - std::pow(hi, -2.0 * alpha)) / (2.0 * alpha);
  }
  // Composite tensor Gauss-Legendre; cells near the singularity are split finer.
  int kmax = 0;
  for (int d = 0; d < n; ++d) kmax = std::max(kmax, std::abs(k[d]));
  const int sub = kmax <= 1 ? 16 : (kmax <= 3 ? 6 : 2);
  const auto& gx = gauss4_nodes();
  const auto& gw = gauss4_weights();
  const double sh = h / sub;
  const double expo = -0.5 * (n + 2.0 * alpha);
  int pts_per_axis = sub * 4;
  int total = 1;
  for (int d = 0; d < n; ++d) total *= pts_per_axis;
  double acc = 0.0;
  for (int idx = 0; idx < total; ++idx) {
    int rem = idx;
    double r2 = 0.0, wgt = 1.0;
    for (int d = 0; d < n; ++d) {
      const int p = rem % pts_per_axis;
      rem /= pts_per_axis;
      const int s = p / 4, g = p % 4;
      const double left = (k[d] - 0.5) * h + s * sh;
      const double y = left + 0.5 * sh * (gx[g] + 1.0);
      r2 += y * y;
      wgt *= 0.5 * sh * gw[g];
    }
    acc += wgt * std::pow(r2, expo);
  }
  return acc;
}

}  // namespace detail

/// Offsets k != 0 with |k h| <= R_far, their radii |k h| and cell weights.
/// Weights depend on k only through the sorted |k_d|, so w(k) = w(-k) exactly.
class KernelTable {
 public:
  KernelTable(const GridSpec& grid, double alpha) : n_(grid.n()), h_(grid.h()), alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("kernel: alpha must lie in (0, 1)");
    r_far_ = 2.0 * grid.extent();
    const int K = grid.points() - 1;
    reach_ = K;
    std::map<std::array<int, kMaxDim>, double> cache;
    int span = 2 * K + 1;
    int total = 1;
    for (int d = 0; d < n_; ++d) total *= span;
    for (int idx = 0; idx < total; ++idx) {
      std::array<int, kMaxDim> k{};
      int rem = idx;
      bool zero = true;
      double r2 = 0.0;
      for (int d = n_ - 1; d >= 0; --d) {
        k[d] = rem % span - K;
        rem /= span;
        if (k[d] != 0) zero = false;
        r2 += double(k[d]) * k[d];
      }
      if (zero) continue;
      const double r = std::sqrt(r2) * h_;
      if (r > r_far_ * (1.0 + 1e-12)) continue;
      std::array<int, kMaxDim> key{};
      for (int d = 0; d < n_; ++d) key[d] = std::abs(k[d]);
      std::sort(key.begin(), key.begin() + n_);
      auto it = cache.find(key);
      if (it == cache.end())
        it = cache.emplace(key, detail::cell_weight(key, n_, h_, alpha_)).first;
      offsets_.push_back(k);
      radii_.push_back(r);
      weights_.push_back(it->second);
    }
  }

  int n() const { return n_; }
  double h() const { return h_; }
  double alpha() const { return alpha_; }
  double r_far() const { return r_far_; }
  int reach() const { return reach_; }
  std::size_t size() const { return offsets_.size(); }
  const std::vector<std::array<int, kMaxDim>>& offsets() const { return offsets_; }
  const std::vector<double>& radii() const { return radii_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  int n_;
  double h_;
  double alpha_;
  double r_far_ = 0.0;
  int reach_ = 0;
  std::vector<std::array<int, kMaxDim>> offsets_;
  std::vector<double> radii_;
  std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// NonlocalForm
// ---------------------------------------------------------------------------

enum class FormMode { regional, full, complement };

/// Per-point radius bound, evaluated on lattice points (possibly outside the box).
using RadiusFunction = std::function<double(const Point&)>;

class NonlocalForm {
 public:
  static NonlocalForm regional(const GridSpec& grid, double alpha, const ScopeFunction& rho) {
    const int n = grid.n();
    return NonlocalForm(grid, alpha, FormMode::regional, [](const Point&) { return 0.0; },
                        [rho, n](const Point& x) { return rho(x, n); });
  }
  static NonlocalForm full(const GridSpec& grid, double alpha) {
    return NonlocalForm(grid, alpha, FormMode::full, [](const Point&) { return 0.0; },
                        [](const Point&) { return kInfinity; });
  }
  /// Annulus rho_inner(x) <= |z| < rho_outer; rho_outer may be infinite.
  static NonlocalForm complement(const GridSpec& grid, double alpha, const ScopeFunction& inner,
                                 double rho_outer) {
    const int n = grid.n();
    return NonlocalForm(grid, alpha, FormMode::complement,
                        [inner, n](const Point& x) { return inner(x, n); },
                        [rho_outer](const Point&) { return rho_outer; });
  }

  NonlocalForm(const GridSpec& grid, double alpha, FormMode mode, const RadiusFunction& lo,
               const RadiusFunction& hi)
      : NonlocalForm(grid, std::make_shared<const KernelTable>(grid, alpha), mode, lo, hi) {}

  NonlocalForm(const GridSpec& grid, std::shared_ptr<const KernelTable> table, FormMode mode,
               const RadiusFunction& lo, const RadiusFunction& hi)
      : grid_(grid), table_(std::move(table)), mode_(mode) {
    build_lattice(lo, hi);
  }

  const GridSpec& grid() const { return grid_; }
  double alpha() const { return table_->alpha(); }
  FormMode mode() const { return mode_; }
  const KernelTable& table() const { return *table_; }
  std::shared_ptr<const KernelTable> table_ptr() const { return table_; }

  /// Discrete bilinear form B(u, v).
  double operator()(const GridFunction& u, const GridFunction& v) const {
    check(u);
    check(v);
    const auto& w = table_->weights();
    const auto& r = table_->radii();
    const std::size_t noff = w.size();
    const double sum = parallel_sum(grid_.size(), [&](std::size_t z) {
      const std::size_t ez = ext_of_inside_[z];
      const double uz = u[z], vz = v[z];
      double acc = 0.0;
      for (std::size_t j = 0; j < noff; ++j) {
        const std::size_t e = ez + ext_delta_[j];
        const double c = member(ez, r[j]) + member(e, r[j]);
        if (c == 0.0) continue;
        const int nb = inside_of_ext_[e];
        if (nb >= 0)
          acc += 0.5 * w[j] * c * (u[nb] - uz) * (v[nb] - vz);
        else
          acc += w[j] * c * uz * vz;
      }
      return acc;
    });
    return sum * grid_.cell_volume();
  }

  /// A u with B(u, v) = h^n <A u, v>.
  GridFunction apply(const GridFunction& u) const {
    check(u);
    GridFunction out(grid_);
    const auto& w = table_->weights();
    const auto& r = table_->radii();
    const std::size_t noff = w.size();
    parallel_chunks(grid_.size(), [&](std::size_t z) {
      const std::size_t ez = ext_of_inside_[z];
      const double uz = u[z];
      double acc = 0.0;
      for (std::size_t j = 0; j < noff; ++j) {
        const std::size_t e = ez + ext_delta_[j];
        const double c = member(ez, r[j]) + member(e, r[j]);
        if (c == 0.0) continue;
        const int nb = inside_of_ext_[e];
        acc += w[j] * c * (nb >= 0 ? uz - u[nb] : uz);
      }
      out[z] = acc;
    });
    return out;
  }

  /// Dense symmetric matrix A (size m^n).
  Eigen::MatrixXd dense_matrix() const {
    const std::size_t N = grid_.size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
    const auto& w = table_->weights();
    const auto& r = table_->radii();
    for (std::size_t z = 0; z < N; ++z) {
      const std::size_t ez = ext_of_inside_[z];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const std::size_t e = ez + ext_delta_[j];
        const double c = member(ez, r[j]) + member(e, r[j]);
        if (c == 0.0) continue;
        A(z, z) += w[j] * c;
        const int nb = inside_of_ext_[e];
        if (nb >= 0) A(z, nb) -= w[j] * c;
      }
    }
    return A;
  }

  /// Largest pairing (u(x+z) - u(x))(u_-(x+z) - u_-(x)) over member pairs.
  /// Nonpositive for every u, which is why positive truncation is harmless.
  double max_sign_pairing(const GridFunction& u) const {
    check(u);
    const GridFunction um = u.negative_part();
    const auto& r = table_->radii();
    double worst = -kInfinity;
    for (std::size_t z = 0; z < grid_.size(); ++z) {
      const std::size_t ez = ext_of_inside_[z];
      for (std::size_t j = 0; j < r.size(); ++j) {
        const std::size_t e = ez + ext_delta_[j];
        if (member(ez, r[j]) + member(e, r[j]) == 0.0) continue;
        const int nb = inside_of_ext_[e];
        const double un = nb >= 0 ? u[nb] : 0.0;
        const double mn = nb >= 0 ? um[nb] : 0.0;
        worst = std::max(worst, (un - u[z]) * (mn - um[z]));
      }
    }
    return worst;
  }

  /// Bound on the truncated far field, 2 |S^{n-1}| R_far^{-2a} / (2a) ||u||^2.
  /// Reported only; never added to form values.
  double tail_bound(const GridFunction& u) const {
    const double a = alpha();
    return 2.0 * sphere_measure(grid_.n()) * std::pow(table_->r_far(), -2.0 * a) / (2.0 * a) *
           l2_inner(u, u);
  }

  /// Estimated contribution of the excluded origin cell,
  /// |S^{n-1}|/n (h/2)^{2-2a}/(2-2a) int |grad u|^2, with central differences.
  double core_error_estimate(const GridFunction& u) const {
    check(u);
    const int n = grid_.n();
    const int m = grid_.points();
    const double h = grid_.h();
    double grad2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const auto mi = grid_.multi_index(i);
      for (int d = 0; d < n; ++d) {
        auto lo = mi, hi = mi;
        lo[d] -= 1;
        hi[d] += 1;
        const double ul = lo[d] >= 0 ? u[grid_.linear_index(lo)] : 0.0;
        const double uh = hi[d] < m ? u[grid_.linear_index(hi)] : 0.0;
        const double g = (uh - ul) / (2.0 * h);
        grad2 += g * g;
      }
    }
    grad2 *= grid_.cell_volume();
    const double a = alpha();
    return sphere_measure(n) / n * std::pow(0.5 * h, 2.0 - 2.0 * a) / (2.0 - 2.0 * a) * grad2;
  }

  /// Radii [lo, hi) stored for the lattice point with box multi-index mi
  /// (entries may lie outside [0, m)).
  std::pair<double, double> radii_at(const std::array<int, kMaxDim>& mi) const {
    const std::size_t e = ext_index(mi);
    return {lo_[e], hi_[e]};
  }

 private:
  void check(const GridFunction& u) const {
    if (!(u.spec() == grid_)) throw ShapeError("grid function does not match the form's grid");
  }

  double member(std::size_t e, double r) const {
    return (lo_[e] <= r && r < hi_[e]) ? 1.0 : 0.0;
  }

  std::size_t ext_index(const std::array<int, kMaxDim>& mi) const {
    std::size_t e = 0;
    for (int d = 0; d < grid_.n(); ++d)
      e = e * static_cast<std::size_t>(ext_points_) + static_cast<std::size_t>(mi[d] + pad_);
    return e;
  }

  void build_lattice(const RadiusFunction& lo, const RadiusFunction& hi) {
    const int n = grid_.n();
    const int m = grid_.points();
    pad_ = table_->reach();
    ext_points_ = m + 2 * pad_;
    std::size_t ext_size = 1;
    for (int d = 0; d < n; ++d) ext_size *= static_cast<std::size_t>(ext_points_);
    lo_.assign(ext_size, 0.0);
    hi_.assign(ext_size, 0.0);
    inside_of_ext_.assign(ext_size, -1);
    const double h = grid_.h();
    const double L = grid_.extent();
    std::vector<std::size_t> order(ext_size);
    for (std::size_t e = 0; e < ext_size; ++e) order[e] = e;
    bool ordering_violation = false;
    for (std::size_t e = 0; e < ext_size; ++e) {
      std::size_t rem = e;
      Point x{};
      std::array<int, kMaxDim> mi{};
      bool inside = true;
      for (int d = n - 1; d >= 0; --d) {
        mi[d] = static_cast<int>(rem % ext_points_) - pad_;
        rem /= ext_points_;
        x[d] = -L + mi[d] * h;
        if (mi[d] < 0 || mi[d] >= m) inside = false;
      }
      lo_[e] = lo(x);
      hi_[e] = hi(x);
      if (lo_[e] > hi_[e]) ordering_violation = true;
      if (inside) inside_of_ext_[e] = static_cast<int>(grid_.linear_index(mi));
    }
    if (ordering_violation)
      throw DomainError("annulus ordering violated: inner radius exceeds outer radius");
    ext_of_inside_.resize(grid_.size());
    for (std::size_t z = 0; z < grid_.size(); ++z) ext_of_inside_[z] = ext_index(grid_.multi_index(z));
    ext_delta_.clear();
    for (const auto& k : table_->offsets()) {
      long long delta = 0;
      for (int d = 0; d < n; ++d) delta = delta * ext_points_ + k[d];
      ext_delta_.push_back(static_cast<std::size_t>(delta));  // modular arithmetic
    }
  }

  GridSpec grid_;
  std::shared_ptr<const KernelTable> table_;
  FormMode mode_;
  int pad_ = 0;
  int ext_points_ = 0;
  std::vector<double> lo_, hi_;
  std::vector<int> inside_of_ext_;
  std::vector<std::size_t> ext_of_inside_;
  std::vector<std::size_t> ext_delta_;
};

// ---------------------------------------------------------------------------
// Free-function surface
// ---------------------------------------------------------------------------

inline double regional_form(const GridFunction& u, const GridFunction& v, const ScopeFunction& rho,
                            double alpha) {
  u.require_same_grid(v);
  return NonlocalForm::regional(u.spec(), alpha, rho)(u, v);
}

inline double full_form(const GridFunction& u, const GridFunction& v, double alpha) {
  u.require_same_grid(v);
  return NonlocalForm::full(u.spec(), alpha)(u, v);
}

inline double complement_form(const GridFunction& u, const ScopeFunction& rho_inner,
                              double rho_outer, double alpha) {
  const auto form = NonlocalForm::complement(u.spec(), alpha, rho_inner, rho_outer);
  return form(u, u);
}

/// (sum |u|^p h^n)^{1/p}.
inline double lp_norm(const GridFunction& u, double p) {
  if (!(p >= 1.0)) throw DomainError("lp_norm: exponent must be >= 1");
  return std::pow(detail::lp_sum(u, p), 1.0 / p);
}

/// ||u||_rho^2 = B_rho(u, u) + ||u||_{L2}^2.
inline double rho_norm_sq(const GridFunction& u, const NonlocalForm& form) {
  return form(u, u) + l2_inner(u, u);
}
inline double rho_norm_sq(const GridFunction& u, const ScopeFunction& rho, double alpha) {
  return rho_norm_sq(u, NonlocalForm::regional(u.spec(), alpha, rho));
}

}  // namespace regional

#endif  // REGIONAL_FORMS_HPP
