#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genealogy/ums.hpp"

namespace genealogy {

// Closed catalog of bounded test functions phi on the distance simplex D_n,
// addressable by (id, params) so specs serialize into config files.
//
//   constant c        : phi == c
//   pair_indicator c  : prod_{i<j} 1(r_ij < c)
//   pair_exp l        : prod_{i<j} exp(-l r_ij)
//   pair_gauss c,w    : prod_{i<j} exp(-((r_ij - c)/w)^2)
class PhiFunction {
 public:
  enum class Kind { constant, pair_indicator, pair_exp, pair_gauss };

  static PhiFunction constant(double c = 1.0) { return {Kind::constant, c, 0}; }
  static PhiFunction pair_indicator(double cutoff) {
    return {Kind::pair_indicator, cutoff, 0};
  }
  static PhiFunction pair_exp(double lambda) { return {Kind::pair_exp, lambda, 0}; }
  static PhiFunction pair_gauss(double center, double width) {
    return {Kind::pair_gauss, center, width};
  }
  static PhiFunction from_id(const std::string& id, std::span<const double> params);

  Kind kind() const { return kind_; }
  std::string id() const;
  std::vector<double> params() const;

  // phi evaluated on the upper triangle of a distance matrix.
  double value(std::span<const double> r) const;
  bool is_constant() const { return kind_ == Kind::constant; }
  bool is_pair_product() const { return kind_ != Kind::constant; }
  // For pair products, phi = prod g(r_ij); constant() has g == 1.
  double pair_factor(double r) const;
  double pair_factor_deriv(double r) const;
  bool differentiable() const { return kind_ != Kind::pair_indicator; }

  // grad-bar: sum over pairs of d phi / d r_ij, evaluated analytically.
  double grad_sum(std::span<const double> r) const;

 private:
  PhiFunction(Kind k, double p0, double p1) : kind_(k), p0_(p0), p1_(p1) {}
  Kind kind_;
  double p0_, p1_;
};

// Sliding window of smooth truncation.  Per-pair form
//   rho_t(r) = prod_{i<j} g(2t - r_ij),   g(y) = 1 - exp(-(N y)^2) for y > 0
// and g == 0 on (-inf, 0].  g is C^1, nondecreasing, vanishing iff y <= 0, so
// rho_t vanishes iff some r_ij >= 2t and the shift covariance
// rho(t, r) = rho(t+c, r+2c) holds identically.  `sharpness` is N; the
// approximating family g_N below realizes the monotone approximation of the
// sharp indicator from below.
struct SmoothTruncation {
  double sharpness = 8.0;

  double g(double y) const;
  double g_prime(double y) const;
  double hat_rho(double x) const { return g(-x); }  // rho_t(r)=prod hat_rho(r-2t)
  double rho(double t, std::span<const double> r) const;

  SmoothTruncation with_sharpness(double n) const { return {n}; }
};

// Test functional Phi^{n,phi}.
struct PhiSpec {
  int n = 1;
  PhiFunction phi = PhiFunction::constant();
};

struct EvalOptions {
  // Exact summation whenever (#leaves)^n stays below this; otherwise an
  // unbiased Monte Carlo estimate (requires an rng).
  long long exact_threshold = 2'000'000;
  int mc_tuples = 20'000;
};

struct EvalResult {
  double value = 0;
  double std_error = 0;  // 0 for exact evaluation
  bool exact = true;
};

// Phi^{n,phi}(u) = int phi(r(x_i,x_j)) mu^(x n); exact or MC per options.
EvalResult eval_polynomial(const Ums& u, const PhiSpec& spec,
                           const EvalOptions& opts = {}, Rng* rng = nullptr);

// Truncated polynomial Phi_t = Phi^{n, phi * c_t}, c_t the strict indicator
// prod 1(r_ij < 2t).
EvalResult eval_truncated_polynomial(const Ums& u, const PhiSpec& spec, double t,
                                     const EvalOptions& opts = {},
                                     Rng* rng = nullptr);

// Smoothly truncated polynomial Phi^{n, phi * rho_t}.
EvalResult eval_smooth_truncated(const Ums& u, const PhiSpec& spec,
                                 const SmoothTruncation& rho, double t,
                                 const EvalOptions& opts = {}, Rng* rng = nullptr);

// Monotone approximation of the sharp truncation from below:
// Phi^{n, phi * prod g_N(2t - r_ij)} with g_N = SmoothTruncation{N}.g; values
// are nondecreasing in N and converge to eval_truncated_polynomial.
EvalResult eval_monotone_approximation(const Ums& u, const PhiSpec& spec, double N,
                                       double t, const EvalOptions& opts = {},
                                       Rng* rng = nullptr);

// Generic exact/MC evaluation of int F(r(x_1..x_order)) mu^(x order) for an
// arbitrary integrand on the upper triangle; backbone of the above.
EvalResult eval_integrand(const Ums& u, int order,
                          const std::function<double(std::span<const double>)>& F,
                          const EvalOptions& opts = {}, Rng* rng = nullptr);

// theta_{k,l}: sample l is replaced by a copy of sample k (0-based, k < l).
DistanceMatrix theta_kl(const DistanceMatrix& r, int k, int l);

struct BranchingParams {
  double a = 0;  // drift
  double b = 1;  // branching rate
};

// Generator action
//   Omega Phi^{n,phi}(u) = Phi^{n, 2 grad-bar phi}(u)
//                        + a n Phi^{n,phi}(u)
//                        + (b/mass) sum_{k<l} Phi^{n, phi o theta_kl}(u),
// with Omega Phi(0) = 0.  Numeric central differences (step 1e-6) stand in
// for the gradient when the catalog entry has no analytic derivative.
double generator_action(const Ums& u, const PhiSpec& spec, const BranchingParams& p,
                        const EvalOptions& opts = {});

// The t-additive criterion function
//   g(t,u) = Omega_grow Phi^{n, phi rho_t}(u)
//          + (b n / (2 mass)) Phi^{2n, (phi rho_t) x (phi rho_t) o theta_{1,n+1}}(u).
// Requires total mass > 0.
double g_additive(const Ums& u, const PhiSpec& spec, const SmoothTruncation& rho,
                  double t, double b, const EvalOptions& opts = {});

}  // namespace genealogy
