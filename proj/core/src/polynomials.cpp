#include "genealogy/polynomials.hpp"

#include <cmath>
#include <stdexcept>

namespace genealogy {

PhiFunction PhiFunction::from_id(const std::string& id,
                                 std::span<const double> params) {
  auto need = [&](size_t k) {
    if (params.size() < k)
      throw std::invalid_argument("PhiFunction: missing params for " + id);
  };
  if (id == "constant") {
    need(1);
    return constant(params[0]);
  }
  if (id == "pair_indicator") {
    need(1);
    return pair_indicator(params[0]);
  }
  if (id == "pair_exp") {
    need(1);
    return pair_exp(params[0]);
  }
  if (id == "pair_gauss") {
    need(2);
    return pair_gauss(params[0], params[1]);
  }
  throw std::invalid_argument("PhiFunction: unknown id " + id);
}

std::string PhiFunction::id() const {
  switch (kind_) {
    case Kind::constant: return "constant";
    case Kind::pair_indicator: return "pair_indicator";
    case Kind::pair_exp: return "pair_exp";
    case Kind::pair_gauss: return "pair_gauss";
  }
  return {};
}

std::vector<double> PhiFunction::params() const {
  if (kind_ == Kind::pair_gauss) return {p0_, p1_};
  return {p0_};
}

double PhiFunction::pair_factor(double r) const {
  switch (kind_) {
    case Kind::constant: return 1.0;
    case Kind::pair_indicator: return r < p0_ ? 1.0 : 0.0;
    case Kind::pair_exp: return std::exp(-p0_ * r);
    case Kind::pair_gauss: {
      double z = (r - p0_) / p1_;
      return std::exp(-z * z);
    }
  }
  return 0;
}

double PhiFunction::pair_factor_deriv(double r) const {
  switch (kind_) {
    case Kind::constant: return 0.0;
    case Kind::pair_indicator:
      throw std::domain_error("pair_indicator has no derivative");
    case Kind::pair_exp: return -p0_ * std::exp(-p0_ * r);
    case Kind::pair_gauss: {
      double z = (r - p0_) / p1_;
      return -2 * z / p1_ * std::exp(-z * z);
    }
  }
  return 0;
}

double PhiFunction::value(std::span<const double> r) const {
  if (kind_ == Kind::constant) return p0_;
  double v = 1;
  for (double x : r) v *= pair_factor(x);
  return v;
}

double PhiFunction::grad_sum(std::span<const double> r) const {
  if (kind_ == Kind::constant) return 0;
  if (!differentiable())
    throw std::domain_error("grad_sum: phi not differentiable");
  // sum_p g'(r_p) prod_{q != p} g(r_q)
  double total = 0;
  for (size_t p = 0; p < r.size(); ++p) {
    double term = pair_factor_deriv(r[p]);
    for (size_t q = 0; q < r.size() && term != 0; ++q)
      if (q != p) term *= pair_factor(r[q]);
    total += term;
  }
  return total;
}

double SmoothTruncation::g(double y) const {
  if (y <= 0) return 0;
  double z = sharpness * y;
  return -std::expm1(-z * z);
}

double SmoothTruncation::g_prime(double y) const {
  if (y <= 0) return 0;
  double z = sharpness * y;
  return 2 * sharpness * z * std::exp(-z * z);
}

double SmoothTruncation::rho(double t, std::span<const double> r) const {
  double v = 1;
  for (double x : r) v *= g(2 * t - x);
  return v;
}

namespace {

// Per-pair window applied on top of phi.
struct Window {
  enum class Kind { none, sharp, smooth } kind = Kind::none;
  double t = 0;
  SmoothTruncation rho;

  double factor(double r) const {
    switch (kind) {
      case Kind::none: return 1.0;
      case Kind::sharp: return r < 2 * t ? 1.0 : 0.0;
      case Kind::smooth: return rho.g(2 * t - r);
    }
    return 0;
  }
  bool none() const { return kind == Kind::none; }
};

long long pow_ll(int base, int exp) {
  double v = std::pow(double(base), double(exp));
  return v > 9e18 ? 9'000'000'000'000'000'000LL : (long long)v;
}

// Exact sum over ordered leaf tuples of scale * prod_{i<j} f(r_ij) * masses.
double exact_pair_product(const Ums& u, int n, double scale,
                          const std::function<double(double)>& f) {
  int L = u.n_leaves();
  if (n == 1) return scale * u.total_mass();
  DistanceMatrix d = u.leaf_distances();
  std::vector<double> m(L);
  for (int i = 0; i < L; ++i) m[i] = u.leaf_mass(i);
  double f0 = f(0.0);
  if (n == 2) {
    double total = 0;
    for (int i = 0; i < L; ++i) {
      double row = m[i] * m[i] * f0;
      for (int j = i + 1; j < L; ++j) row += 2 * m[i] * m[j] * f(d(i, j));
      total += row;
    }
    return scale * total;
  }
  // cache pair factors
  std::vector<double> G(size_t(L) * L);
  for (int i = 0; i < L; ++i) {
    G[size_t(i) * L + i] = f0;
    for (int j = i + 1; j < L; ++j) {
      double v = f(d(i, j));
      G[size_t(i) * L + j] = v;
      G[size_t(j) * L + i] = v;
    }
  }
  // ordered tuples, partial products pruned at zero
  std::vector<int> idx(n);
  std::vector<double> part(n + 1);
  part[0] = 1;
  double total = 0;
  int k = 0;
  idx[0] = -1;
  while (k >= 0) {
    if (++idx[k] == L) {
      --k;
      continue;
    }
    double p = part[k] * m[idx[k]];
    for (int j = 0; j < k && p != 0; ++j) p *= G[size_t(idx[j]) * L + idx[k]];
    if (p == 0) continue;
    if (k == n - 1) {
      total += p;
      continue;
    }
    part[k + 1] = p;
    idx[++k] = -1;
  }
  return scale * total;
}

double exact_full(const Ums& u, int n,
                  const std::function<double(std::span<const double>)>& F) {
  int L = u.n_leaves();
  int pairs = n * (n - 1) / 2;
  std::vector<double> r(pairs);
  if (n == 1) {
    double total = 0;
    for (int i = 0; i < L; ++i) total += u.leaf_mass(i) * F(r);
    return total;
  }
  DistanceMatrix d = u.leaf_distances();
  std::vector<int> idx(n);
  std::vector<double> mass_part(n + 1);
  mass_part[0] = 1;
  auto tri = [n](int i, int j) { return i * (2 * n - i - 1) / 2 + (j - i - 1); };
  double total = 0;
  int k = 0;
  idx[0] = -1;
  while (k >= 0) {
    if (++idx[k] == L) {
      --k;
      continue;
    }
    for (int j = 0; j < k; ++j)
      r[tri(j, k)] = idx[j] == idx[k] ? 0.0 : d(idx[j], idx[k]);
    if (k == n - 1) {
      total += mass_part[k] * u.leaf_mass(idx[k]) * F(r);
      continue;
    }
    mass_part[k + 1] = mass_part[k] * u.leaf_mass(idx[k]);
    idx[++k] = -1;
  }
  return total;
}

EvalResult mc_estimate(const Ums& u, int n, const EvalOptions& opts, Rng* rng,
                       const std::function<double(std::span<const int>)>& tuple_value) {
  if (!rng)
    throw std::runtime_error(
        "eval: state too large for exact summation and no rng supplied");
  int K = opts.mc_tuples;
  std::vector<int> pick(n);
  double s = 0, s2 = 0;
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < n; ++i) pick[i] = u.sample_leaf(*rng);
    double v = tuple_value(pick);
    s += v;
    s2 += v * v;
  }
  double scale = std::pow(u.total_mass(), n);
  double mean = s / K;
  double var = std::max(0.0, s2 / K - mean * mean);
  EvalResult res;
  res.value = scale * mean;
  res.std_error = scale * std::sqrt(var / K);
  res.exact = false;
  return res;
}

EvalResult eval_with_window(const Ums& u, const PhiSpec& spec, const Window& w,
                            const EvalOptions& opts, Rng* rng) {
  if (spec.n < 1) throw std::invalid_argument("eval: n must be >= 1");
  if (u.is_zero()) return {0.0, 0.0, true};
  int n = spec.n;
  const PhiFunction& phi = spec.phi;

  // Constant phi with a sharp window: sum of ball masses to the n-th power.
  if (phi.is_constant() && w.kind == Window::Kind::sharp) {
    double c = phi.value({});
    if (n >= 2 && w.t <= 0) return {0.0, 0.0, true};
    if (n == 1) return {c * u.total_mass(), 0.0, true};
    double total = 0;
    for (double m : u.component_masses(w.t)) total += c * std::pow(m, n);
    return {total, 0.0, true};
  }
  if (phi.is_constant() && w.none()) {
    return {phi.value({}) * std::pow(u.total_mass(), n), 0.0, true};
  }

  double scale = phi.is_constant() ? phi.value({}) : 1.0;
  auto f = [&phi, &w](double r) {
    return (phi.is_constant() ? 1.0 : phi.pair_factor(r)) * w.factor(r);
  };
  if (pow_ll(u.n_leaves(), n) <= opts.exact_threshold)
    return {exact_pair_product(u, n, scale, f), 0.0, true};
  return mc_estimate(u, n, opts, rng, [&](std::span<const int> pick) {
    double v = scale;
    for (size_t i = 0; i < pick.size() && v != 0; ++i)
      for (size_t j = i + 1; j < pick.size() && v != 0; ++j)
        v *= f(pick[i] == pick[j] ? 0.0 : u.leaf_distance(pick[i], pick[j]));
    return v;
  });
}

}  // namespace

EvalResult eval_polynomial(const Ums& u, const PhiSpec& spec, const EvalOptions& opts,
                           Rng* rng) {
  return eval_with_window(u, spec, Window{}, opts, rng);
}

EvalResult eval_truncated_polynomial(const Ums& u, const PhiSpec& spec, double t,
                                     const EvalOptions& opts, Rng* rng) {
  if (t < 0) throw std::invalid_argument("eval_truncated_polynomial: t >= 0");
  Window w;
  w.kind = Window::Kind::sharp;
  w.t = t;
  return eval_with_window(u, spec, w, opts, rng);
}

EvalResult eval_smooth_truncated(const Ums& u, const PhiSpec& spec,
                                 const SmoothTruncation& rho, double t,
                                 const EvalOptions& opts, Rng* rng) {
  if (t < 0) throw std::invalid_argument("eval_smooth_truncated: t >= 0");
  Window w;
  w.kind = Window::Kind::smooth;
  w.t = t;
  w.rho = rho;
  return eval_with_window(u, spec, w, opts, rng);
}

EvalResult eval_monotone_approximation(const Ums& u, const PhiSpec& spec, double N,
                                       double t, const EvalOptions& opts, Rng* rng) {
  return eval_smooth_truncated(u, spec, SmoothTruncation{N}, t, opts, rng);
}

EvalResult eval_integrand(const Ums& u, int order,
                          const std::function<double(std::span<const double>)>& F,
                          const EvalOptions& opts, Rng* rng) {
  if (order < 1) throw std::invalid_argument("eval_integrand: order >= 1");
  if (u.is_zero()) return {0.0, 0.0, true};
  if (pow_ll(u.n_leaves(), order) <= opts.exact_threshold)
    return {exact_full(u, order, F), 0.0, true};
  int pairs = order * (order - 1) / 2;
  auto tri = [order](int i, int j) {
    return i * (2 * order - i - 1) / 2 + (j - i - 1);
  };
  std::vector<double> r(pairs);
  return mc_estimate(u, order, opts, rng, [&](std::span<const int> pick) {
    for (int i = 0; i < order; ++i)
      for (int j = i + 1; j < order; ++j)
        r[tri(i, j)] =
            pick[i] == pick[j] ? 0.0 : u.leaf_distance(pick[i], pick[j]);
    return F(r);
  });
}

DistanceMatrix theta_kl(const DistanceMatrix& r, int k, int l) {
  int n = r.n();
  if (k < 0 || l <= k || l >= n) throw std::invalid_argument("theta_kl: need 0 <= k < l < n");
  DistanceMatrix out(n);
  auto map = [k, l](int i) { return i == l ? k : i; };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      int a = map(i), b = map(j);
      out.set(i, j, a == b ? 0.0 : r(a, b));
    }
  return out;
}

double generator_action(const Ums& u, const PhiSpec& spec, const BranchingParams& p,
                        const EvalOptions& opts) {
  if (u.is_zero() || u.total_mass() <= 0) return 0.0;
  int n = spec.n;
  const PhiFunction& phi = spec.phi;

  // growth: Phi^{n, 2 grad-bar phi}
  double grow = 0;
  if (n >= 2 && !phi.is_constant()) {
    std::function<double(std::span<const double>)> integrand;
    if (phi.differentiable()) {
      integrand = [&phi](std::span<const double> r) { return 2 * phi.grad_sum(r); };
    } else {
      const double h = 1e-6;
      integrand = [&phi, h](std::span<const double> r) {
        std::vector<double> rr(r.begin(), r.end());
        double s = 0;
        for (size_t p = 0; p < rr.size(); ++p) {
          double save = rr[p];
          rr[p] = save + h;
          double up = phi.value(rr);
          rr[p] = save - h;
          double dn = phi.value(rr);
          rr[p] = save;
          s += (up - dn) / (2 * h);
        }
        return 2 * s;
      };
    }
    grow = eval_integrand(u, n, integrand, opts).value;
  }

  // branching: a n Phi + (b/mass) sum_{k<l} Phi^{n, phi o theta_kl}
  double bran = p.a * n * eval_polynomial(u, spec, opts).value;
  if (n >= 2) {
    double sum = 0;
    for (int k = 0; k < n; ++k)
      for (int l = k + 1; l < n; ++l) {
        auto integrand = [&phi, k, l, n](std::span<const double> r) {
          auto map = [k, l](int i) { return i == l ? k : i; };
          auto tri = [n](int i, int j) {
            if (i > j) std::swap(i, j);
            return i * (2 * n - i - 1) / 2 + (j - i - 1);
          };
          // theta-mapped upper triangle
          double vals[64];
          int pairs = n * (n - 1) / 2;
          for (int i = 0, c = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j, ++c) {
              int a = map(i), b = map(j);
              vals[c] = a == b ? 0.0 : r[tri(a, b)];
            }
          return phi.value(std::span<const double>(vals, pairs));
        };
        sum += eval_integrand(u, n, integrand, opts).value;
      }
    bran += p.b / u.total_mass() * sum;
  }
  return grow + bran;
}

double g_additive(const Ums& u, const PhiSpec& spec, const SmoothTruncation& rho,
                  double t, double b, const EvalOptions& opts) {
  if (u.is_zero() || u.total_mass() <= 0)
    throw std::domain_error("g_additive: zero total mass");
  int n = spec.n;
  const PhiFunction& phi = spec.phi;
  double scale = phi.is_constant() ? phi.value({}) : 1.0;

  auto fpair = [&](double r) {
    return (phi.is_constant() ? 1.0 : phi.pair_factor(r)) * rho.g(2 * t - r);
  };
  auto fpair_deriv = [&](double r) {
    double gphi = phi.is_constant() ? 1.0 : phi.pair_factor(r);
    double dgphi = phi.is_constant() ? 0.0 : phi.pair_factor_deriv(r);
    double w = rho.g(2 * t - r);
    double dw = -rho.g_prime(2 * t - r);
    return dgphi * w + gphi * dw;
  };

  // growth term: Phi^{n, 2 grad-bar (phi rho_t)}
  double term1 = 0;
  if (n >= 2) {
    auto integrand = [&](std::span<const double> r) {
      double s = 0;
      for (size_t p = 0; p < r.size(); ++p) {
        double term = fpair_deriv(r[p]);
        for (size_t q = 0; q < r.size() && term != 0; ++q)
          if (q != p) term *= fpair(r[q]);
        s += term;
      }
      return 2 * scale * s;
    };
    term1 = eval_integrand(u, n, integrand, opts).value;
  }

  // replacement term: (b n / (2 mass)) Phi^{2n, (phi rho)x(phi rho) o theta_{1,n+1}}.
  // The integrand does not depend on the duplicated sample, so it reduces to a
  // polynomial of order 2n-1 and the 1/mass cancels.
  int order = 2 * n - 1;
  auto tri = [order](int i, int j) {
    if (i > j) std::swap(i, j);
    return i * (2 * order - i - 1) / 2 + (j - i - 1);
  };
  auto block = [&](std::span<const double> r, const int* idx) {
    double v = scale;
    for (int i = 0; i < n && v != 0; ++i)
      for (int j = i + 1; j < n && v != 0; ++j) {
        int a = idx[i], b2 = idx[j];
        v *= fpair(a == b2 ? 0.0 : r[tri(a, b2)]);
      }
    return v;
  };
  // First block: reduced indices 0..n-1.  Second block: {0, n, ..., 2n-2}.
  std::vector<int> first(n), second(n);
  for (int i = 0; i < n; ++i) first[i] = i;
  second[0] = 0;
  for (int i = 1; i < n; ++i) second[i] = n + i - 1;
  auto integrand2 = [&](std::span<const double> r) {
    double v1 = block(r, first.data());
    if (v1 == 0) return 0.0;
    return v1 * block(r, second.data());
  };
  double term2 = eval_integrand(u, order, integrand2, opts).value;

  return term1 + b * n / 2.0 * term2;
}

}  // namespace genealogy
