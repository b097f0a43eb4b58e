#include "genealogy/polynomials.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "genealogy/verification.hpp"

using namespace genealogy;

namespace {

// Brute-force oracle: sum over ordered leaf tuples of masses * F(distances).
double brute_force(const Ums& u, int n,
                   const std::function<double(std::span<const double>)>& F) {
  int L = u.n_leaves();
  int pairs = n * (n - 1) / 2;
  std::vector<int> idx(n, 0);
  std::vector<double> r(pairs);
  double total = 0;
  for (;;) {
    double m = 1;
    for (int k = 0; k < n; ++k) m *= u.leaf_mass(idx[k]);
    int c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j, ++c)
        r[c] = idx[i] == idx[j] ? 0.0 : u.leaf_distance(idx[i], idx[j]);
    total += m * F(r);
    int pos = n - 1;
    while (pos >= 0 && ++idx[pos] == L) idx[pos--] = 0;
    if (pos < 0) break;
  }
  return total;
}

Ums families(std::span<const double> masses, double t) {
  std::vector<Ums> leaves;
  for (double m : masses) leaves.push_back(Ums::leaf(m));
  return Ums::forest(leaves, t);
}

}  // namespace

TEST(Polynomials, ConstantPhiGivesMassPower) {
  Ums u = Ums::join(0.4, {Ums::leaf(1.5), Ums::leaf(0.5)});
  for (int n = 1; n <= 4; ++n) {
    PhiSpec spec{n, PhiFunction::constant(1.0)};
    EXPECT_DOUBLE_EQ(eval_polynomial(u, spec).value, std::pow(2.0, n));
  }
  EXPECT_EQ(eval_polynomial(Ums{}, {2, PhiFunction::constant(1.0)}).value, 0.0);
}

TEST(Polynomials, TruncatedSecondMomentIsSumOfSquaredFamilyMasses) {
  // families of masses m_i mutually at exactly 2t
  std::vector<double> masses = {1.0, 2.0, 0.5};
  double t = 0.7;
  Ums u = families(masses, t);
  PhiSpec spec{2, PhiFunction::constant(1.0)};
  double expected = 1.0 + 4.0 + 0.25;
  EXPECT_DOUBLE_EQ(eval_truncated_polynomial(u, spec, t).value, expected);
  // the same through the generic indicator-phi path
  PhiSpec ind{2, PhiFunction::pair_indicator(2 * t)};
  EXPECT_DOUBLE_EQ(eval_polynomial(u, ind).value, expected);
  // brute force agrees
  auto F = [t](std::span<const double> r) { return r[0] < 2 * t ? 1.0 : 0.0; };
  EXPECT_DOUBLE_EQ(brute_force(u, 2, F), expected);
}

TEST(Polynomials, TruncationEdgeCases) {
  Ums u = Ums::join(0.4, {Ums::leaf(1), Ums::leaf(1)});
  PhiSpec spec{2, PhiFunction::pair_exp(0.3)};
  // diameter < 2t: equals the plain polynomial
  EXPECT_DOUBLE_EQ(eval_truncated_polynomial(u, spec, 5.0).value,
                   eval_polynomial(u, spec).value);
  // t = 0 kills every pair including the diagonal
  EXPECT_EQ(eval_truncated_polynomial(u, spec, 0.0).value, 0.0);
  EXPECT_EQ(eval_truncated_polynomial(u, {2, PhiFunction::constant(1.0)}, 0.0).value,
            0.0);
  // n = 1 is the total mass regardless of t
  EXPECT_DOUBLE_EQ(eval_truncated_polynomial(u, {1, PhiFunction::constant(1.0)}, 0.0).value,
                   2.0);
}

TEST(Polynomials, TruncatedAdditivity) {
  Rng rng(71);
  for (int i = 0; i < 30; ++i) {
    Ums u = random_ums(rng, 10), v = random_ums(rng, 10);
    double t = std::max(u.diameter(), v.diameter()) / 2 + 0.075;
    Ums x = u.truncate(t), y = v.truncate(t);
    Ums xy = Ums::concat(x, y, t);
    for (int n = 1; n <= 3; ++n) {
      PhiSpec spec{n, PhiFunction::pair_exp(0.9)};
      double both = eval_truncated_polynomial(xy, spec, t).value;
      double px = eval_truncated_polynomial(x, spec, t).value;
      double py = eval_truncated_polynomial(y, spec, t).value;
      EXPECT_NEAR(both, px + py, 1e-9 * std::max(1.0, std::abs(px + py)));
    }
  }
}

TEST(Polynomials, SmoothWindowKillsPairsBeyond2t) {
  double d = 0.8, t = d / 2;
  Ums u = Ums::join(t, {Ums::leaf(1.5), Ums::leaf(2.0)});
  SmoothTruncation rho{4.0};
  PhiSpec spec{2, PhiFunction::constant(1.0)};
  // only the diagonal tuples survive, each with window factor g(2t)
  double expected = (1.5 * 1.5 + 2.0 * 2.0) * rho.g(2 * t);
  EXPECT_DOUBLE_EQ(eval_smooth_truncated(u, spec, rho, t).value, expected);
}

TEST(Polynomials, SmoothMonotoneApproximation) {
  Rng rng(13);
  Ums u = random_ums(rng, 12);
  double t = 0.6 * (u.diameter() / 2) + 0.025;
  PhiSpec spec{2, PhiFunction::pair_exp(0.4)};
  double sharp = eval_truncated_polynomial(u, spec, t).value;
  double prev = -1;
  for (double N = 1; N <= 256; N *= 2) {
    double v = eval_monotone_approximation(u, spec, N, t).value;
    EXPECT_GE(v, prev - 1e-12);
    EXPECT_LE(v, sharp + 1e-12);
    prev = v;
  }
  EXPECT_NEAR(prev, sharp, 0.01 * std::max(1.0, sharp));
}

TEST(Polynomials, ShiftCovariance) {
  // rho(t, r) = rho(t + c, r + 2c): lift all merge heights by c.  Distances
  // between distinct samples shift by 2c; the atoms themselves stay at
  // distance 0, so the covariance concerns the off-diagonal terms.
  double c = 0.35;
  Ums u = Ums::join(0.25, {Ums::leaf(1), Ums::leaf(2)});
  Ums lifted = Ums::join(0.25 + c, {Ums::leaf(1), Ums::leaf(2)});
  SmoothTruncation rho{3.0};
  double t = 0.4;
  EXPECT_DOUBLE_EQ(rho.g(2 * t - 0.5), rho.g(2 * (t + c) - (0.5 + 2 * c)));
  PhiSpec spec{2, PhiFunction::constant(1.0)};
  auto diag = [&](const Ums& x, double level) {
    double s = 0;
    for (int i = 0; i < x.n_leaves(); ++i)
      s += x.leaf_mass(i) * x.leaf_mass(i) * rho.g(2 * level);
    return s;
  };
  double off_u = eval_smooth_truncated(u, spec, rho, t).value - diag(u, t);
  double off_lifted =
      eval_smooth_truncated(lifted, spec, rho, t + c).value - diag(lifted, t + c);
  EXPECT_DOUBLE_EQ(off_u, off_lifted);
}

TEST(Polynomials, ThetaExamples) {
  {
    DistanceMatrix m(2);
    m.set(0, 1, 3.5);
    DistanceMatrix th = theta_kl(m, 0, 1);
    EXPECT_EQ(th(0, 1), 0.0);
  }
  {
    DistanceMatrix m(3);
    m.set(0, 1, 2);
    m.set(0, 2, 4);
    m.set(1, 2, 4);
    DistanceMatrix th = theta_kl(m, 0, 1);
    EXPECT_EQ(th(0, 1), 0.0);
    EXPECT_EQ(th(0, 2), 4.0);
    EXPECT_EQ(th(1, 2), 4.0);
    EXPECT_TRUE(th.is_ultrametric(0.0));
  }
  DistanceMatrix m(3);
  EXPECT_THROW(theta_kl(m, 1, 1), std::invalid_argument);
  EXPECT_THROW(theta_kl(m, 0, 3), std::invalid_argument);
}

TEST(Polynomials, GeneratorActionOnConstantPhi) {
  // phi == 1: growth 0, branching a n mass^n + b C(n,2) mass^(n-1)
  Ums u = Ums::join(0.3, {Ums::leaf(1.25), Ums::leaf(0.5)});
  double mass = u.total_mass();
  BranchingParams p{0.7, 1.3};
  for (int n = 1; n <= 3; ++n) {
    PhiSpec spec{n, PhiFunction::constant(1.0)};
    double expected = p.a * n * std::pow(mass, n) +
                      p.b * (n * (n - 1) / 2) * std::pow(mass, n - 1);
    EXPECT_NEAR(generator_action(u, spec, p), expected, 1e-12 * std::abs(expected));
  }
  EXPECT_EQ(generator_action(Ums{}, {2, PhiFunction::constant(1.0)}, p), 0.0);
}

TEST(Polynomials, GeneratorGrowthMatchesBruteForce) {
  // theta-free check of the growth part through an independent sum
  Ums u = Ums::join(0.3, {Ums::leaf(1.0), Ums::leaf(2.0)});
  PhiSpec spec{2, PhiFunction::pair_exp(0.8)};
  BranchingParams p{0.0, 1.0};
  // growth = Phi^{2, 2 grad phi}; for pair_exp, grad = -lambda * phi
  double growth_expected = brute_force(u, 2, [&](std::span<const double> r) {
    return 2 * (-0.8) * std::exp(-0.8 * r[0]);
  });
  // branching with theta: phi(theta_01 r) = phi(0) = 1
  double bran_expected = brute_force(u, 2, [&](std::span<const double>) { return 1.0; });
  bran_expected *= p.b / u.total_mass();
  EXPECT_NEAR(generator_action(u, spec, p), growth_expected + bran_expected, 1e-10);
}

TEST(Polynomials, AnalyticGradientMatchesCentralDifferences) {
  PhiFunction phi = PhiFunction::pair_gauss(0.3, 0.5);
  std::vector<double> r = {0.2, 0.7, 0.4};
  double analytic = phi.grad_sum(r);
  double h = 1e-6, numeric = 0;
  for (size_t p = 0; p < r.size(); ++p) {
    std::vector<double> up = r, dn = r;
    up[p] += h;
    dn[p] -= h;
    numeric += (phi.value(up) - phi.value(dn)) / (2 * h);
  }
  EXPECT_NEAR(analytic, numeric, 1e-6 * std::max(1.0, std::abs(analytic)));
}

TEST(Polynomials, GAdditiveClosedFormForOrderOne) {
  // n=1, phi == 1: g(t,u) = (b/2) * mass
  Ums u = Ums::join(0.2, {Ums::leaf(1), Ums::leaf(0.75)});
  SmoothTruncation rho{5.0};
  double b = 1.7;
  PhiSpec spec{1, PhiFunction::constant(1.0)};
  EXPECT_DOUBLE_EQ(g_additive(u, spec, rho, 0.5, b), b / 2 * u.total_mass());
  EXPECT_THROW(g_additive(Ums{}, spec, rho, 0.5, b), std::domain_error);
}

TEST(Polynomials, GAdditivityUnderConcat) {
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    Ums u = random_ums(rng, 6).truncate(0.4);
    Ums v = random_ums(rng, 6).truncate(0.4);
    if (u.total_mass() == 0 || v.total_mass() == 0) continue;
    double t = 0.475;
    Ums uv = Ums::concat(u, v, t);
    SmoothTruncation rho{6.0};
    for (int n = 1; n <= 2; ++n) {
      PhiSpec spec{n, PhiFunction::pair_exp(0.5)};
      double g_all = g_additive(uv, spec, rho, t, 1.1);
      double g_u = g_additive(u, spec, rho, t, 1.1);
      double g_v = g_additive(v, spec, rho, t, 1.1);
      EXPECT_NEAR(g_all, g_u + g_v, 1e-9 * std::max(1.0, std::abs(g_all)));
    }
  }
}

TEST(Polynomials, MonteCarloAgreesWithExact) {
  Rng rng(2024);
  Ums u = random_ums(rng, 40);
  if (u.total_mass() == 0) GTEST_SKIP();
  PhiSpec spec{2, PhiFunction::pair_exp(0.6)};
  EvalOptions exact_opts;
  double exact = eval_polynomial(u, spec, exact_opts).value;
  EvalOptions mc_opts;
  mc_opts.exact_threshold = 1;  // force the Monte Carlo path
  mc_opts.mc_tuples = 200'000;
  EvalResult mc = eval_polynomial(u, spec, mc_opts, &rng);
  EXPECT_FALSE(mc.exact);
  EXPECT_GT(mc.std_error, 0.0);
  EXPECT_NEAR(mc.value, exact, 4 * mc.std_error + 1e-12);
}

TEST(Polynomials, CatalogSerialization) {
  PhiFunction phi = PhiFunction::pair_gauss(0.25, 0.75);
  PhiFunction back = PhiFunction::from_id(phi.id(), phi.params());
  std::vector<double> r = {0.3};
  EXPECT_EQ(back.value(r), phi.value(r));
  std::vector<double> none, one = {1.0};
  EXPECT_THROW(PhiFunction::from_id("nope", none), std::invalid_argument);
  EXPECT_THROW(PhiFunction::from_id("pair_gauss", one), std::invalid_argument);
}
