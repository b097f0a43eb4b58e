#include "genealogy/spatial.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "genealogy/json_io.hpp"
#include "genealogy/verification.hpp"

using namespace genealogy;

namespace {

GwConfig base_config(double a, double b, int N, double horizon) {
  GwConfig cfg;
  cfg.a = a;
  cfg.b = b;
  cfg.particles_per_unit_mass = N;
  cfg.initial = Ums::leaf(1.0);
  cfg.horizon = horizon;
  return cfg;
}

AncestralPath make_path(int init, std::vector<double> times, std::vector<int32_t> sites) {
  AncestralPath p;
  p.initial_site = init;
  p.jump_times = std::move(times);
  p.jump_sites = std::move(sites);
  return p;
}

}  // namespace

TEST(SiteSpace, Validation) {
  EXPECT_NO_THROW(SiteSpace::uniform(3).validate());
  EXPECT_THROW(SiteSpace::from_matrix(2, {0.5, 0.4, 0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(SiteSpace::from_matrix(2, {1.5, -0.5, 0.5, 0.5}), std::invalid_argument);
}

TEST(AncestralPathTest, EvaluationAndFreezing) {
  AncestralPath p = make_path(0, {-0.9, -0.3}, {1, 2});
  EXPECT_EQ(p.site_at(-1.0), 0);
  EXPECT_EQ(p.site_at(-0.9), 1);  // cadlag: value at the jump time is the new site
  EXPECT_EQ(p.site_at(-0.5), 1);
  EXPECT_EQ(p.site_at(0.0), 2);
  EXPECT_EQ(p.final_site(), 2);

  // depth-0.5 truncation of the adjusted path: jump at -0.9 erased, value on
  // (-inf,-0.5] frozen to v(-0.5) = 1
  AncestralPath f = p.frozen_before(-0.5);
  EXPECT_EQ(f.initial_site, 1);
  ASSERT_EQ(f.jump_times.size(), 1u);
  EXPECT_EQ(f.jump_times[0], -0.3);
  EXPECT_EQ(f.jump_sites[0], 2);
  // idempotent
  EXPECT_TRUE(f.frozen_before(-0.5) == f);
}

TEST(AncestralPathTest, ShiftRoundTripIsExact) {
  AncestralPath p = make_path(0, {0.1, 0.37}, {2, 1});
  AncestralPath q = p;
  q.shift(-0.81);
  EXPECT_EQ(q.site_at(0.1 - 0.81), 2);
  q.shift(0.81);
  EXPECT_TRUE(q == p);
  EXPECT_EQ(q.time_offset, 0.0);
}

TEST(SpatialSim, SingleSiteMatchesFellerExactly) {
  GwConfig cfg = base_config(0.4, 1.0, 12, 0.7);
  SiteSpace one = SiteSpace::single_site();
  MarkedUms init = MarkedUms::at_site(cfg.initial, 0);
  for (uint64_t stream = 0; stream < 10; ++stream) {
    Rng r1(21, stream), r2(21, stream);
    Genealogy g0 = simulate_gw(cfg, r1);
    SpatialGenealogy g1 = simulate_brw(one, cfg, init, r2);
    ASSERT_EQ(g0.particles.size(), g1.particles.size());
    for (size_t i = 0; i < g0.particles.size(); ++i) {
      EXPECT_EQ(g0.particles[i].parent, g1.particles[i].parent);
      EXPECT_EQ(g0.particles[i].birth, g1.particles[i].birth);
      EXPECT_EQ(g0.particles[i].death, g1.particles[i].death);
      EXPECT_EQ(g0.particles[i].split, g1.particles[i].split);
    }
    EXPECT_TRUE(g1.jump_time.empty());  // no migration events on one site
    EXPECT_TRUE(Ums::is_isomorphic(extract_ums(g0, 0.7),
                                   extract_marked_ums(g1, 0.7, MarkMode::location).ums));
  }
}

TEST(SpatialSim, LocationMarkEqualsPathEvaluatedNow) {
  SiteSpace space = SiteSpace::uniform(3);
  GwConfig cfg = base_config(0.0, 1.0, 10, 0.5);
  MarkedUms init = MarkedUms::at_site(cfg.initial, 1);
  for (uint64_t stream = 0; stream < 10; ++stream) {
    Rng rng(31, stream);
    SpatialGenealogy g = simulate_brw(space, cfg, init, rng);
    MarkedUms loc = extract_marked_ums(g, 0.5, MarkMode::location);
    MarkedUms raw = extract_marked_ums(g, 0.5, MarkMode::path_raw);
    ASSERT_EQ(loc.ums.n_leaves(), raw.ums.n_leaves());
    for (int i = 0; i < loc.ums.n_leaves(); ++i) {
      EXPECT_EQ(loc.sites[i], raw.paths[i].site_at(0.5));
      EXPECT_EQ(raw.paths[i].site_at(-1.0), 1);  // constant before 0
    }
  }
}

TEST(SpatialSim, PathsShareAncestralSegments) {
  SiteSpace space = SiteSpace::uniform(4);
  GwConfig cfg = base_config(0.0, 1.5, 8, 0.6);
  MarkedUms init = MarkedUms::at_site(cfg.initial, 0);
  Rng rng(41);
  SpatialGenealogy g = simulate_brw(space, cfg, init, rng);
  MarkedUms raw = extract_marked_ums(g, 0.6, MarkMode::path_raw);
  int L = raw.ums.n_leaves();
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j) {
      double split = 0.6 - raw.ums.leaf_distance(i, j) / 2;
      for (double frac : {0.0, 0.5, 1.0}) {
        double s = split * frac;
        EXPECT_EQ(raw.paths[i].site_at(s), raw.paths[j].site_at(s));
      }
    }
}

TEST(SpatialSim, AdjustAndUnadjustAreInverse) {
  SiteSpace space = SiteSpace::uniform(3);
  GwConfig cfg = base_config(0.2, 1.0, 8, 0.5);
  MarkedUms init = MarkedUms::at_site(cfg.initial, 2);
  Rng rng(51);
  SpatialGenealogy g = simulate_brw(space, cfg, init, rng);
  MarkedUms raw = extract_marked_ums(g, 0.5, MarkMode::path_raw);
  MarkedUms adj = adjust_paths(raw, 0.5);
  EXPECT_EQ(adj.mode, MarkMode::path_adjusted);
  // adjusted paths live in D_{-t,0}
  for (const AncestralPath& p : adj.paths)
    for (size_t k = 0; k < p.jump_times.size(); ++k) {
      EXPECT_LE(p.effective_time(k), 0.0);
      EXPECT_GE(p.effective_time(k), -0.5);
    }
  MarkedUms back = unadjust_paths(adj, 0.5);
  for (int i = 0; i < raw.ums.n_leaves(); ++i)
    EXPECT_TRUE(back.paths[i] == raw.paths[i]);
  EXPECT_THROW(adjust_paths(adj, 0.5), std::invalid_argument);
  EXPECT_THROW(unadjust_paths(raw, 0.5), std::invalid_argument);
}

TEST(SpatialSim, TruncateMarkedModes) {
  // location mode: marks untouched, distances capped
  Ums base = Ums::join(1.0, {Ums::leaf(1), Ums::leaf(1)});
  MarkedUms loc;
  loc.ums = base;
  loc.mode = MarkMode::location;
  loc.sites = {0, 1};
  MarkedUms lt = truncate_marked(loc, 0.25);
  EXPECT_EQ(lt.sites, loc.sites);
  EXPECT_EQ(lt.ums.leaf_distance(0, 1), 0.5);

  // adjusted path mode: freeze before -h
  MarkedUms adj;
  adj.ums = base;
  adj.mode = MarkMode::path_adjusted;
  adj.paths = {make_path(0, {-0.9, -0.3}, {1, 2}), make_path(2, {}, {})};
  MarkedUms at = truncate_marked(adj, 0.5);
  EXPECT_EQ(at.paths[0].initial_site, 1);
  ASSERT_EQ(at.paths[0].jump_times.size(), 1u);
  EXPECT_EQ(at.paths[0].jump_times[0], -0.3);
  EXPECT_TRUE(at.paths[1] == adj.paths[1]);
  // idempotent at the same depth
  EXPECT_TRUE(truncate_marked(at, 0.5).paths[0] == at.paths[0]);

  // raw mode freezes below horizon - h
  MarkedUms raw;
  raw.ums = base;
  raw.mode = MarkMode::path_raw;
  raw.horizon = 1.0;
  raw.paths = {make_path(0, {0.2, 0.8}, {1, 2}), make_path(1, {}, {})};
  MarkedUms rt = truncate_marked(raw, 0.5);
  EXPECT_EQ(rt.paths[0].initial_site, 1);  // value at 0.5
  ASSERT_EQ(rt.paths[0].jump_times.size(), 1u);
  EXPECT_EQ(rt.paths[0].jump_times[0], 0.8);
}

TEST(SpatialSim, ConcatMarked) {
  MarkedUms u = MarkedUms::at_site(Ums::leaf(1.0), 0);
  MarkedUms v = MarkedUms::at_site(Ums::leaf(2.0), 1);
  MarkedUms w = concat_marked(u, v, 0.5);
  EXPECT_EQ(w.ums.total_mass(), 3.0);
  EXPECT_EQ(w.ums.leaf_distance(0, 1), 1.0);
  EXPECT_EQ(w.sites[0], 0);
  EXPECT_EQ(w.sites[1], 1);
  MarkedUms path_mode;
  path_mode.ums = Ums::leaf(1.0);
  path_mode.mode = MarkMode::path_adjusted;
  path_mode.paths = {make_path(0, {}, {})};
  EXPECT_THROW(concat_marked(u, path_mode, 0.5), std::invalid_argument);
  EXPECT_TRUE(Ums::is_isomorphic(concat_marked(u, MarkedUms{}, 0.5).ums,
                                 u.ums.truncate(0.5)));
}

TEST(SpatialSim, HistoricalProjection) {
  MarkedUms m;
  m.ums = Ums::forest(std::vector<Ums>{Ums::leaf(1.0), Ums::leaf(0.5), Ums::leaf(0.25)}, 1.0);
  m.mode = MarkMode::path_adjusted;
  AncestralPath p1 = make_path(0, {-0.2}, {1});
  m.paths = {p1, p1, make_path(0, {}, {})};  // two leaves share a path
  auto proj = historical_projection(m);
  ASSERT_EQ(proj.size(), 2u);
  double total = 0;
  for (const auto& [path, mass] : proj) total += mass;
  EXPECT_DOUBLE_EQ(total, m.ums.total_mass());
  EXPECT_DOUBLE_EQ(proj[0].second, 1.5);  // merged duplicate paths

  std::vector<double> occ_now = occupation_measure(proj, 2, 0.0);
  EXPECT_DOUBLE_EQ(occ_now[0], 0.25);  // the constant path stays at site 0
  EXPECT_DOUBLE_EQ(occ_now[1], 1.5);
  std::vector<double> occ_old = occupation_measure(proj, 2, -1.0);
  EXPECT_DOUBLE_EQ(occ_old[0], 1.75);  // everyone started at site 0
  EXPECT_DOUBLE_EQ(occ_old[1], 0.0);
}

TEST(SpatialSim, OccupationMatchesLocationMarks) {
  SiteSpace space = SiteSpace::uniform(3);
  GwConfig cfg = base_config(0.0, 1.0, 16, 0.4);
  MarkedUms init = MarkedUms::at_site(cfg.initial, 0);
  Rng rng(61);
  SpatialGenealogy g = simulate_brw(space, cfg, init, rng);
  MarkedUms adj = extract_marked_ums(g, 0.4, MarkMode::path_adjusted);
  auto proj = historical_projection(adj);
  std::vector<double> occ = occupation_measure(proj, 3, 0.0);
  std::vector<double> direct = g.occupation(0.4);
  for (int s = 0; s < 3; ++s) EXPECT_NEAR(occ[s], direct[s], 1e-12);
}

TEST(SpatialSim, MeanOccupationMatchesFlowOracle) {
  SiteSpace space = SiteSpace::from_matrix(2, {0.3, 0.7, 0.6, 0.4});
  const double a = 0.0, t = 0.5;
  GwConfig cfg = base_config(a, 1.0, 100, t);
  MarkedUms init = MarkedUms::at_site(cfg.initial, 0);
  const int R = 5000;
  std::vector<double> sum(2, 0.0), sum2(2, 0.0);
  for (int r = 0; r < R; ++r) {
    Rng rng(71, uint64_t(r));
    SpatialGenealogy g = simulate_brw(space, cfg, init, rng);
    std::vector<double> occ = g.occupation(t);
    for (int s = 0; s < 2; ++s) {
      sum[s] += occ[s];
      sum2[s] += occ[s] * occ[s];
    }
  }
  std::vector<double> oracle = mean_occupation_ode(space, a, {1.0, 0.0}, t);
  for (int s = 0; s < 2; ++s) {
    double mean = sum[s] / R, var = sum2[s] / R - mean * mean;
    EXPECT_NEAR(mean, oracle[s], 3 * std::sqrt(var / R));
  }
}

TEST(SpatialSim, MarkedPolynomialAgainstBruteForce) {
  // hand-built two-leaf path-mode instance, chi evaluating at {-0.2, 0}
  MarkedUms m;
  m.ums = Ums::join(0.3, {Ums::leaf(0.5), Ums::leaf(1.25)});
  m.mode = MarkMode::path_adjusted;
  m.paths = {make_path(0, {-0.2}, {1}), make_path(1, {-0.35, -0.1}, {0, 1})};

  MarkedPhiSpec spec;
  spec.n = 2;
  spec.phi = PhiFunction::pair_exp(0.9);
  spec.chi = ChiFunction::path_eval({ChiFunction::PathProbe{{-0.2, 0.0}, {1, 1}},
                                     ChiFunction::PathProbe{{0.0}, {1}}});
  // brute force over the 4 ordered leaf pairs
  double expected = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double mi = m.ums.leaf_mass(i), mj = m.ums.leaf_mass(j);
      double r = i == j ? 0.0 : 0.6;
      double chi1 = (m.paths[i].site_at(-0.2) == 1 && m.paths[i].site_at(0.0) == 1) ? 1 : 0;
      double chi2 = m.paths[j].site_at(0.0) == 1 ? 1 : 0;
      expected += mi * mj * std::exp(-0.9 * r) * chi1 * chi2;
    }
  EXPECT_DOUBLE_EQ(eval_marked_polynomial(m, spec).value, expected);

  // chi == 1 reduces to the plain polynomial
  MarkedPhiSpec plain;
  plain.n = 2;
  plain.phi = PhiFunction::pair_exp(0.9);
  PhiSpec ps{2, PhiFunction::pair_exp(0.9)};
  EXPECT_DOUBLE_EQ(eval_marked_polynomial(m, plain).value,
                   eval_polynomial(m.ums, ps).value);

  // n=1 site indicator: mass at a site
  MarkedUms loc;
  loc.ums = Ums::forest(std::vector<Ums>{Ums::leaf(0.5), Ums::leaf(2.0)}, 1.0);
  loc.mode = MarkMode::location;
  loc.sites = {0, 1};
  MarkedPhiSpec at1;
  at1.n = 1;
  at1.chi = ChiFunction::site_indicator({1});
  EXPECT_DOUBLE_EQ(eval_marked_polynomial(loc, at1).value, 2.0);

  // mode mismatch
  MarkedPhiSpec needs_paths;
  needs_paths.n = 1;
  needs_paths.chi = ChiFunction::path_eval({ChiFunction::PathProbe{{0.0}, {0}}});
  EXPECT_THROW(eval_marked_polynomial(loc, needs_paths), std::invalid_argument);
}

TEST(SpatialSim, MovingAverageChi) {
  MarkedUms m;
  m.ums = Ums::leaf(2.0);
  m.mode = MarkMode::path_adjusted;
  m.paths = {make_path(0, {-0.25}, {1})};
  // window [-0.5, 0]: site 1 occupies [-0.25, 0] -> half the window
  MarkedPhiSpec spec;
  spec.n = 1;
  spec.chi = ChiFunction::moving_average({1}, {-0.25}, 0.5);
  EXPECT_DOUBLE_EQ(eval_marked_polynomial(m, spec).value, 2.0 * 0.5);
}

TEST(SpatialSim, MarkedJsonRoundTrip) {
  SiteSpace space = SiteSpace::uniform(3);
  GwConfig cfg = base_config(0.1, 1.0, 6, 0.4);
  MarkedUms init = MarkedUms::at_site(cfg.initial, 1);
  Rng rng(81);
  SpatialGenealogy g = simulate_brw(space, cfg, init, rng);
  for (MarkMode mode : {MarkMode::location, MarkMode::path_raw, MarkMode::path_adjusted}) {
    MarkedUms m = extract_marked_ums(g, 0.4, mode);
    std::string j = marked_ums_to_json(m);
    MarkedUms back = marked_ums_from_json(j);
    EXPECT_EQ(marked_ums_to_json(back), j);
    EXPECT_EQ(back.mode, m.mode);
  }
}
