#include "genealogy/ums.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "genealogy/json_io.hpp"
#include "genealogy/verification.hpp"

using namespace genealogy;

namespace {

Ums two_leaves(double m1, double m2, double distance) {
  return Ums::join(distance / 2, {Ums::leaf(m1), Ums::leaf(m2)});
}

}  // namespace

TEST(Ums, ZeroTree) {
  Ums z;
  EXPECT_TRUE(z.is_zero());
  EXPECT_EQ(z.total_mass(), 0.0);
  EXPECT_EQ(z.diameter(), 0.0);
  EXPECT_EQ(z.n_leaves(), 0);
  EXPECT_EQ(z.canonical_form(), "Z");
}

TEST(Ums, TotalMassAdds) {
  EXPECT_EQ(two_leaves(2, 3, 1.0).total_mass(), 5.0);
  Ums u = two_leaves(1, 1, 0.4), v = Ums::leaf(2.5);
  Ums w = Ums::concat(u, v, 1.0);
  EXPECT_EQ(w.total_mass(), u.total_mass() + v.total_mass());
}

TEST(Ums, ZeroMassLeavesPruned) {
  EXPECT_TRUE(Ums::leaf(0).is_zero());
  Ums u = Ums::join(0.5, {Ums::leaf(0.0), Ums::leaf(2.0)});
  EXPECT_EQ(u.n_leaves(), 1);
  EXPECT_EQ(u.total_mass(), 2.0);
  EXPECT_EQ(u.diameter(), 0.0);  // the join collapsed to a single leaf
  EXPECT_THROW(Ums::leaf(-1.0), std::invalid_argument);
}

TEST(Ums, HeightMonotonicityEnforced) {
  Ums inner = two_leaves(1, 1, 2.0);  // join height 1
  EXPECT_THROW(Ums::join(0.5, {inner, Ums::leaf(1)}), std::invalid_argument);
}

TEST(Ums, TruncateCapsDistances) {
  Ums u = two_leaves(1, 1, 5.0);
  Ums t = u.truncate(1.0);
  EXPECT_EQ(t.leaf_distance(0, 1), 2.0);
  EXPECT_EQ(t.total_mass(), u.total_mass());
  // identity on S_h
  EXPECT_TRUE(Ums::is_isomorphic(u.truncate(10.0), u));
  // composition as min of levels
  EXPECT_TRUE(Ums::is_isomorphic(u.truncate(2.0).truncate(0.7), u.truncate(0.7)));
  EXPECT_THROW(u.truncate(-0.1), std::invalid_argument);
}

TEST(Ums, ConcatSemantics) {
  Ums u = two_leaves(1, 2, 0.6), v = Ums::leaf(3);
  double h = 1.0;
  Ums w = Ums::concat(u, v, h);
  EXPECT_EQ(w.total_mass(), 6.0);
  // cross-component distances are exactly 2h
  EXPECT_EQ(w.n_leaves(), 3);
  EXPECT_EQ(w.leaf_distance(0, 2), 2 * h);
  EXPECT_EQ(w.leaf_distance(1, 2), 2 * h);
  EXPECT_EQ(w.leaf_distance(0, 1), 0.6);
  // neutral element and commutativity
  EXPECT_TRUE(Ums::is_isomorphic(Ums::concat(u, Ums{}, h), u.truncate(h)));
  EXPECT_TRUE(Ums::is_isomorphic(Ums::concat(u, v, h), Ums::concat(v, u, h)));
  // truncation at the same level is a no-op
  EXPECT_TRUE(Ums::is_isomorphic(w.truncate(h), w));
}

TEST(Ums, DecomposeInversesConcat) {
  Ums u = two_leaves(1, 2, 0.6), v = two_leaves(0.5, 0.25, 0.8);
  double h = 1.0;
  Ums w = Ums::concat(u, v, h);
  std::vector<Ums> parts = w.decompose(h);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_TRUE((Ums::is_isomorphic(parts[0], u) && Ums::is_isomorphic(parts[1], v)) ||
              (Ums::is_isomorphic(parts[0], v) && Ums::is_isomorphic(parts[1], u)));
  // single ball
  std::vector<Ums> one = u.decompose(1.0);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(Ums::is_isomorphic(one[0], u));
  // three singletons pairwise at 2h
  std::vector<Ums> leaves = {Ums::leaf(1), Ums::leaf(2), Ums::leaf(3)};
  Ums f = Ums::forest(leaves, h);
  EXPECT_EQ(f.decompose(h).size(), 3u);
  // not in S_h
  EXPECT_THROW(u.decompose(0.1), std::domain_error);
}

TEST(Ums, TrunkMatchesHandComputation) {
  // leaves A(1), B(2) merge at height 0.5; C(4) joins at height 1.5.
  Ums ab = Ums::join(0.5, {Ums::leaf(1), Ums::leaf(2)});
  Ums u = Ums::join(1.5, {ab, Ums::leaf(4)});
  // depth 1: open 2-balls are {A,B} and {C}; cross distance 3 - 2 = 1.
  Ums tk = u.trunk(1.0);
  Ums expected = Ums::join(0.5, {Ums::leaf(3), Ums::leaf(4)});
  EXPECT_TRUE(Ums::is_isomorphic(tk, expected));
  EXPECT_EQ(tk.total_mass(), u.total_mass());

  // single ball: everything collapses to one atom
  EXPECT_TRUE(Ums::is_isomorphic(u.trunk(2.0), Ums::leaf(7)));

  // families mutually at exactly 2t collapse to a single atom at distance 0
  std::vector<Ums> leaves = {Ums::leaf(1), Ums::leaf(2), Ums::leaf(3)};
  Ums f = Ums::forest(leaves, 1.0);
  Ums collapsed = f.trunk(1.0);
  EXPECT_TRUE(Ums::is_isomorphic(collapsed, Ums::leaf(6)));
  EXPECT_THROW(u.trunk(0.0), std::invalid_argument);
}

TEST(Ums, SampleDistanceMatrix) {
  Rng rng(12);
  // single leaf: r == 0 surely
  DistanceMatrix m = Ums::leaf(1.0).sample_distance_matrix(2, rng);
  EXPECT_EQ(m(0, 1), 0.0);
  // two leaves p, 1-p at distance d: P(r = d) = 2 p (1-p)
  double p = 0.3, d = 0.8;
  Ums u = two_leaves(p, 1 - p, d);
  int hits = 0;
  const int R = 20000;
  for (int r = 0; r < R; ++r) hits += u.sample_distance_matrix(2, rng)(0, 1) == d;
  double target = 2 * p * (1 - p);
  double se = std::sqrt(target * (1 - target) / R);
  EXPECT_NEAR(double(hits) / R, target, 3 * se);
  EXPECT_THROW(Ums{}.sample_distance_matrix(1, rng), std::domain_error);
}

TEST(Ums, SampledMatricesAreUltrametric) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    Ums u = random_ums(rng, 32);
    if (u.total_mass() == 0) continue;
    DistanceMatrix m = u.sample_distance_matrix(5, rng);
    EXPECT_TRUE(m.is_ultrametric(0.0));
  }
}

TEST(Ums, CanonicalFormInvariance) {
  // permuted leaf order
  Ums a = Ums::join(1.0, {Ums::leaf(1), Ums::leaf(2)});
  Ums b = Ums::join(1.0, {Ums::leaf(2), Ums::leaf(1)});
  EXPECT_TRUE(Ums::is_isomorphic(a, b));
  // distance is an invariant
  EXPECT_FALSE(Ums::is_isomorphic(two_leaves(1, 1, 2.0), two_leaves(1, 1, 4.0)));
  // mass is an invariant
  EXPECT_FALSE(Ums::is_isomorphic(two_leaves(1, 1, 2.0), two_leaves(1, 2, 2.0)));
}

TEST(Ums, LeafDistancesMatrixAgreesWithPairQueries) {
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    Ums u = random_ums(rng, 24);
    DistanceMatrix m = u.leaf_distances();
    for (int a = 0; a < u.n_leaves(); ++a)
      for (int b = a + 1; b < u.n_leaves(); ++b)
        EXPECT_EQ(m(a, b), u.leaf_distance(a, b));
  }
}

TEST(Ums, JsonRoundTripBitExact) {
  Rng rng(33);
  for (int i = 0; i < 20; ++i) {
    Ums u = random_ums(rng, 16);
    std::string j = ums_to_json(u);
    Ums back = ums_from_json(j);
    EXPECT_EQ(ums_to_json(back), j);
    EXPECT_EQ(back.total_mass(), u.total_mass());
    EXPECT_TRUE(Ums::is_isomorphic(back, u, 1e-15));
  }
}

TEST(DistanceMatrixTest, UltrametricCheck) {
  DistanceMatrix m(3);
  m.set(0, 1, 1.0);
  m.set(0, 2, 2.0);
  m.set(1, 2, 2.0);
  EXPECT_TRUE(m.is_ultrametric());
  m.set(1, 2, 3.0);
  EXPECT_FALSE(m.is_ultrametric());
}
