#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genealogy/coalescent.hpp"
#include "genealogy/feller.hpp"
#include "genealogy/polynomials.hpp"
#include "genealogy/spatial.hpp"

namespace genealogy {

// One checked quantity: either an exact residual (tolerance class "exact",
// default 1e-9) or a z-score (tolerance class "statistical", default 3).
struct TestRow {
  std::string name;
  double estimate = 0;
  double se = 0;       // statistical rows
  double target = 0;   // reference value
  double statistic = 0;  // |z| or |residual|
  double threshold = 0;
  bool statistical = false;
  bool pass = false;
  // duality rows carry the two-sided estimates under their own names
  bool two_sided = false;
  double lhs_se = 0, rhs_se = 0, ess = 0;
  long long n_replicates = 0;
};

struct TestReport {
  std::string id;
  std::string params;  // JSON blob of the configuration
  std::vector<TestRow> rows;
  long long replicates = 0;
  bool pass = false;
  double wall_time_sec = 0;  // not serialized unless asked
  std::string note;

  void finish();  // pass = all rows pass
  std::string to_json(bool with_timings = false) const;
};

// ---------------------------------------------------------------------------

struct MomentTestConfig {
  double b = 1.0;
  std::vector<double> drifts = {1.0, 0.5};
  std::vector<double> times = {0.5, 1.0};
  int particles_per_unit_mass = 2000;
  long long replicates = 20'000;
  double initial_mass = 1.0;
  bool include_zero_drift = true;  // a->0 variant versus b*mass*t
  uint64_t seed = 2024;
  int threads = 0;
  double z_max = 3.0;
  double rel_tol = 0.03;
};

// Second-moment identity: E[Phi^{2,1(r12<2t)}(U_t)] versus
// b*mass*(e^{2at}-e^{at})/a and versus the empirical total-mass variance.
TestReport test_moment_recursion(const MomentTestConfig& cfg);

// ---------------------------------------------------------------------------

struct BranchingTestConfig {
  double b = 1.0;
  double a = 0.0;
  int particles_per_unit_mass = 8;
  std::vector<double> times = {0.25, 0.5};
  long long replicates = 100'000;
  uint64_t seed = 77;
  int threads = 0;
  double z_max = 3.0;
  bool nonspatial = true;
  bool spatial_location = true;
  bool spatial_path = true;
  std::vector<double> dist_stat_cuts = {0.25, 0.5, 1.0};  // fractions of 2t
};

// Generalized branching property: E[h_t(X^{x1 u x2}_t)] versus
// E[h_t(X^{x1}_t)] E[h_t(X^{x2}_t)] for a battery of multiplicative
// h_t = exp(-Phi_t), plus distance-matrix statistics of T_t X^{x1 u x2}
// versus T_t(X^{x1} u^t X^{x2}).
TestReport test_generalized_branching(const BranchingTestConfig& cfg);

// ---------------------------------------------------------------------------

struct DualityTestConfig {
  double b = 1.0;
  std::vector<int> orders = {1, 2, 3};
  std::vector<double> times = {0.25, 0.5};
  long long replicates = 100'000;
  int particles_per_unit_mass = 1000;
  uint64_t seed = 99;
  int threads = 0;
  double z_max = 3.0;
  bool spatial = true;
  bool convention_row = true;  // extra b=2 row separating the FK conventions
  bool drift_row = true;       // extra a!=0 row
  FkConvention fk = FkConvention::b_pairs_plus_drift;
};

TestReport test_duality(const DualityTestConfig& cfg);

// ---------------------------------------------------------------------------

struct AlgebraTestConfig {
  int instances = 1000;
  int max_leaves = 64;
  uint64_t seed = 7;
  double tol = 1e-9;
  int monotone_instances = 100;  // smooth-truncation approximation battery
  double monotone_rel_tol = 0.01;
};

// Exact laws: semigroup, truncation, decompose/concat, trunk, mass
// conservation, truncated-polynomial additivity, exp multiplicativity,
// theta ultrametricity, g-additivity, path-genealogy coupling, R_t.
TestReport test_algebra_suite(const AlgebraTestConfig& cfg);
TestReport test_monotone_approximation(const AlgebraTestConfig& cfg);

// ---------------------------------------------------------------------------

struct CalibrationTestConfig {
  double b = 1.0;
  std::vector<double> drifts = {0.0, 1.0, -0.5};
  double t = 0.5;
  int particles_per_unit_mass = 500;
  long long replicates = 20'000;
  uint64_t seed = 5;
  int threads = 0;
  double z_max = 3.0;
};

// E[mass_t] versus mass_0 e^{at}; spatial mean occupation versus the
// matrix-exponential flow oracle.
TestReport test_calibration(const CalibrationTestConfig& cfg);

// Seeded random dendrograms for the exact suites (dyadic masses, gridded
// heights, <= max_leaves leaves).
Ums random_ums(Rng& rng, int max_leaves, double height_scale = 1.0);
MarkedUms random_marked_ums(Rng& rng, int max_leaves, int n_sites, MarkMode mode,
                            double height_scale = 1.0);

}  // namespace genealogy
