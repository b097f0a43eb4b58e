#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "genealogy/polynomials.hpp"
#include "genealogy/spatial.hpp"
#include "genealogy/ums.hpp"

namespace genealogy {

// Rate convention for the Feynman-Kac exponent.  The branching generator's
// diagonal term gives rate b*C(#p,2) + a*#p (spatially b per co-located pair);
// `pairs_only` drops the b factor, matching the bare exponent in the source
// duality statement.  duality_check discriminates between the two numerically.
enum class FkConvention { b_pairs_plus_drift, pairs_plus_drift };

// Partition-valued dual state: partition of {0..n-1} with a growing distance
// matrix, Feynman-Kac accumulator, optional site marks and per-lineage
// backward paths, and optional activation times (frozen lineages).
struct CoalescentState {
  int n = 0;
  std::vector<int32_t> block_of;   // block representative per index
  DistanceMatrix r_prime;          // pairwise dual distances
  double elapsed = 0;
  double beta = 0;                 // FK accumulator
  std::vector<int32_t> site_of;    // per index (spatial); representative's is live
  std::vector<AncestralPath> lineage;  // per index, jumps in dual time
  std::vector<double> activation;  // per index; active iff elapsed >= activation

  int n_blocks() const;
  bool same_block(int i, int j) const { return block_of[i] == block_of[j]; }
  bool active(int i) const { return elapsed >= activation[i]; }
  std::vector<int32_t> block_representatives() const;
};

struct CoalescentConfig {
  int n = 2;
  double b = 1.0;
  double a = 0.0;  // drift contribution a*#p to the FK exponent
  double horizon = 1.0;
  FkConvention fk = FkConvention::b_pairs_plus_drift;
  // spatial fields; empty space means the nonspatial Kingman dual
  std::optional<SiteSpace> space;
  std::vector<int32_t> init_sites;
  std::vector<double> activation;  // empty = all active at 0

  void validate() const;
};

// Kingman coalescent with distances growing at rate 2 between indices in
// distinct blocks and pairwise block merges at rate b; beta accumulates the
// FK exponent.  Returns the post-event trajectory (initial state included).
std::vector<CoalescentState> simulate_kingman(int n, double b, double horizon,
                                              Rng& rng,
                                              const CoalescentConfig* extra = nullptr);

// Spatial version: blocks migrate at rate 1 with the plain kernel a(.,.) and
// co-located active pairs merge at rate b; beta accumulates
// b * sum_sites C(#active blocks at site, 2) + a * #active blocks.
std::vector<CoalescentState> simulate_spatial_coalescent(const CoalescentConfig& cfg,
                                                         Rng& rng);

CoalescentState run_coalescent(const CoalescentConfig& cfg, Rng& rng);  // final state

// Duality pairing H(u0, C): samples one leaf per block of `c` from u0
// (mass-weighted; spatially from the per-site measure at the block's current
// site), evaluates phi on sampled distances + r' under the smooth window
// rho(2t - .), optionally times chi on marks / glued lineage paths.
double duality_pairing(const Ums& u0, const CoalescentState& c, const PhiSpec& spec,
                       const SmoothTruncation& rho, double t,
                       const EvalOptions& opts = {}, Rng* rng = nullptr);
double duality_pairing_marked(const MarkedUms& u0, const CoalescentState& c,
                              const MarkedPhiSpec& spec, const SmoothTruncation& rho,
                              double t, const EvalOptions& opts = {},
                              Rng* rng = nullptr);

// One functional checked against its dual representation; rows of a battery
// share the forward ensemble (one simulation per replicate serves every row).
struct DualityRow {
  std::string name;
  int n = 2;
  PhiFunction phi = PhiFunction::constant();
  FkConvention fk = FkConvention::b_pairs_plus_drift;
  std::vector<int32_t> init_sites;  // dual initial sites (spatial, size n)
};

struct DualityCheckConfig {
  double b = 1.0;
  double a = 0.0;
  double t = 0.25;
  SmoothTruncation rho{8.0};
  long long replicates = 100'000;
  uint64_t seed = 1;
  int threads = 0;  // 0 = hardware / GENEALOGY_THREADS
  // forward model
  int particles_per_unit_mass = 1000;
  Ums u0 = Ums::leaf(1.0);
  // spatial variant (location marks; lhs chi = site indicators at the dual's
  // initial sites)
  std::optional<SiteSpace> space;
  std::vector<int32_t> forward_sites;  // per u0 leaf
  std::vector<DualityRow> rows = {DualityRow{}};
};

struct DualityReport {
  std::string name;
  double lhs = 0, lhs_se = 0;  // forward E[Phi^{n, phi rho_t}(U_t)]
  double rhs = 0, rhs_se = 0;  // dual E[H(u0, C_t) e^beta]
  double z = 0;
  long long replicates = 0;
  double ess = 0;  // (sum w)^2 / sum w^2 of the FK weights
};

std::vector<DualityReport> duality_check_battery(const DualityCheckConfig& cfg);
DualityReport duality_check(const DualityCheckConfig& cfg);  // first row only

}  // namespace genealogy
