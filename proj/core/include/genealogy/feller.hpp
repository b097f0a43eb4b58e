#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "genealogy/random.hpp"
#include "genealogy/ums.hpp"

namespace genealogy {

// Thrown when a simulation exceeds its particle budget (CLI exit code 3).
struct ResourceCapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Individual-based approximation of the U-valued Feller diffusion: critical
// binary branching at N particles per unit mass.  Each particle waits an
// Exp(b*N) clock and then splits into two with probability (1 + a/(bN))/2,
// otherwise dies.  This calibration gives E[mass_t] = mass_0 * e^{at} and
// Var[mass_t] = b * mass_0 * (e^{2at} - e^{at})/a at every N.
struct GwConfig {
  double b = 1.0;
  double a = 0.0;
  int particles_per_unit_mass = 1000;  // N
  Ums initial;                         // each leaf of mass m spawns round(m*N) founders
  double horizon = 1.0;
  long long particle_cap = 10'000'000;

  void validate() const {
    if (particles_per_unit_mass < 1)
      throw std::invalid_argument("GwConfig: N >= 1");
    if (!(b > 0)) throw std::invalid_argument("GwConfig: b > 0");
    if (!(std::abs(a) < b * particles_per_unit_mass))
      throw std::invalid_argument("GwConfig: need |a| < b*N");
    if (horizon < 0) throw std::invalid_argument("GwConfig: horizon >= 0");
    if (particle_cap < 1) throw std::invalid_argument("GwConfig: particle_cap >= 1");
  }
  double event_rate() const { return b * particles_per_unit_mass; }
  double split_prob() const { return 0.5 * (1.0 + a / event_rate()); }
};

struct Particle {
  int32_t parent;   // -1 for founders
  int32_t founder;  // index of root founder
  double birth;
  double death;  // event time; +inf when alive at the horizon
  bool split;    // true when the death event produced two children
};

// Event-ordered record of every particle of one run.
struct Genealogy {
  GwConfig cfg;
  std::vector<Particle> particles;
  std::vector<int32_t> founder_leaf;  // founder -> initial leaf index
  int32_t n_founders = 0;
  double horizon = 0;

  double alive_mass(double t) const;
};

Genealogy simulate_gw(const GwConfig& cfg, Rng& rng);

// Genealogy of the particles alive at time t as an Ums: leaves of mass 1/N,
// merge height of two particles = t - (their MRCA's split time); founders
// inherit the initial state's distances shifted by +2t.
Ums extract_ums(const Genealogy& g, double t);

// Alive mass at each grid time.
std::vector<double> total_mass_path(const Genealogy& g, std::span<const double> grid);

// Fused fast path: same event-driven simulation, but builds the reduced
// genealogy of the horizon-time survivors directly and keeps no record.
// Draw-for-draw equivalent to extract_ums(simulate_gw(cfg, rng), horizon)
// with the same rng stream.
Ums simulate_reduced(const GwConfig& cfg, Rng& rng);

// Count-only fast path for family-size statistics: per-founder alive counts
// at each checkpoint (ascending, all <= horizon).  Same draw order again.
struct FamilyCounts {
  std::vector<double> times;
  // counts[k][f] = particles of founder f alive at times[k]
  std::vector<std::vector<int32_t>> counts;

  double mass_at(int k, int N) const;
  // sum over founders of (count/N)^2: the truncated second moment
  // Phi^{2, 1(r12 < 2t)} of the extracted state when founders are mutually
  // at distance >= 2t.
  double sum_square_family_masses(int k, int N) const;
};
FamilyCounts simulate_family_counts(const GwConfig& cfg, std::span<const double> times,
                                    Rng& rng);

}  // namespace genealogy
