#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genealogy/feller.hpp"
#include "genealogy/polynomials.hpp"
#include "genealogy/ums.hpp"

namespace genealogy {

// Finite site space with a row-stochastic migration kernel a(i,j).
//
// Individuals in the forward dynamics jump i -> j at rate a_rev(i,j) = a(j,i);
// the coalescent dual moves at rate 1 with kernel a itself (self-jumps
// thinned).  These two generators are exact transposes, which is what the
// Feynman-Kac duality needs.  For doubly stochastic kernels (random walks on
// a group, uniform kernels) the forward motion is the usual rate-1 walk with
// the reversed kernel.
struct SiteSpace {
  int n_sites = 1;
  std::vector<double> kernel;  // row-major a(i,j); rows sum to 1

  static SiteSpace single_site();
  static SiteSpace uniform(int n);  // a(i,j) = 1/n
  static SiteSpace from_matrix(int n, std::vector<double> kernel);

  double a(int i, int j) const { return kernel[size_t(i) * n_sites + j]; }
  double a_rev(int i, int j) const { return a(j, i); }
  void validate() const;

  // Total value-changing jump rates out of site i.
  double leave_rate_rev(int i) const;  // sum_{j != i} a(j, i)
  double leave_rate_fwd(int i) const;  // 1 - a(i, i)
  int sample_rev_excluding_self(int i, Rng& rng) const;
  int sample_fwd_excluding_self(int i, Rng& rng) const;
};

// Piecewise-constant cadlag path: initial_site before the first jump, then
// value jump_sites[k] on [jump_time k, next jump).  Only value-changing jumps
// are stored; times strictly increase.  Time shifts are kept as a lazy
// offset so that shifting by t and back by -t is exact.
struct AncestralPath {
  int32_t initial_site = 0;
  std::vector<double> jump_times;  // base times; effective time = base + offset
  std::vector<int32_t> jump_sites;
  double time_offset = 0;

  double effective_time(size_t k) const { return jump_times[k] + time_offset; }
  int site_at(double s) const;
  int final_site() const { return jump_sites.empty() ? initial_site : jump_sites.back(); }
  void shift(double dt) { time_offset += dt; }
  // Freezes the path on (-inf, s]: the initial value becomes site_at(s) and
  // earlier jumps are erased.  The result carries materialized times.
  AncestralPath frozen_before(double s) const;
  bool operator==(const AncestralPath& o) const;
};

enum class MarkMode { location, path_raw, path_adjusted };

// Marked ultrametric measure space: an Ums whose leaves carry a site label
// (location mode) or an ancestral path (raw paths live in D_{0,horizon},
// adjusted paths in D_{-t,0}).  Mark k belongs to leaf k in leaf order.
struct MarkedUms {
  Ums ums;
  MarkMode mode = MarkMode::location;
  std::vector<int32_t> sites;        // location mode
  std::vector<AncestralPath> paths;  // path modes
  double horizon = 0;                // raw path mode only

  static MarkedUms at_site(const Ums& u, int site);
  int site_of_leaf(int leaf) const;
  void validate() const;
};

// Genealogy record with migration trajectories.
struct SpatialGenealogy {
  GwConfig cfg;
  SiteSpace space;
  std::vector<Particle> particles;
  std::vector<int32_t> birth_site;
  // migration jumps per particle: [jump_begin[i], jump_begin[i+1]) indexes
  // into jump_time/jump_site
  std::vector<int32_t> jump_begin;
  std::vector<double> jump_time;
  std::vector<int32_t> jump_site;
  std::vector<int32_t> founder_leaf;
  int32_t n_founders = 0;
  double horizon = 0;

  double alive_mass(double t) const;
  std::vector<double> occupation(double t) const;  // mass per site
};

// Branching random walk: branching exactly as simulate_gw plus independent
// migration at rate 1 with the reversed kernel.  Founder sites come from the
// initial marks (paths contribute their present value).
SpatialGenealogy simulate_brw(const SiteSpace& space, const GwConfig& cfg,
                              const MarkedUms& init, Rng& rng);

// Leaves as extract_ums; marks are the current site (location mode) or the
// line-of-descent path through the ancestors, constant before 0 and after t
// (raw path mode).
MarkedUms extract_marked_ums(const SpatialGenealogy& g, double t, MarkMode mode);

// The map R_t: shifts all path marks left by t, mapping D_{0,t} to D_{-t,0};
// the genealogy is unchanged.  unadjust_paths inverts it.
MarkedUms adjust_paths(const MarkedUms& u, double t);
MarkedUms unadjust_paths(const MarkedUms& u, double t);

// Depth-h truncation: distances capped at 2h; location marks unchanged; path
// marks frozen outside the depth-h window (raw: below horizon - h; adjusted:
// before -h).
MarkedUms truncate_marked(const MarkedUms& u, double h);
MarkedUms concat_marked(const MarkedUms& u, const MarkedUms& v, double h);

// Finite measure on paths: each leaf's path with its mass, duplicates merged.
std::vector<std::pair<AncestralPath, double>> historical_projection(const MarkedUms& u);
// Mass per site of the projection evaluated at path time s.
std::vector<double> occupation_measure(
    std::span<const std::pair<AncestralPath, double>> projection, int n_sites, double s);

// Mark functional catalog: products over samples of per-sample factors.
//   constant
//   site_indicator   : 1(site of sample k == xi_k), per-sample sites
//   path_eval        : prod_j 1(path_k(t_{kj}) == xi_{kj}), per-sample tableaus
//   moving_average   : integral of a triangle kernel against 1(path == xi)
struct ChiFunction {
  enum class Kind { constant, site_indicator, path_eval, moving_average };
  struct PathProbe {
    std::vector<double> times;
    std::vector<int32_t> sites;
  };

  static ChiFunction constant();
  static ChiFunction site_indicator(std::vector<int32_t> sites);
  static ChiFunction path_eval(std::vector<PathProbe> probes);
  // per sample k: (1/width) * int_{c_k-width/2}^{c_k+width/2} 1(path = xi_k)
  static ChiFunction moving_average(std::vector<int32_t> sites,
                                    std::vector<double> centers, double width);

  Kind kind = Kind::constant;
  std::vector<int32_t> sites;
  std::vector<PathProbe> probes;
  std::vector<double> centers;
  double width = 0;

  bool needs_paths() const {
    return kind == Kind::path_eval || kind == Kind::moving_average;
  }
  // factor for sample position k given the mark of the chosen leaf
  double factor(int k, const MarkedUms& u, int leaf) const;
};

struct MarkedPhiSpec {
  int n = 1;
  PhiFunction phi = PhiFunction::constant();
  ChiFunction chi;
};

EvalResult eval_marked_polynomial(const MarkedUms& u, const MarkedPhiSpec& spec,
                                  const EvalOptions& opts = {}, Rng* rng = nullptr);
// Truncated / smoothly truncated variants (the chi factor is evaluated on the
// truncated marks, which for in-window probes equals the raw evaluation).
EvalResult eval_marked_truncated(const MarkedUms& u, const MarkedPhiSpec& spec,
                                 double t, const EvalOptions& opts = {},
                                 Rng* rng = nullptr);
EvalResult eval_marked_smooth(const MarkedUms& u, const MarkedPhiSpec& spec,
                              const SmoothTruncation& rho, double t,
                              const EvalOptions& opts = {}, Rng* rng = nullptr);

// Fused fast path mirroring simulate_reduced: extracts at the horizon.
MarkedUms simulate_reduced_marked(const SiteSpace& space, const GwConfig& cfg,
                                  const MarkedUms& init, MarkMode mode, Rng& rng);

// Mean-occupation oracle input: dm/dt = (A - I) m + a m with A the kernel
// acting as (A m)_j = sum_i a(j, i) m_i; solved with RK4 at fixed step.
std::vector<double> mean_occupation_ode(const SiteSpace& space, double a,
                                        std::vector<double> m0, double t,
                                        double dt = 1e-4);

}  // namespace genealogy
