#include "genealogy/coalescent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "genealogy/parallel.hpp"

namespace genealogy {

int CoalescentState::n_blocks() const {
  int k = 0;
  for (int i = 0; i < n; ++i) k += block_of[i] == i;
  return k;
}

std::vector<int32_t> CoalescentState::block_representatives() const {
  std::vector<int32_t> reps;
  for (int i = 0; i < n; ++i)
    if (block_of[i] == i) reps.push_back(i);
  return reps;
}

void CoalescentConfig::validate() const {
  if (n < 1) throw std::invalid_argument("CoalescentConfig: n >= 1");
  if (!(b > 0)) throw std::invalid_argument("CoalescentConfig: b > 0");
  if (horizon < 0) throw std::invalid_argument("CoalescentConfig: horizon >= 0");
  if (space) {
    space->validate();
    if (int(init_sites.size()) != n)
      throw std::invalid_argument("CoalescentConfig: one initial site per index");
    for (int32_t s : init_sites)
      if (s < 0 || s >= space->n_sites)
        throw std::invalid_argument("CoalescentConfig: site out of range");
  }
  if (!activation.empty() && int(activation.size()) != n)
    throw std::invalid_argument("CoalescentConfig: activation size");
}

namespace {

struct DualSim {
  const CoalescentConfig& cfg;
  CoalescentState st;
  std::vector<CoalescentState> traj;

  explicit DualSim(const CoalescentConfig& c) : cfg(c) {
    st.n = cfg.n;
    st.block_of.resize(cfg.n);
    for (int i = 0; i < cfg.n; ++i) st.block_of[i] = i;
    st.r_prime = DistanceMatrix(cfg.n);
    st.activation = cfg.activation.empty() ? std::vector<double>(cfg.n, 0.0)
                                           : cfg.activation;
    if (cfg.space) {
      st.site_of = cfg.init_sites;
      st.lineage.resize(cfg.n);
      for (int i = 0; i < cfg.n; ++i) st.lineage[i].initial_site = cfg.init_sites[i];
    }
    traj.push_back(st);
  }

  double fk_rate() const {
    double pairs;
    if (cfg.space) {
      pairs = 0;
      std::vector<int> per_site(cfg.space->n_sites, 0);
      for (int i : st.block_representatives())
        if (st.active(i)) ++per_site[st.site_of[i]];
      for (int c : per_site) pairs += c * (c - 1) / 2.0;
    } else {
      int k = 0;
      for (int i : st.block_representatives()) k += st.active(i);
      pairs = k * (k - 1) / 2.0;
    }
    int k_active = 0;
    for (int i : st.block_representatives()) k_active += st.active(i);
    double bfac = cfg.fk == FkConvention::b_pairs_plus_drift ? cfg.b : 1.0;
    return bfac * pairs + cfg.a * k_active;
  }

  // distance growth speeds per pair: 2 both active (distinct blocks),
  // 1 exactly one active, 0 otherwise
  void grow(double dt) {
    for (int i = 0; i < st.n; ++i)
      for (int j = i + 1; j < st.n; ++j) {
        if (st.same_block(i, j)) continue;
        int act = int(st.active(i)) + int(st.active(j));
        if (act > 0) st.r_prime.set(i, j, st.r_prime(i, j) + act * dt);
      }
    st.beta += fk_rate() * dt;
    st.elapsed += dt;
  }

  void merge(int ri, int rj) {  // representatives
    int keep = std::min(ri, rj), drop = std::max(ri, rj);
    for (int i = 0; i < st.n; ++i)
      if (st.block_of[i] == drop) st.block_of[i] = keep;
  }

  void run(Rng& rng) {
    double now = 0;
    for (;;) {
      // event rates at the current state
      std::vector<int32_t> reps = st.block_representatives();
      std::vector<int32_t> active_reps;
      for (int32_t r : reps)
        if (st.active(r)) active_reps.push_back(r);

      // next activation time (frozen lineages becoming active)
      double next_act = std::numeric_limits<double>::infinity();
      for (int i = 0; i < st.n; ++i)
        if (!st.active(i) && st.activation[i] < next_act) next_act = st.activation[i];

      double merge_rate = 0;
      std::vector<std::pair<int, int>> merge_pairs;
      if (cfg.space) {
        for (size_t x = 0; x < active_reps.size(); ++x)
          for (size_t y = x + 1; y < active_reps.size(); ++y)
            if (st.site_of[active_reps[x]] == st.site_of[active_reps[y]])
              merge_pairs.push_back({active_reps[x], active_reps[y]});
      } else {
        for (size_t x = 0; x < active_reps.size(); ++x)
          for (size_t y = x + 1; y < active_reps.size(); ++y)
            merge_pairs.push_back({active_reps[x], active_reps[y]});
      }
      merge_rate = cfg.b * double(merge_pairs.size());
      // dual blocks migrate at rate 1 with the plain kernel; self-jumps are
      // thinned away so |E|=1 reduces to the Kingman dual draw-for-draw
      double mig_rate = 0;
      std::vector<double> mig_cum;
      if (cfg.space) {
        mig_cum.reserve(active_reps.size());
        for (int32_t r : active_reps) {
          mig_rate += cfg.space->leave_rate_fwd(st.site_of[r]);
          mig_cum.push_back(mig_rate);
        }
      }
      double total = merge_rate + mig_rate;

      double event = total > 0 ? now + rng.exponential(total)
                               : std::numeric_limits<double>::infinity();
      double stop = std::min(cfg.horizon, next_act);
      if (event >= stop) {
        grow(stop - now);
        now = stop;
        if (now >= cfg.horizon) break;
        continue;  // an activation happened; recompute rates
      }
      grow(event - now);
      now = event;
      double u = rng.uniform01() * total;
      if (u < merge_rate) {
        size_t which = std::min(size_t(u / cfg.b), merge_pairs.size() - 1);
        auto [ri, rj] = merge_pairs[which];
        merge(ri, rj);
      } else {
        double v = u - merge_rate;
        size_t w = 0;
        while (w + 1 < mig_cum.size() && mig_cum[w] <= v) ++w;
        int who = active_reps[w];
        int dest = cfg.space->sample_fwd_excluding_self(st.site_of[who], rng);
        // all indices of the block move together
        for (int i = 0; i < st.n; ++i)
          if (st.block_of[i] == who) {
            st.site_of[i] = dest;
            st.lineage[i].jump_times.push_back(now);
            st.lineage[i].jump_sites.push_back(dest);
          }
      }
      traj.push_back(st);
    }
    traj.push_back(st);
  }
};

}  // namespace

std::vector<CoalescentState> simulate_kingman(int n, double b, double horizon,
                                              Rng& rng, const CoalescentConfig* extra) {
  CoalescentConfig cfg;
  if (extra) cfg = *extra;
  cfg.n = n;
  cfg.b = b;
  cfg.horizon = horizon;
  cfg.space.reset();
  cfg.validate();
  DualSim sim(cfg);
  sim.run(rng);
  return std::move(sim.traj);
}

std::vector<CoalescentState> simulate_spatial_coalescent(const CoalescentConfig& cfg,
                                                         Rng& rng) {
  cfg.validate();
  if (!cfg.space)
    throw std::invalid_argument("simulate_spatial_coalescent: space required");
  DualSim sim(cfg);
  sim.run(rng);
  return std::move(sim.traj);
}

CoalescentState run_coalescent(const CoalescentConfig& cfg, Rng& rng) {
  cfg.validate();
  DualSim sim(cfg);
  sim.run(rng);
  return std::move(sim.traj.back());
}

namespace {

// Core pairing: iterate over one-leaf-per-block assignments.
template <class LeafWeight, class TupleFactor>
double pairing_sum(const Ums& u0, const CoalescentState& c, const PhiFunction& phi,
                   const SmoothTruncation& rho, double t, LeafWeight weight,
                   TupleFactor tuple_factor, const EvalOptions& opts, Rng* rng) {
  std::vector<int32_t> reps = c.block_representatives();
  int k = int(reps.size());
  int L = u0.n_leaves();
  if (L == 0) return 0.0;
  int n = c.n;
  std::vector<double> eff(size_t(n) * (n - 1) / 2);
  auto tri = [n](int i, int j) { return i * (2 * n - i - 1) / 2 + (j - i - 1); };
  // block index per original index
  std::vector<int> block_pos(n, -1);
  for (int bidx = 0; bidx < k; ++bidx)
    for (int i = 0; i < n; ++i)
      if (c.block_of[i] == reps[bidx]) block_pos[i] = bidx;

  DistanceMatrix d = u0.leaf_distances();
  std::vector<int> pick(k);

  auto tuple_value = [&](std::span<const int> leaves) {
    double v = 1.0;
    for (int i = 0; i < n && v != 0; ++i)
      for (int j = i + 1; j < n && v != 0; ++j) {
        int li = leaves[block_pos[i]], lj = leaves[block_pos[j]];
        double sample_d = (block_pos[i] == block_pos[j]) ? 0.0
                          : (li == lj ? 0.0 : d(li, lj));
        double e = sample_d + c.r_prime(i, j);
        eff[tri(i, j)] = e;
        v *= rho.g(2 * t - e);
      }
    if (v == 0) return 0.0;
    v *= phi.value(eff);
    if (v == 0) return 0.0;
    return v * tuple_factor(leaves);
  };

  double exact_work = std::pow(double(L), k);
  if (exact_work <= double(opts.exact_threshold)) {
    double total = 0;
    std::vector<int> idx(k, 0);
    for (;;) {
      double w = 1;
      for (int b = 0; b < k; ++b) w *= weight(b, idx[b]);
      if (w != 0) total += w * tuple_value(idx);
      int pos = k - 1;
      while (pos >= 0 && ++idx[pos] == L) idx[pos--] = 0;
      if (pos < 0) break;
    }
    return total;
  }
  if (!rng) throw std::runtime_error("duality_pairing: too large, no rng");
  // MC over mass-weighted draws per block with importance weights
  double s = 0;
  std::vector<double> block_mass(k, 0.0);
  for (int b = 0; b < k; ++b)
    for (int l = 0; l < L; ++l) block_mass[b] += weight(b, l);
  std::vector<std::vector<double>> cum(k, std::vector<double>(L));
  for (int b = 0; b < k; ++b) {
    double acc = 0;
    for (int l = 0; l < L; ++l) {
      acc += weight(b, l);
      cum[b][l] = acc;
    }
  }
  int K = opts.mc_tuples;
  for (int rep = 0; rep < K; ++rep) {
    double norm = 1;
    for (int b = 0; b < k; ++b) {
      if (block_mass[b] <= 0) {
        norm = 0;
        break;
      }
      pick[b] = rng->pick_cumulative(cum[b]);
      norm *= block_mass[b];
    }
    if (norm == 0) continue;
    s += norm * tuple_value(pick);
  }
  return s / K;
}

}  // namespace

double duality_pairing(const Ums& u0, const CoalescentState& c, const PhiSpec& spec,
                       const SmoothTruncation& rho, double t, const EvalOptions& opts,
                       Rng* rng) {
  if (u0.total_mass() <= 0) throw std::domain_error("duality_pairing: zero mass");
  if (spec.n != c.n) throw std::invalid_argument("duality_pairing: n mismatch");
  return pairing_sum(
      u0, c, spec.phi, rho, t,
      [&](int, int leaf) { return u0.leaf_mass(leaf); },
      [](std::span<const int>) { return 1.0; }, opts, rng);
}

double duality_pairing_marked(const MarkedUms& u0, const CoalescentState& c,
                              const MarkedPhiSpec& spec, const SmoothTruncation& rho,
                              double t, const EvalOptions& opts, Rng* rng) {
  if (u0.ums.total_mass() <= 0) throw std::domain_error("duality_pairing: zero mass");
  if (spec.n != c.n) throw std::invalid_argument("duality_pairing: n mismatch");
  u0.validate();
  std::vector<int32_t> reps = c.block_representatives();

  // Per-site sampling: leaf weight for block b is its mass if the leaf sits
  // at the block's current site.
  auto weight = [&](int b, int leaf) -> double {
    double m = u0.ums.leaf_mass(leaf);
    if (!c.site_of.empty()) {
      int site = u0.site_of_leaf(leaf);
      if (site != c.site_of[reps[b]]) return 0.0;
    }
    return m;
  };

  // chi on glued lineage paths (adjusted time coordinates): position k uses
  // lineage k's backward path; before -t the sampled leaf's own (constant)
  // history continues the glued path.
  auto tuple_factor = [&](std::span<const int> leaves) -> double {
    if (spec.chi.kind == ChiFunction::Kind::constant) return 1.0;
    if (!spec.chi.needs_paths()) {
      // site indicators evaluated at the dual's initial sites are the
      // lhs-side functional; on the dual side the sampling is already
      // restricted per site, so the factor is 1.
      return 1.0;
    }
    double v = 1;
    std::vector<int> block_pos(c.n, -1);
    for (size_t b = 0; b < reps.size(); ++b)
      for (int i = 0; i < c.n; ++i)
        if (c.block_of[i] == reps[b]) block_pos[i] = int(b);
    for (int k = 0; k < c.n && v != 0; ++k) {
      const ChiFunction::PathProbe& pr = spec.chi.probes[k];
      const AncestralPath& lin = c.lineage[k];
      for (size_t j = 0; j < pr.times.size() && v != 0; ++j) {
        double s = pr.times[j];  // adjusted time in [-t, 0]
        int site;
        if (s >= -c.elapsed) {
          site = lin.site_at(-s);  // dual time u corresponds to -u adjusted
        } else {
          // beyond the dual window: the sampled leaf's original mark
          int leaf = leaves[block_pos[k]];
          site = u0.mode == MarkMode::location
                     ? u0.sites[leaf]
                     : u0.paths[leaf].site_at(s + c.elapsed);
        }
        v *= site == pr.sites[j] ? 1.0 : 0.0;
      }
    }
    return v;
  };

  return pairing_sum(u0.ums, c, spec.phi, rho, t, weight, tuple_factor, opts, rng);
}

std::vector<DualityReport> duality_check_battery(const DualityCheckConfig& cfg) {
  const long long R = cfg.replicates;
  const bool spatial = cfg.space.has_value();
  const int n_rows = int(cfg.rows.size());
  if (n_rows == 0) return {};

  GwConfig gw;
  gw.b = cfg.b;
  gw.a = cfg.a;
  gw.particles_per_unit_mass = cfg.particles_per_unit_mass;
  gw.initial = cfg.u0;
  gw.horizon = cfg.t;

  EvalOptions ev;
  ev.exact_threshold = 200'000;
  ev.mc_tuples = 64;

  std::vector<PhiSpec> pspecs;
  std::vector<MarkedPhiSpec> mspecs;
  for (const DualityRow& row : cfg.rows) {
    pspecs.push_back({row.n, row.phi});
    MarkedPhiSpec ms;
    ms.n = row.n;
    ms.phi = row.phi;
    if (spatial) ms.chi = ChiFunction::site_indicator(row.init_sites);
    mspecs.push_back(std::move(ms));
  }

  MarkedUms u0_marked;
  if (spatial) {
    u0_marked.ums = cfg.u0;
    u0_marked.mode = MarkMode::location;
    u0_marked.sites = cfg.forward_sites;
    u0_marked.validate();
  }

  // ---- forward side: one simulation per replicate serves every row
  std::vector<std::vector<double>> fwd(n_rows, std::vector<double>(R));
  parallel_for_replicates(R, cfg.threads, [&](long long r) {
    Rng rng(cfg.seed, uint64_t(r));
    if (spatial) {
      MarkedUms state =
          simulate_reduced_marked(*cfg.space, gw, u0_marked, MarkMode::location, rng);
      for (int k = 0; k < n_rows; ++k)
        fwd[k][r] = eval_marked_smooth(state, mspecs[k], cfg.rho, cfg.t, ev, &rng).value;
    } else {
      Ums state = simulate_reduced(gw, rng);
      for (int k = 0; k < n_rows; ++k)
        fwd[k][r] = eval_smooth_truncated(state, pspecs[k], cfg.rho, cfg.t, ev, &rng).value;
    }
  });

  // ---- dual side: E[H(u0, C_t) e^beta], per row
  std::vector<std::vector<double>> dual(n_rows, std::vector<double>(R));
  std::vector<std::vector<double>> wts(n_rows, std::vector<double>(R));
  parallel_for_replicates(R, cfg.threads, [&](long long r) {
    for (int k = 0; k < n_rows; ++k) {
      const DualityRow& row = cfg.rows[k];
      Rng rng(cfg.seed ^ (0x9E3779B97F4A7C15ull + k), uint64_t(r));
      CoalescentConfig cc;
      cc.n = row.n;
      cc.b = cfg.b;
      cc.a = cfg.a;
      cc.horizon = cfg.t;
      cc.fk = row.fk;
      if (spatial) {
        cc.space = cfg.space;
        cc.init_sites = row.init_sites;
      }
      CoalescentState fin = run_coalescent(cc, rng);
      double w = std::exp(fin.beta);
      double h = spatial ? duality_pairing_marked(u0_marked, fin, mspecs[k], cfg.rho,
                                                  cfg.t, ev, &rng)
                         : duality_pairing(cfg.u0, fin, pspecs[k], cfg.rho, cfg.t,
                                           ev, &rng);
      dual[k][r] = h * w;
      wts[k][r] = w;
    }
  });

  auto mean_se = [](std::span<const double> xs) {
    double s = 0, s2 = 0;
    for (double x : xs) {
      s += x;
      s2 += x * x;
    }
    double n = double(xs.size());
    double mean = s / n;
    double var = std::max(0.0, s2 / n - mean * mean);
    return std::pair<double, double>(mean, std::sqrt(var / n));
  };

  std::vector<DualityReport> out;
  for (int k = 0; k < n_rows; ++k) {
    DualityReport rep;
    rep.name = cfg.rows[k].name;
    rep.replicates = R;
    std::tie(rep.lhs, rep.lhs_se) = mean_se(fwd[k]);
    std::tie(rep.rhs, rep.rhs_se) = mean_se(dual[k]);
    double sw = 0, sw2 = 0;
    for (double w : wts[k]) {
      sw += w;
      sw2 += w * w;
    }
    rep.ess = sw2 > 0 ? sw * sw / sw2 : 0;
    double se = std::sqrt(rep.lhs_se * rep.lhs_se + rep.rhs_se * rep.rhs_se);
    rep.z = se > 0 ? (rep.lhs - rep.rhs) / se : 0.0;
    out.push_back(std::move(rep));
  }
  return out;
}

DualityReport duality_check(const DualityCheckConfig& cfg) {
  return duality_check_battery(cfg).front();
}

}  // namespace genealogy
