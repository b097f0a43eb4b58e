#include "genealogy/feller.hpp"

#include <algorithm>
#include <cmath>

namespace genealogy {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Founders per initial leaf: round(mass * N), processed in leaf order.
std::vector<int64_t> founders_per_leaf(const Ums& init, int N) {
  std::vector<int64_t> out(init.n_leaves());
  for (int i = 0; i < init.n_leaves(); ++i)
    out[i] = std::llround(init.leaf_mass(i) * N);
  return out;
}

}  // namespace

double Genealogy::alive_mass(double t) const {
  int64_t alive = 0;
  for (const Particle& p : particles) alive += (p.birth <= t && t < p.death);
  return double(alive) / cfg.particles_per_unit_mass;
}

Genealogy simulate_gw(const GwConfig& cfg, Rng& rng) {
  cfg.validate();
  Genealogy g;
  g.cfg = cfg;
  g.horizon = cfg.horizon;
  const double rate = cfg.event_rate(), inv_rate = 1.0 / rate;
  const double p_split = cfg.split_prob();
  ExpBatch exp_batch;

  std::vector<int64_t> per_leaf = founders_per_leaf(cfg.initial, cfg.particles_per_unit_mass);
  std::vector<std::pair<int32_t, double>> stack;  // (parent id, birth time)
  int32_t founder = 0;
  for (int leaf = 0; leaf < int(per_leaf.size()); ++leaf) {
    for (int64_t c = 0; c < per_leaf[leaf]; ++c, ++founder) {
      g.founder_leaf.push_back(leaf);
      stack.push_back({-1, 0.0});
      while (!stack.empty()) {
        auto [parent, birth] = stack.back();
        stack.pop_back();
        if ((long long)g.particles.size() >= cfg.particle_cap)
          throw ResourceCapError("simulate_gw: particle cap exceeded");
        int32_t id = int32_t(g.particles.size());
        double death = birth + exp_batch.next(rng) * inv_rate;
        if (death >= cfg.horizon) {
          g.particles.push_back({parent, founder, birth, kInf, false});
          continue;
        }
        bool split = rng.uniform01() < p_split;
        g.particles.push_back({parent, founder, birth, death, split});
        if (split) {  // second child pushed first so the first pops first
          stack.push_back({id, death});
          stack.push_back({id, death});
        }
      }
    }
  }
  g.n_founders = founder;
  return g;
}

namespace {

// Assembles the extracted state: initial tree with heights shifted by +t and
// each initial leaf replaced by the reduced subtrees of its founder families.
Ums assemble(const Ums& init, double t, UmsBuilder& b,
             const std::vector<std::vector<int32_t>>& family_by_leaf) {
  struct Rec {
    const Ums& init;
    double t;
    UmsBuilder& b;
    const std::vector<std::vector<int32_t>>& fam;
    std::vector<int32_t> leaf_index;

    int32_t operator()(int32_t id) const {
      const Ums::Node& nd = init.node(id);
      if (nd.is_leaf()) {
        const std::vector<int32_t>& parts = fam[leaf_index[id]];
        if (parts.empty()) return -1;
        if (parts.size() == 1) return parts[0];
        return b.add_internal(t, parts);
      }
      std::vector<int32_t> kids;
      for (int32_t k : nd.kids) {
        int32_t r = (*this)(k);
        if (r >= 0) kids.push_back(r);
      }
      if (kids.empty()) return -1;
      if (kids.size() == 1) return kids[0];
      return b.add_internal(nd.height + t, kids);
    }
  };
  Rec rec{init, t, b, family_by_leaf, {}};
  rec.leaf_index.assign(init.n_nodes(), -1);
  for (int i = 0; i < init.n_leaves(); ++i) rec.leaf_index[init.leaf_ids()[i]] = i;
  for (int32_t r : init.roots()) {
    int32_t out = rec(r);
    if (out >= 0) b.add_root(out);
  }
  b.set_ceiling(init.ceiling() + t);
  return b.build();
}

}  // namespace

Ums extract_ums(const Genealogy& g, double t) {
  if (t > g.horizon) throw std::invalid_argument("extract_ums: t beyond horizon");
  const double leaf_mass = 1.0 / g.cfg.particles_per_unit_mass;
  const auto& ps = g.particles;

  // children (binary; preorder ids, parent < child)
  std::vector<int32_t> kid1(ps.size(), -1), kid2(ps.size(), -1);
  for (int32_t i = 0; i < int32_t(ps.size()); ++i) {
    int32_t par = ps[i].parent;
    if (par < 0) continue;
    if (kid1[par] < 0)
      kid1[par] = i;
    else
      kid2[par] = i;
  }

  UmsBuilder b;
  // reduce(root particle) via frame stack
  struct Frame {
    int32_t id;
    int state;
    int32_t r1;
  };
  auto reduce = [&](int32_t root) -> int32_t {
    std::vector<Frame> st{{root, 0, -1}};
    int32_t result = -1;
    while (!st.empty()) {
      Frame& f = st.back();
      const Particle& p = ps[f.id];
      if (f.state == 0) {
        if (p.birth > t || !(p.death <= t && p.split)) {
          // leaf if alive at t, else extinct line
          result = (p.birth <= t && t < p.death) ? b.add_leaf(leaf_mass) : -1;
          st.pop_back();
          continue;
        }
        f.state = 1;
        st.push_back({kid1[f.id], 0, -1});
      } else if (f.state == 1) {
        f.r1 = result;
        f.state = 2;
        st.push_back({kid2[f.id], 0, -1});
      } else {
        int32_t r2 = result;
        if (f.r1 < 0 && r2 < 0)
          result = -1;
        else if (f.r1 < 0)
          result = r2;
        else if (r2 < 0)
          result = f.r1;
        else {
          int32_t kids[2] = {f.r1, r2};
          result = b.add_internal(t - p.death, kids);
        }
        st.pop_back();
      }
    }
    return result;
  };

  std::vector<std::vector<int32_t>> family_by_leaf(g.cfg.initial.n_leaves());
  int32_t founder = -1;
  for (int32_t i = 0; i < int32_t(ps.size()); ++i) {
    if (ps[i].parent >= 0) continue;
    ++founder;
    int32_t sub = reduce(i);
    if (sub >= 0) family_by_leaf[g.founder_leaf[founder]].push_back(sub);
  }
  return assemble(g.cfg.initial, t, b, family_by_leaf);
}

std::vector<double> total_mass_path(const Genealogy& g, std::span<const double> grid) {
  for (double t : grid)
    if (t < 0 || t > g.horizon)
      throw std::invalid_argument("total_mass_path: grid point outside [0, horizon]");
  std::vector<int64_t> diff(grid.size() + 1, 0);
  auto first_ge = [&](double x) {
    return std::lower_bound(grid.begin(), grid.end(), x) - grid.begin();
  };
  for (const Particle& p : g.particles) {
    // alive at grid[k] iff birth <= grid[k] < death
    size_t lo = first_ge(p.birth);
    size_t hi = first_ge(p.death);
    if (lo < hi) {
      ++diff[lo];
      --diff[hi];
    }
  }
  std::vector<double> out(grid.size());
  int64_t run = 0;
  for (size_t k = 0; k < grid.size(); ++k) {
    run += diff[k];
    out[k] = double(run) / g.cfg.particles_per_unit_mass;
  }
  return out;
}

Ums simulate_reduced(const GwConfig& cfg, Rng& rng) {
  cfg.validate();
  const double t = cfg.horizon;
  const double rate = cfg.event_rate(), inv_rate = 1.0 / rate;
  const double p_split = cfg.split_prob();
  const double leaf_mass = 1.0 / cfg.particles_per_unit_mass;
  ExpBatch exp_batch;
  UmsBuilder b;
  long long created = 0;

  struct Frame {
    double birth;
    double death;
    int state;
    int32_t r1;
  };
  std::vector<Frame> st;
  st.reserve(1 << 12);

  auto run_founder = [&]() -> int32_t {
    st.push_back({0.0, 0.0, 0, -1});
    int32_t result = -1;
    while (!st.empty()) {
      Frame& f = st.back();
      if (f.state == 0) {
        if (++created > cfg.particle_cap)
          throw ResourceCapError("simulate_reduced: particle cap exceeded");
        f.death = f.birth + exp_batch.next(rng) * inv_rate;
        if (f.death >= t) {
          result = b.add_leaf(leaf_mass);
          st.pop_back();
          continue;
        }
        if (!(rng.uniform01() < p_split)) {
          result = -1;
          st.pop_back();
          continue;
        }
        f.state = 1;
        double death = f.death;
        st.push_back({death, 0.0, 0, -1});
      } else if (f.state == 1) {
        f.r1 = result;
        f.state = 2;
        double death = f.death;
        st.push_back({death, 0.0, 0, -1});
      } else {
        int32_t r2 = result;
        if (f.r1 < 0 && r2 < 0)
          result = -1;
        else if (f.r1 < 0)
          result = r2;
        else if (r2 < 0)
          result = f.r1;
        else {
          int32_t kids[2] = {f.r1, r2};
          result = b.add_internal(t - f.death, kids);
        }
        st.pop_back();
      }
    }
    return result;
  };

  std::vector<int64_t> per_leaf = founders_per_leaf(cfg.initial, cfg.particles_per_unit_mass);
  std::vector<std::vector<int32_t>> family_by_leaf(cfg.initial.n_leaves());
  for (int leaf = 0; leaf < int(per_leaf.size()); ++leaf)
    for (int64_t c = 0; c < per_leaf[leaf]; ++c) {
      int32_t sub = run_founder();
      if (sub >= 0) family_by_leaf[leaf].push_back(sub);
    }
  return assemble(cfg.initial, t, b, family_by_leaf);
}

double FamilyCounts::mass_at(int k, int N) const {
  int64_t total = 0;
  for (int32_t c : counts[k]) total += c;
  return double(total) / N;
}

double FamilyCounts::sum_square_family_masses(int k, int N) const {
  double s = 0;
  for (int32_t c : counts[k]) {
    double m = double(c) / N;
    s += m * m;
  }
  return s;
}

FamilyCounts simulate_family_counts(const GwConfig& cfg, std::span<const double> times,
                                    Rng& rng) {
  cfg.validate();
  for (size_t k = 0; k < times.size(); ++k) {
    if (times[k] < 0 || times[k] > cfg.horizon)
      throw std::invalid_argument("simulate_family_counts: checkpoint outside [0, horizon]");
    if (k > 0 && times[k] < times[k - 1])
      throw std::invalid_argument("simulate_family_counts: checkpoints must ascend");
  }
  const double rate = cfg.event_rate(), inv_rate = 1.0 / rate;
  const double p_split = cfg.split_prob();
  const int K = int(times.size());
  if (K > 16)
    throw std::invalid_argument("simulate_family_counts: at most 16 checkpoints");
  ExpBatch exp_batch;

  std::vector<int64_t> per_leaf = founders_per_leaf(cfg.initial, cfg.particles_per_unit_mass);
  int64_t n_founders = 0;
  for (int64_t c : per_leaf) n_founders += c;

  FamilyCounts out;
  out.times.assign(times.begin(), times.end());
  out.counts.assign(K, std::vector<int32_t>(n_founders, 0));

  double tk[16];
  for (int k = 0; k < K; ++k) tk[k] = times[k];

  std::vector<double> stack(1 << 14);
  long long created = 0;
  int64_t founder = 0;
  for (int leaf = 0; leaf < int(per_leaf.size()); ++leaf)
    for (int64_t c = 0; c < per_leaf[leaf]; ++c, ++founder) {
      int32_t fam[16] = {0};
      size_t sp = 0;
      stack[sp++] = 0.0;
      long long visited = 0;
      const long long budget = cfg.particle_cap - created;
      while (sp) {
        double birth = stack[--sp];
        if (++visited > budget)
          throw ResourceCapError("simulate_family_counts: particle cap exceeded");
        double death = birth + exp_batch.next(rng) * inv_rate;
        for (int k = 0; k < K; ++k) fam[k] += (birth <= tk[k]) & (death > tk[k]);
        if (death >= cfg.horizon) continue;
        double u = double(rng.next_u64() >> 11) * 0x1.0p-53;
        if (sp + 2 >= stack.size()) stack.resize(stack.size() * 2);
        stack[sp] = death;
        stack[sp + 1] = death;
        sp += 2 * size_t(u < p_split);
      }
      created += visited;
      for (int k = 0; k < K; ++k) out.counts[k][founder] = fam[k];
    }
  return out;
}

}  // namespace genealogy
