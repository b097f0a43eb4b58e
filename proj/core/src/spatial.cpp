#include "genealogy/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace genealogy {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

SiteSpace SiteSpace::single_site() { return {1, {1.0}}; }

SiteSpace SiteSpace::uniform(int n) {
  SiteSpace s;
  s.n_sites = n;
  s.kernel.assign(size_t(n) * n, 1.0 / n);
  return s;
}

SiteSpace SiteSpace::from_matrix(int n, std::vector<double> kernel) {
  SiteSpace s;
  s.n_sites = n;
  s.kernel = std::move(kernel);
  s.validate();
  return s;
}

void SiteSpace::validate() const {
  if (n_sites < 1) throw std::invalid_argument("SiteSpace: need >= 1 site");
  if (kernel.size() != size_t(n_sites) * n_sites)
    throw std::invalid_argument("SiteSpace: kernel must be n x n");
  for (int i = 0; i < n_sites; ++i) {
    double row = 0;
    for (int j = 0; j < n_sites; ++j) {
      double v = a(i, j);
      if (v < 0) throw std::invalid_argument("SiteSpace: negative kernel entry");
      row += v;
    }
    if (std::abs(row - 1.0) > 1e-12)
      throw std::invalid_argument("SiteSpace: kernel rows must sum to 1");
  }
}

double SiteSpace::leave_rate_rev(int i) const {
  double rate = 0;
  for (int j = 0; j < n_sites; ++j)
    if (j != i) rate += a_rev(i, j);
  return rate;
}

double SiteSpace::leave_rate_fwd(int i) const { return 1.0 - a(i, i); }

namespace {
template <class RowProb>
int sample_excluding_self(int i, int n, double leave, RowProb row, Rng& rng) {
  double u = rng.uniform01() * leave;
  double acc = 0;
  int last = -1;
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    acc += row(j);
    last = j;
    if (u < acc) return j;
  }
  return last;  // numerical tail
}
}  // namespace

int SiteSpace::sample_rev_excluding_self(int i, Rng& rng) const {
  return sample_excluding_self(
      i, n_sites, leave_rate_rev(i), [&](int j) { return a_rev(i, j); }, rng);
}

int SiteSpace::sample_fwd_excluding_self(int i, Rng& rng) const {
  return sample_excluding_self(
      i, n_sites, leave_rate_fwd(i), [&](int j) { return a(i, j); }, rng);
}

int AncestralPath::site_at(double s) const {
  // last jump with effective time <= s
  auto it = std::upper_bound(jump_times.begin(), jump_times.end(), s,
                             [this](double q, double jt) { return q < jt + time_offset; });
  if (it == jump_times.begin()) return initial_site;
  return jump_sites[(it - jump_times.begin()) - 1];
}

AncestralPath AncestralPath::frozen_before(double s) const {
  AncestralPath out;
  out.initial_site = site_at(s);
  for (size_t k = 0; k < jump_times.size(); ++k)
    if (effective_time(k) > s) {
      out.jump_times.push_back(effective_time(k));
      out.jump_sites.push_back(jump_sites[k]);
    }
  return out;
}

bool AncestralPath::operator==(const AncestralPath& o) const {
  if (initial_site != o.initial_site || jump_sites != o.jump_sites) return false;
  if (jump_times.size() != o.jump_times.size()) return false;
  for (size_t k = 0; k < jump_times.size(); ++k)
    if (effective_time(k) != o.effective_time(k)) return false;
  return true;
}

MarkedUms MarkedUms::at_site(const Ums& u, int site) {
  MarkedUms m;
  m.ums = u;
  m.mode = MarkMode::location;
  m.sites.assign(u.n_leaves(), site);
  return m;
}

int MarkedUms::site_of_leaf(int leaf) const {
  switch (mode) {
    case MarkMode::location: return sites[leaf];
    case MarkMode::path_raw: return paths[leaf].site_at(horizon);
    case MarkMode::path_adjusted: return paths[leaf].site_at(0.0);
  }
  return -1;
}

void MarkedUms::validate() const {
  size_t L = size_t(ums.n_leaves());
  if (mode == MarkMode::location) {
    if (sites.size() != L)
      throw std::invalid_argument("MarkedUms: one site per leaf required");
  } else {
    if (paths.size() != L)
      throw std::invalid_argument("MarkedUms: one path per leaf required");
  }
}

double SpatialGenealogy::alive_mass(double t) const {
  int64_t alive = 0;
  for (const Particle& p : particles) alive += (p.birth <= t && t < p.death);
  return double(alive) / cfg.particles_per_unit_mass;
}

std::vector<double> SpatialGenealogy::occupation(double t) const {
  std::vector<double> occ(space.n_sites, 0.0);
  const double m = 1.0 / cfg.particles_per_unit_mass;
  for (size_t i = 0; i < particles.size(); ++i) {
    const Particle& p = particles[i];
    if (!(p.birth <= t && t < p.death)) continue;
    int site = birth_site[i];
    for (int32_t k = jump_begin[i]; k < jump_begin[i + 1]; ++k) {
      if (jump_time[k] > t) break;
      site = jump_site[k];
    }
    occ[site] += m;
  }
  return occ;
}

SpatialGenealogy simulate_brw(const SiteSpace& space, const GwConfig& cfg,
                              const MarkedUms& init, Rng& rng) {
  cfg.validate();
  space.validate();
  init.validate();
  SpatialGenealogy g;
  g.cfg = cfg;
  g.cfg.initial = init.ums;
  g.space = space;
  g.horizon = cfg.horizon;
  const double branch_rate = cfg.event_rate();
  const double p_split = cfg.split_prob();
  ExpBatch exp_batch;

  const Ums& u0 = init.ums;
  const int N = cfg.particles_per_unit_mass;

  struct Item {
    int32_t parent;
    double birth;
    int32_t site;
  };
  std::vector<Item> stack;
  int32_t founder = 0;
  for (int leaf = 0; leaf < u0.n_leaves(); ++leaf) {
    int64_t copies = std::llround(u0.leaf_mass(leaf) * N);
    int site0 = init.site_of_leaf(leaf);
    for (int64_t c = 0; c < copies; ++c, ++founder) {
      g.founder_leaf.push_back(leaf);
      stack.push_back({-1, 0.0, int32_t(site0)});
      while (!stack.empty()) {
        Item it = stack.back();
        stack.pop_back();
        if ((long long)g.particles.size() >= cfg.particle_cap)
          throw ResourceCapError("simulate_brw: particle cap exceeded");
        int32_t id = int32_t(g.particles.size());
        g.birth_site.push_back(it.site);
        g.jump_begin.push_back(int32_t(g.jump_time.size()));
        // migration events that change the site occur at rate 1 - a_rev(s,s)
        double now = it.birth;
        int32_t site = it.site;
        for (;;) {
          double mig_rate = space.leave_rate_rev(site);
          double total = branch_rate + mig_rate;
          // multiply by the reciprocal so the |E|=1 case reproduces the
          // nonspatial simulator draw-for-draw, bit for bit
          double event = now + exp_batch.next(rng) * (1.0 / total);
          if (event >= cfg.horizon) {
            g.particles.push_back({it.parent, founder, it.birth, kInf, false});
            break;
          }
          if (mig_rate > 0 && rng.uniform01() * total < mig_rate) {
            site = int32_t(space.sample_rev_excluding_self(site, rng));
            g.jump_time.push_back(event);
            g.jump_site.push_back(site);
            now = event;
            continue;
          }
          bool split = rng.uniform01() < p_split;
          g.particles.push_back({it.parent, founder, it.birth, event, split});
          if (split) {
            stack.push_back({id, event, site});
            stack.push_back({id, event, site});
          }
          break;
        }
      }
    }
  }
  g.jump_begin.push_back(int32_t(g.jump_time.size()));
  g.n_founders = founder;
  return g;
}

namespace {

// Shared tail of marked extraction: assemble initial structure + marks.
MarkedUms assemble_marked(const Ums& init, double t, UmsBuilder& b,
                          std::vector<std::vector<int32_t>>& family_by_leaf,
                          std::vector<int32_t>& leaf_node_of_mark,
                          std::vector<int32_t>& mark_sites,
                          std::vector<AncestralPath>& mark_paths, MarkMode mode) {
  struct Rec {
    const Ums& init;
    double t;
    UmsBuilder& b;
    const std::vector<std::vector<int32_t>>& fam;
    std::vector<int32_t> leaf_index;
    int32_t operator()(int32_t id) const {
      const Ums::Node& nd = init.node(id);
      if (nd.is_leaf()) {
        const auto& parts = fam[leaf_index[id]];
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

  MarkedUms out;
  out.mode = mode;
  out.horizon = (mode == MarkMode::path_raw) ? t : 0.0;

  UmsBuilder* bp = &b;
  for (int32_t r : init.roots()) {
    int32_t o = rec(r);
    if (o >= 0) bp->add_root(o);
  }
  bp->set_ceiling(init.ceiling() + t);
  out.ums = bp->build();

  // The builder preserved leaf creation order, but normalization may merge
  // zero-distance leaves; simulator leaves all carry positive mass and merge
  // only when a split lands exactly at the extraction time, which has
  // probability zero.  Guard anyway.
  if (out.ums.n_leaves() != int(leaf_node_of_mark.size()))
    throw std::runtime_error("extract_marked_ums: leaf/mark mismatch (coincident split)");
  if (mode == MarkMode::location)
    out.sites = std::move(mark_sites);
  else
    out.paths = std::move(mark_paths);
  return out;
}

}  // namespace

MarkedUms extract_marked_ums(const SpatialGenealogy& g, double t, MarkMode mode) {
  if (t > g.horizon) throw std::invalid_argument("extract_marked_ums: t beyond horizon");
  if (mode == MarkMode::path_adjusted)
    return adjust_paths(extract_marked_ums(g, t, MarkMode::path_raw), t);
  const double leaf_mass = 1.0 / g.cfg.particles_per_unit_mass;
  const auto& ps = g.particles;

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
  std::vector<int32_t> leaf_node_of_mark;
  std::vector<int32_t> mark_sites;
  std::vector<AncestralPath> mark_paths;

  // DFS over the record keeping the ancestral-line jumps up to time t.
  struct Frame {
    int32_t id;
    int state;
    int32_t r1;
    size_t line_len;  // line jump count at entry
  };
  std::vector<double> line_times;
  std::vector<int32_t> line_sites;

  auto emit_leaf = [&](int32_t pid) {
    int32_t node = b.add_leaf(leaf_mass);
    leaf_node_of_mark.push_back(node);
    if (mode == MarkMode::location) {
      int site = line_sites.empty() ? -1 : line_sites.back();
      mark_sites.push_back(site);
    } else {
      AncestralPath path;
      path.initial_site = line_sites.empty() ? -1 : line_sites.front();
      (void)pid;
      for (size_t k = 1; k < line_times.size(); ++k) {
        path.jump_times.push_back(line_times[k]);
        path.jump_sites.push_back(line_sites[k]);
      }
      mark_paths.push_back(std::move(path));
    }
    return node;
  };

  auto push_particle_jumps = [&](int32_t pid) {
    // extend the ancestral line with this particle's jumps up to time t
    if (ps[pid].parent < 0) {
      line_times.assign(1, 0.0);
      line_sites.assign(1, g.birth_site[pid]);
    }
    for (int32_t k = g.jump_begin[pid]; k < g.jump_begin[pid + 1]; ++k) {
      if (g.jump_time[k] > t) break;
      line_times.push_back(g.jump_time[k]);
      line_sites.push_back(g.jump_site[k]);
    }
  };

  std::vector<std::vector<int32_t>> family_by_leaf(g.cfg.initial.n_leaves());
  std::vector<Frame> st;
  int32_t founder = -1;
  for (int32_t root = 0; root < int32_t(ps.size()); ++root) {
    if (ps[root].parent >= 0) continue;
    ++founder;
    st.clear();
    line_times.clear();
    line_sites.clear();
    int32_t result = -1;
    st.push_back({root, 0, -1, 0});
    while (!st.empty()) {
      Frame& f = st.back();
      const Particle& p = ps[f.id];
      if (f.state == 0) {
        f.line_len = line_times.size();
        if (p.birth > t) {
          result = -1;
          st.pop_back();
          continue;
        }
        push_particle_jumps(f.id);
        if (!(p.death <= t && p.split)) {
          result = (t < p.death) ? emit_leaf(f.id) : -1;
          line_times.resize(st.back().line_len);
          line_sites.resize(st.back().line_len);
          st.pop_back();
          continue;
        }
        f.state = 1;
        st.push_back({kid1[f.id], 0, -1, 0});
      } else if (f.state == 1) {
        f.r1 = result;
        f.state = 2;
        st.push_back({kid2[f.id], 0, -1, 0});
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
        line_times.resize(f.line_len);
        line_sites.resize(f.line_len);
        st.pop_back();
      }
    }
    if (result >= 0) family_by_leaf[g.founder_leaf[founder]].push_back(result);
  }
  return assemble_marked(g.cfg.initial, t, b, family_by_leaf, leaf_node_of_mark,
                         mark_sites, mark_paths, mode);
}

MarkedUms adjust_paths(const MarkedUms& u, double t) {
  if (u.mode != MarkMode::path_raw)
    throw std::invalid_argument("adjust_paths: raw path mode required");
  MarkedUms out = u;
  out.mode = MarkMode::path_adjusted;
  out.horizon = 0;
  for (AncestralPath& p : out.paths) p.shift(-t);
  return out;
}

MarkedUms unadjust_paths(const MarkedUms& u, double t) {
  if (u.mode != MarkMode::path_adjusted)
    throw std::invalid_argument("unadjust_paths: adjusted path mode required");
  MarkedUms out = u;
  out.mode = MarkMode::path_raw;
  out.horizon = t;
  for (AncestralPath& p : out.paths) p.shift(t);
  return out;
}

MarkedUms truncate_marked(const MarkedUms& u, double h) {
  if (h < 0) throw std::invalid_argument("truncate_marked: h >= 0");
  MarkedUms out = u;
  out.ums = u.ums.truncate(h);
  if (out.ums.n_leaves() != u.ums.n_leaves())
    throw std::runtime_error("truncate_marked: leaf set changed");
  if (u.mode == MarkMode::path_adjusted) {
    for (AncestralPath& p : out.paths) p = p.frozen_before(-h);
  } else if (u.mode == MarkMode::path_raw) {
    for (AncestralPath& p : out.paths) p = p.frozen_before(u.horizon - h);
  }
  return out;
}

MarkedUms concat_marked(const MarkedUms& u, const MarkedUms& v, double h) {
  if (u.mode != v.mode) throw std::invalid_argument("concat_marked: mode mismatch");
  if (u.mode == MarkMode::path_raw && u.horizon != v.horizon)
    throw std::invalid_argument("concat_marked: raw-path horizons differ");
  MarkedUms ut = truncate_marked(u, h), vt = truncate_marked(v, h);
  MarkedUms out;
  out.mode = u.mode;
  out.horizon = u.mode == MarkMode::path_raw ? u.horizon : 0.0;
  out.ums = Ums::concat(ut.ums, vt.ums, h);
  if (out.ums.n_leaves() != ut.ums.n_leaves() + vt.ums.n_leaves())
    throw std::runtime_error("concat_marked: leaf set changed");
  if (out.mode == MarkMode::location) {
    out.sites = ut.sites;
    out.sites.insert(out.sites.end(), vt.sites.begin(), vt.sites.end());
  } else {
    out.paths = ut.paths;
    out.paths.insert(out.paths.end(), vt.paths.begin(), vt.paths.end());
  }
  return out;
}

std::vector<std::pair<AncestralPath, double>> historical_projection(const MarkedUms& u) {
  if (u.mode == MarkMode::location)
    throw std::invalid_argument("historical_projection: path mode required");
  std::vector<std::pair<AncestralPath, double>> out;
  for (int i = 0; i < u.ums.n_leaves(); ++i) {
    const AncestralPath& p = u.paths[i];
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& e) { return e.first == p; });
    if (it == out.end())
      out.push_back({p, u.ums.leaf_mass(i)});
    else
      it->second += u.ums.leaf_mass(i);
  }
  return out;
}

std::vector<double> occupation_measure(
    std::span<const std::pair<AncestralPath, double>> projection, int n_sites,
    double s) {
  std::vector<double> occ(n_sites, 0.0);
  for (const auto& [path, mass] : projection) occ[path.site_at(s)] += mass;
  return occ;
}

ChiFunction ChiFunction::constant() { return {}; }

ChiFunction ChiFunction::site_indicator(std::vector<int32_t> sites) {
  ChiFunction c;
  c.kind = Kind::site_indicator;
  c.sites = std::move(sites);
  return c;
}

ChiFunction ChiFunction::path_eval(std::vector<PathProbe> probes) {
  ChiFunction c;
  c.kind = Kind::path_eval;
  c.probes = std::move(probes);
  return c;
}

ChiFunction ChiFunction::moving_average(std::vector<int32_t> sites,
                                        std::vector<double> centers, double width) {
  ChiFunction c;
  c.kind = Kind::moving_average;
  c.sites = std::move(sites);
  c.centers = std::move(centers);
  c.width = width;
  return c;
}

double ChiFunction::factor(int k, const MarkedUms& u, int leaf) const {
  switch (kind) {
    case Kind::constant:
      return 1.0;
    case Kind::site_indicator: {
      if (k >= int(sites.size()) || sites[k] < 0) return 1.0;  // free position
      return u.site_of_leaf(leaf) == sites[k] ? 1.0 : 0.0;
    }
    case Kind::path_eval: {
      if (u.mode == MarkMode::location)
        throw std::invalid_argument("chi path_eval needs path marks");
      if (k >= int(probes.size())) return 1.0;
      const PathProbe& pr = probes[k];
      const AncestralPath& path = u.paths[leaf];
      double v = 1.0;
      for (size_t j = 0; j < pr.times.size() && v != 0; ++j)
        v *= path.site_at(pr.times[j]) == pr.sites[j] ? 1.0 : 0.0;
      return v;
    }
    case Kind::moving_average: {
      if (u.mode == MarkMode::location)
        throw std::invalid_argument("chi moving_average needs path marks");
      if (k >= int(sites.size()) || sites[k] < 0) return 1.0;
      const AncestralPath& path = u.paths[leaf];
      double lo = centers[k] - width / 2, hi = centers[k] + width / 2;
      // occupation time of sites[k] on [lo,hi] / width, exact on the
      // piecewise-constant path
      double occ = 0, cur = lo;
      while (cur < hi) {
        double nxt = hi;
        for (double jt : path.jump_times)
          if (jt > cur && jt < nxt) nxt = jt;
        if (path.site_at(cur) == sites[k]) occ += nxt - cur;
        cur = nxt;
      }
      return occ / width;
    }
  }
  return 1.0;
}

namespace {

EvalResult eval_marked_window(const MarkedUms& u, const MarkedPhiSpec& spec,
                              int window_kind,  // 0 none, 1 sharp, 2 smooth
                              const SmoothTruncation& rho, double t,
                              const EvalOptions& opts, Rng* rng) {
  u.validate();
  if (spec.n < 1) throw std::invalid_argument("eval_marked: n >= 1");
  if (spec.chi.needs_paths() && u.mode == MarkMode::location)
    throw std::invalid_argument("eval_marked: chi needs path marks");
  const Ums& base = u.ums;
  if (base.is_zero()) return {0.0, 0.0, true};
  int n = spec.n;
  int L = base.n_leaves();

  auto pair_f = [&](double r) -> double {
    double w = 1.0;
    if (window_kind == 1) w = r < 2 * t ? 1.0 : 0.0;
    if (window_kind == 2) w = rho.g(2 * t - r);
    return (spec.phi.is_constant() ? 1.0 : spec.phi.pair_factor(r)) * w;
  };
  double scale = spec.phi.is_constant() ? spec.phi.value({}) : 1.0;

  // per-position weighted masses m_k(i) = mass_i * chi_k(mark_i)
  std::vector<std::vector<double>> wm(n, std::vector<double>(L));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < L; ++i)
      wm[k][i] = base.leaf_mass(i) * spec.chi.factor(k, u, i);

  if (std::pow(double(L), n) <= double(opts.exact_threshold)) {
    DistanceMatrix d = base.leaf_distances();
    std::vector<int> idx(n);
    std::vector<double> part(n + 1);
    part[0] = scale;
    double total = 0;
    int k = 0;
    idx[0] = -1;
    while (k >= 0) {
      if (++idx[k] == L) {
        --k;
        continue;
      }
      double p = part[k] * wm[k][idx[k]];
      for (int j = 0; j < k && p != 0; ++j)
        p *= pair_f(idx[j] == idx[k] ? 0.0 : d(idx[j], idx[k]));
      if (p == 0) continue;
      if (k == n - 1) {
        total += p;
        continue;
      }
      part[k + 1] = p;
      idx[++k] = -1;
    }
    return {total, 0.0, true};
  }

  if (!rng)
    throw std::runtime_error("eval_marked: too large for exact sum, no rng");
  int K = opts.mc_tuples;
  std::vector<int> pick(n);
  double s = 0, s2 = 0;
  for (int rep = 0; rep < K; ++rep) {
    double v = scale;
    for (int i = 0; i < n; ++i) pick[i] = base.sample_leaf(*rng);
    for (int i = 0; i < n && v != 0; ++i) {
      v *= spec.chi.factor(i, u, pick[i]);
      for (int j = i + 1; j < n && v != 0; ++j)
        v *= pair_f(pick[i] == pick[j] ? 0.0
                                       : base.leaf_distance(pick[i], pick[j]));
    }
    s += v;
    s2 += v * v;
  }
  double norm = std::pow(base.total_mass(), n);
  double mean = s / K, var = std::max(0.0, s2 / K - mean * mean);
  return {norm * mean, norm * std::sqrt(var / K), false};
}

}  // namespace

EvalResult eval_marked_polynomial(const MarkedUms& u, const MarkedPhiSpec& spec,
                                  const EvalOptions& opts, Rng* rng) {
  return eval_marked_window(u, spec, 0, {}, 0, opts, rng);
}

EvalResult eval_marked_truncated(const MarkedUms& u, const MarkedPhiSpec& spec,
                                 double t, const EvalOptions& opts, Rng* rng) {
  if (t < 0) throw std::invalid_argument("eval_marked_truncated: t >= 0");
  return eval_marked_window(truncate_marked(u, t), spec, 1, {}, t, opts, rng);
}

EvalResult eval_marked_smooth(const MarkedUms& u, const MarkedPhiSpec& spec,
                              const SmoothTruncation& rho, double t,
                              const EvalOptions& opts, Rng* rng) {
  if (t < 0) throw std::invalid_argument("eval_marked_smooth: t >= 0");
  return eval_marked_window(truncate_marked(u, t), spec, 2, rho, t, opts, rng);
}

MarkedUms simulate_reduced_marked(const SiteSpace& space, const GwConfig& cfg,
                                  const MarkedUms& init, MarkMode mode, Rng& rng) {
  SpatialGenealogy g = simulate_brw(space, cfg, init, rng);
  return extract_marked_ums(g, cfg.horizon, mode);
}

std::vector<double> mean_occupation_ode(const SiteSpace& space, double a,
                                        std::vector<double> m0, double t, double dt) {
  int n = space.n_sites;
  if (int(m0.size()) != n) throw std::invalid_argument("mean_occupation_ode: bad m0");
  // adjoint of the individual motion: inflow to j from i at rate
  // a_rev(i,j) = a(j,i), outflow at the total leave rate of j; for doubly
  // stochastic kernels this is the flow generator of the interacting-
  // diffusion system, dm = (A - I) m dt
  auto deriv = [&](const std::vector<double>& m, std::vector<double>& out) {
    for (int j = 0; j < n; ++j) {
      double inflow = 0;
      for (int i = 0; i < n; ++i)
        if (i != j) inflow += space.a(j, i) * m[i];
      out[j] = inflow - space.leave_rate_rev(j) * m[j] + a * m[j];
    }
  };
  std::vector<double> m = std::move(m0), k1(n), k2(n), k3(n), k4(n), tmp(n);
  int steps = std::max(1, int(std::ceil(t / dt)));
  double h = t / steps;
  for (int s = 0; s < steps; ++s) {
    deriv(m, k1);
    for (int j = 0; j < n; ++j) tmp[j] = m[j] + 0.5 * h * k1[j];
    deriv(tmp, k2);
    for (int j = 0; j < n; ++j) tmp[j] = m[j] + 0.5 * h * k2[j];
    deriv(tmp, k3);
    for (int j = 0; j < n; ++j) tmp[j] = m[j] + h * k3[j];
    deriv(tmp, k4);
    for (int j = 0; j < n; ++j)
      m[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
  }
  return m;
}

}  // namespace genealogy
