#include "genealogy/ums.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace genealogy {

bool DistanceMatrix::is_ultrametric(double eps) const {
  for (int i = 0; i < n_; ++i)
    for (int j = i + 1; j < n_; ++j)
      for (int k = j + 1; k < n_; ++k) {
        double a = (*this)(i, j), b = (*this)(j, k), c = (*this)(i, k);
        if (c > std::max(a, b) + eps) return false;
        if (a > std::max(c, b) + eps) return false;
        if (b > std::max(a, c) + eps) return false;
      }
  return true;
}

namespace {

// Normalization pass shared by all constructors.  Works on a scratch forest,
// emits a compact DFS-ordered node vector.
struct Normalizer {
  const std::vector<Ums::Node>& in;
  std::vector<Ums::Node> out;

  // Returns replacement node ids in `out` for the cleaned subtree (empty if
  // the subtree carried no mass).  `collapse` forces the subtree into a
  // single atom (used for zero-height internals).
  std::vector<int32_t> clean(int32_t id) {
    const Ums::Node& nd = in[id];
    if (nd.is_leaf()) {
      if (nd.mass < 0) throw std::invalid_argument("Ums: negative leaf mass");
      if (nd.mass == 0) return {};
      out.push_back({0.0, nd.mass, -1, {}});
      return {int32_t(out.size() - 1)};
    }
    if (nd.height < 0) throw std::invalid_argument("Ums: negative merge height");
    std::vector<int32_t> kids;
    for (int32_t k : nd.kids) {
      for (int32_t rep : clean(k)) {
        const Ums::Node& r = out[rep];
        if (!r.is_leaf() && r.height > nd.height)
          throw std::invalid_argument("Ums: merge heights must decrease toward the leaves");
        if (!r.is_leaf() && r.height == nd.height) {
          for (int32_t g : r.kids) kids.push_back(g);
          // r stays in `out` as garbage; compaction below drops it.
        } else {
          kids.push_back(rep);
        }
      }
    }
    if (kids.empty()) return {};
    if (kids.size() == 1) return {kids[0]};
    out.push_back({nd.height, 0.0, -1, std::move(kids)});
    return {int32_t(out.size() - 1)};
  }

};

// DFS compaction: renumber reachable nodes in preorder.
void compact(const std::vector<Ums::Node>& src, const std::vector<int32_t>& src_roots,
             std::vector<Ums::Node>& dst, std::vector<int32_t>& dst_roots) {
  dst.clear();
  dst_roots.clear();
  struct Frame {
    int32_t src_id;
    int32_t dst_parent;
  };
  std::vector<Frame> stack;
  for (auto it = src_roots.rbegin(); it != src_roots.rend(); ++it)
    stack.push_back({*it, -1});
  // Preorder with children in original order: push kids reversed.
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    const Ums::Node& nd = src[f.src_id];
    int32_t my_id = int32_t(dst.size());
    dst.push_back({nd.height, nd.mass, f.dst_parent, {}});
    if (f.dst_parent >= 0)
      dst[f.dst_parent].kids.push_back(my_id);
    else
      dst_roots.push_back(my_id);
    for (auto it = nd.kids.rbegin(); it != nd.kids.rend(); ++it)
      stack.push_back({*it, my_id});
  }
}

}  // namespace

void Ums::finalize() {
  leaves_.clear();
  cum_mass_.clear();
  total_mass_ = 0;
  double max_h = 0;
  for (int32_t i = 0; i < int32_t(nodes_.size()); ++i) {
    const Node& nd = nodes_[i];
    if (nd.is_leaf()) {
      leaves_.push_back(i);
      total_mass_ += nd.mass;
      cum_mass_.push_back(total_mass_);
    } else if (nd.height > max_h) {
      max_h = nd.height;
    }
  }
  if (ceiling_ < max_h) ceiling_ = max_h;
  if (roots_.empty()) ceiling_ = 0;
}

Ums Ums::leaf(double mass) {
  UmsBuilder b;
  b.add_root(b.add_leaf(mass));
  return b.build();
}

Ums Ums::join(double height, std::span<const Ums> parts) {
  UmsBuilder b;
  std::vector<int32_t> kids;
  // Import each part; multi-tree parts are rooted at their ceiling first.
  auto import_tree = [&b](const Ums& p, int32_t src_root) {
    // recursive copy of one tree
    struct Rec {
      UmsBuilder& b;
      const Ums& p;
      int32_t operator()(int32_t id) const {
        const Ums::Node& nd = p.node(id);
        if (nd.is_leaf()) return b.add_leaf(nd.mass);
        std::vector<int32_t> ks;
        ks.reserve(nd.kids.size());
        for (int32_t k : nd.kids) ks.push_back((*this)(k));
        return b.add_internal(nd.height, ks);
      }
    };
    return Rec{b, p}(src_root);
  };
  for (const Ums& p : parts) {
    if (p.is_zero()) continue;
    if (p.n_trees() == 1) {
      kids.push_back(import_tree(p, p.roots()[0]));
    } else {
      std::vector<int32_t> sub;
      for (int32_t r : p.roots()) sub.push_back(import_tree(p, r));
      kids.push_back(b.add_internal(p.ceiling(), sub));
    }
  }
  if (kids.empty()) return Ums{};
  if (kids.size() == 1) {
    b.add_root(kids[0]);
    return b.build();
  }
  b.add_root(b.add_internal(height, kids));
  return b.build();
}

Ums Ums::join(double height, std::initializer_list<Ums> parts) {
  return join(height, std::span<const Ums>(parts.begin(), parts.size()));
}

Ums Ums::forest(std::span<const Ums> parts, double ceiling) {
  UmsBuilder b;
  for (const Ums& p : parts) {
    if (p.is_zero()) continue;
    // copy all trees of p
    struct Rec {
      UmsBuilder& b;
      const Ums& p;
      int32_t operator()(int32_t id) const {
        const Ums::Node& nd = p.node(id);
        if (nd.is_leaf()) return b.add_leaf(nd.mass);
        std::vector<int32_t> ks;
        for (int32_t k : nd.kids) ks.push_back((*this)(k));
        return b.add_internal(nd.height, ks);
      }
    };
    for (int32_t r : p.roots()) b.add_root(Rec{b, p}(r));
  }
  b.set_ceiling(ceiling);
  return b.build();
}

double Ums::diameter() const {
  if (is_zero()) return 0;
  if (n_trees() >= 2) return 2 * ceiling_;
  const Node& r = nodes_[roots_[0]];
  return r.is_leaf() ? 0.0 : 2 * r.height;
}

double Ums::leaf_distance(int leaf_i, int leaf_j) const {
  if (leaf_i == leaf_j) return 0;
  int32_t a = leaves_[leaf_i], b = leaves_[leaf_j];
  auto h = [&](int32_t id) { return nodes_[id].is_leaf() ? 0.0 : nodes_[id].height; };
  // Climb the lower of the two current nodes; the first common node is the
  // most recent common ancestor.
  while (a != b) {
    if (nodes_[a].parent < 0 && nodes_[b].parent < 0) return 2 * ceiling_;
    if (nodes_[b].parent < 0 || (nodes_[a].parent >= 0 && h(a) < h(b)))
      a = nodes_[a].parent;
    else
      b = nodes_[b].parent;
    if (a < 0 || b < 0) return 2 * ceiling_;  // distinct trees
  }
  return 2 * h(a);
}

DistanceMatrix Ums::leaf_distances() const {
  int L = n_leaves();
  DistanceMatrix m(L);
  // leaf index by node id
  std::vector<int32_t> leaf_index(nodes_.size(), -1);
  for (int i = 0; i < L; ++i) leaf_index[leaves_[i]] = i;
  // For each internal node, pairs of leaves in distinct child subtrees are at
  // twice its height; cross-tree pairs at twice the ceiling.
  struct Rec {
    const Ums& u;
    const std::vector<int32_t>& leaf_index;
    DistanceMatrix& m;
    std::vector<int32_t> operator()(int32_t id) const {
      const Node& nd = u.node(id);
      if (nd.is_leaf()) return {leaf_index[id]};
      std::vector<int32_t> acc;
      for (int32_t k : nd.kids) {
        std::vector<int32_t> sub = (*this)(k);
        for (int32_t x : acc)
          for (int32_t y : sub) m.set(x, y, 2 * nd.height);
        acc.insert(acc.end(), sub.begin(), sub.end());
      }
      return acc;
    }
  };
  std::vector<int32_t> seen;
  for (int32_t r : roots_) {
    std::vector<int32_t> sub = Rec{*this, leaf_index, m}(r);
    for (int32_t x : seen)
      for (int32_t y : sub) m.set(x, y, 2 * ceiling_);
    seen.insert(seen.end(), sub.begin(), sub.end());
  }
  return m;
}

Ums Ums::truncate(double h) const {
  if (h < 0) throw std::invalid_argument("truncate: h must be >= 0");
  if (is_zero()) return {};
  UmsBuilder b;
  struct Rec {
    UmsBuilder& b;
    const Ums& u;
    double h;
    int32_t operator()(int32_t id) const {
      const Node& nd = u.node(id);
      if (nd.is_leaf()) return b.add_leaf(nd.mass);
      std::vector<int32_t> ks;
      for (int32_t k : nd.kids) ks.push_back((*this)(k));
      return b.add_internal(std::min(nd.height, h), ks);
    }
  };
  for (int32_t r : roots_) b.add_root(Rec{b, *this, h}(r));
  b.set_ceiling(std::min(ceiling_, h));
  return b.build();
}

Ums Ums::concat(const Ums& u, const Ums& v, double h) {
  if (h < 0) throw std::invalid_argument("concat: h must be >= 0");
  Ums ut = u.truncate(h), vt = v.truncate(h);
  UmsBuilder b;
  auto add_part = [&b, h](const Ums& p) {
    if (p.is_zero()) return;
    struct Rec {
      UmsBuilder& b;
      const Ums& p;
      int32_t operator()(int32_t id) const {
        const Node& nd = p.node(id);
        if (nd.is_leaf()) return b.add_leaf(nd.mass);
        std::vector<int32_t> ks;
        for (int32_t k : nd.kids) ks.push_back((*this)(k));
        return b.add_internal(nd.height, ks);
      }
    };
    Rec rec{b, p};
    if (p.n_trees() >= 2 && p.ceiling() < h) {
      // keep this part's own top level below the new join level
      std::vector<int32_t> sub;
      for (int32_t r : p.roots()) sub.push_back(rec(r));
      b.add_root(b.add_internal(p.ceiling(), sub));
    } else {
      for (int32_t r : p.roots()) b.add_root(rec(r));
    }
  };
  add_part(ut);
  add_part(vt);
  b.set_ceiling(h);
  return b.build();
}

std::vector<double> Ums::component_masses(double h) const {
  if (h < 0) throw std::invalid_argument("component_masses: h must be >= 0");
  std::vector<double> out;
  if (is_zero()) return out;
  struct Rec {
    const Ums& u;
    std::vector<double>& out;
    double h;
    void operator()(int32_t id) const {
      const Node& nd = u.node(id);
      if (nd.is_leaf() || nd.height < h) {
        double m = 0;
        struct Sum {
          const Ums& u;
          double& m;
          void operator()(int32_t id) const {
            const Node& nd = u.node(id);
            if (nd.is_leaf())
              m += nd.mass;
            else
              for (int32_t k : nd.kids) (*this)(k);
          }
        };
        Sum{u, m}(id);
        out.push_back(m);
      } else {  // height == h exactly: children lie in distinct open balls
        for (int32_t k : nd.kids) (*this)(k);
      }
    }
  };
  if (n_trees() >= 2 && ceiling_ < h) {
    out.push_back(total_mass_);
    return out;
  }
  for (int32_t r : roots_) Rec{*this, out, h}(r);
  return out;
}

std::vector<Ums> Ums::decompose(double h) const {
  if (h <= 0) throw std::invalid_argument("decompose: h must be > 0");
  std::vector<Ums> out;
  if (is_zero()) return out;
  if (diameter() > 2 * h) throw std::domain_error("decompose: state not in S_h");
  if (n_trees() >= 2 && ceiling_ < h) {
    out.push_back(*this);
    return out;
  }
  struct Rec {
    const Ums& u;
    std::vector<Ums>& out;
    double h;
    void operator()(int32_t id) const {
      const Node& nd = u.node(id);
      if (nd.is_leaf() || nd.height < h) {
        UmsBuilder b;
        struct Copy {
          UmsBuilder& b;
          const Ums& u;
          int32_t operator()(int32_t id) const {
            const Node& nd = u.node(id);
            if (nd.is_leaf()) return b.add_leaf(nd.mass);
            std::vector<int32_t> ks;
            for (int32_t k : nd.kids) ks.push_back((*this)(k));
            return b.add_internal(nd.height, ks);
          }
        };
        b.add_root(Copy{b, u}(id));
        out.push_back(b.build());
      } else {
        for (int32_t k : nd.kids) (*this)(k);
      }
    }
  };
  for (int32_t r : roots_) Rec{*this, out, h}(r);
  return out;
}

Ums Ums::trunk(double depth) const {
  if (depth <= 0) throw std::invalid_argument("trunk: depth must be > 0");
  if (is_zero()) return {};
  UmsBuilder b;
  struct Rec {
    UmsBuilder& b;
    const Ums& u;
    double d;
    int32_t operator()(int32_t id) const {
      const Node& nd = u.node(id);
      if (nd.is_leaf() || nd.height < d) {
        double m = 0;
        struct Sum {
          const Ums& u;
          double& m;
          void operator()(int32_t id) const {
            const Node& nd = u.node(id);
            if (nd.is_leaf())
              m += nd.mass;
            else
              for (int32_t k : nd.kids) (*this)(k);
          }
        };
        Sum{u, m}(id);
        return b.add_leaf(m);
      }
      std::vector<int32_t> ks;
      for (int32_t k : nd.kids) ks.push_back((*this)(k));
      return b.add_internal(nd.height - d, ks);
    }
  };
  if (n_trees() >= 2 && ceiling_ < depth) return Ums::leaf(total_mass_);
  for (int32_t r : roots_) b.add_root(Rec{b, *this, depth}(r));
  b.set_ceiling(std::max(ceiling_ - depth, 0.0));
  return b.build();
}

int Ums::sample_leaf(Rng& rng) const {
  if (total_mass_ <= 0) throw std::domain_error("sample_leaf: zero total mass");
  if (cum_mass_.empty()) {
    // built lazily is not an option for a const, immutable object: finalize()
    // always fills this; reaching here means corruption.
    throw std::logic_error("sample_leaf: missing mass index");
  }
  return rng.pick_cumulative(cum_mass_);
}

DistanceMatrix Ums::sample_distance_matrix(int n, Rng& rng) const {
  if (n < 1) throw std::invalid_argument("sample_distance_matrix: n >= 1");
  if (total_mass_ <= 0)
    throw std::domain_error("sample_distance_matrix: zero total mass");
  std::vector<int> pick(n);
  for (int i = 0; i < n; ++i) pick[i] = sample_leaf(rng);
  DistanceMatrix m(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m.set(i, j, leaf_distance(pick[i], pick[j]));
  return m;
}

namespace {

// Canonical encoding: children sorted by (quantized subtree mass, encoding);
// subtrees whose merge height quantizes to zero are single atoms of the
// equivalence class and encode as one leaf.
struct Encoder {
  const Ums& u;
  double tol;

  struct Enc {
    double mass;
    std::string text;
  };

  Enc leaf_enc(double mass) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "L%lld;", (long long)std::llround(mass / tol));
    return {mass, buf};
  }

  double subtree_mass(int32_t id) const {
    const Ums::Node& nd = u.node(id);
    if (nd.is_leaf()) return nd.mass;
    double m = 0;
    for (int32_t k : nd.kids) m += subtree_mass(k);
    return m;
  }

  Enc internal_enc(double height, std::vector<Enc> kids) const {
    if (std::llround(height / tol) <= 0) {
      double m = 0;
      for (const Enc& k : kids) m += k.mass;
      return leaf_enc(m);
    }
    std::sort(kids.begin(), kids.end(), [this](const Enc& a, const Enc& b) {
      long long qa = std::llround(a.mass / tol), qb = std::llround(b.mass / tol);
      if (qa != qb) return qa < qb;
      return a.text < b.text;
    });
    double m = 0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "N%lld(", (long long)std::llround(height / tol));
    std::string out = buf;
    for (const Enc& k : kids) {
      m += k.mass;
      out += k.text;
    }
    out += ");";
    return {m, out};
  }

  Enc encode(int32_t id) const {
    const Ums::Node& nd = u.node(id);
    if (nd.is_leaf()) return leaf_enc(nd.mass);
    if (std::llround(nd.height / tol) <= 0) return leaf_enc(subtree_mass(id));
    std::vector<Enc> kids;
    for (int32_t k : nd.kids) kids.push_back(encode(k));
    return internal_enc(nd.height, std::move(kids));
  }
};

}  // namespace

std::string Ums::canonical_form(double tol) const {
  if (tol <= 0) throw std::invalid_argument("canonical_form: tol must be > 0");
  if (is_zero()) return "Z";
  Encoder enc{*this, tol};
  if (n_trees() == 1) return enc.encode(roots_[0]).text;
  // Virtual root at the ceiling; trees whose root already sits at the
  // ceiling are spliced into it.
  std::vector<Encoder::Enc> kids;
  for (int32_t r : roots_) {
    const Node& nd = nodes_[r];
    if (!nd.is_leaf() && nd.height == ceiling_) {
      for (int32_t k : nd.kids) kids.push_back(enc.encode(k));
    } else {
      kids.push_back(enc.encode(r));
    }
  }
  return enc.internal_enc(ceiling_, std::move(kids)).text;
}

bool Ums::is_isomorphic(const Ums& u, const Ums& v, double tol) {
  return u.canonical_form(tol) == v.canonical_form(tol);
}

// ---- UmsBuilder -----------------------------------------------------------

int32_t UmsBuilder::add_leaf(double mass) {
  nodes_.push_back({0.0, mass, -1, {}});
  return int32_t(nodes_.size() - 1);
}

int32_t UmsBuilder::add_internal(double height, std::span<const int32_t> kids) {
  Ums::Node nd;
  nd.height = height;
  nd.kids.assign(kids.begin(), kids.end());
  nodes_.push_back(std::move(nd));
  return int32_t(nodes_.size() - 1);
}

Ums UmsBuilder::build() {
  Normalizer norm{nodes_, {}};
  std::vector<int32_t> clean_roots;
  for (int32_t r : roots_)
    for (int32_t rep : norm.clean(r)) clean_roots.push_back(rep);

  Ums u;
  if (!clean_roots.empty()) {
    compact(norm.out, clean_roots, u.nodes_, u.roots_);
    u.ceiling_ = ceiling_;
  }
  u.finalize();
  nodes_.clear();
  roots_.clear();
  ceiling_ = 0;
  return u;
}

}  // namespace genealogy
