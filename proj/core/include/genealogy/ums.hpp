#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "genealogy/random.hpp"

namespace genealogy {

// Pairwise distances of an n-sample, upper triangle in row-major order
// (r_01, r_02, ..., r_0(n-1), r_12, ...).
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(int n) : n_(n), r_((size_t(n) * (n - 1)) / 2, 0.0) {}
  DistanceMatrix(int n, std::vector<double> upper) : n_(n), r_(std::move(upper)) {}

  int n() const { return n_; }
  double operator()(int i, int j) const {
    if (i == j) return 0.0;
    return r_[index(i, j)];
  }
  void set(int i, int j, double v) { r_[index(i, j)] = v; }
  std::span<const double> upper() const { return r_; }
  std::span<double> upper() { return r_; }

  // Ultrametric three-point condition r_ik <= max(r_ij, r_jk), within eps.
  bool is_ultrametric(double eps = 0.0) const;

 private:
  size_t index(int i, int j) const {
    if (i > j) std::swap(i, j);
    return size_t(i) * (2 * n_ - i - 1) / 2 + (j - i - 1);
  }
  int n_ = 0;
  std::vector<double> r_;
};

// A finite ultrametric measure space, stored as a weighted dendrogram forest.
//
// Leaves carry mass, internal nodes carry a merge height; the distance between
// two leaves is twice the height of their most recent common node, and leaves
// in different trees of the forest are at distance 2*ceiling().  Merge heights
// increase strictly from leaf to root, so ultrametricity is structural.
//
// Leaves under a height-0 node are distinct points at distance 0; the
// unmarked equivalence class identifies them (canonical_form merges them)
// but marked states keep them apart, since their marks can differ.
//
// The zero tree (empty forest) is a first-class value.  Values are immutable
// after construction; every operation returns a new Ums.
class Ums {
 public:
  struct Node {
    double height = 0.0;  // internal nodes only
    double mass = 0.0;    // leaves only, > 0 (zero-mass leaves are pruned)
    int32_t parent = -1;
    std::vector<int32_t> kids;  // empty <=> leaf
    bool is_leaf() const { return kids.empty(); }
  };

  Ums() = default;  // the zero tree

  static Ums leaf(double mass);
  // One tree: a node at `height` over the given subtrees (each must have a
  // single root of strictly smaller height, or be a leaf).  Subtrees at equal
  // height are spliced into a multifurcation.
  static Ums join(double height, std::span<const Ums> parts);
  static Ums join(double height, std::initializer_list<Ums> parts);
  // Forest of the given trees with the given ceiling.
  static Ums forest(std::span<const Ums> parts, double ceiling);

  bool is_zero() const { return roots_.empty(); }
  double total_mass() const { return total_mass_; }
  double ceiling() const { return ceiling_; }
  int n_trees() const { return int(roots_.size()); }
  // Max over pairs of leaves of their distance; 0 for the zero tree and
  // single leaves.
  double diameter() const;

  int n_leaves() const { return int(leaves_.size()); }
  double leaf_mass(int leaf) const { return nodes_[leaves_[leaf]].mass; }
  std::span<const int32_t> leaf_ids() const { return leaves_; }
  const Node& node(int id) const { return nodes_[id]; }
  int n_nodes() const { return int(nodes_.size()); }
  std::span<const int32_t> roots() const { return roots_; }

  // Distance between two leaves (leaf indices, not node ids).
  double leaf_distance(int leaf_i, int leaf_j) const;
  // Full leaf-pair distance matrix.
  DistanceMatrix leaf_distances() const;

  // --- semigroup / truncation algebra -------------------------------------

  // h-top: caps all merge heights and the ceiling at h (distances at 2h).
  Ums truncate(double h) const;
  // h-concatenation: disjoint union of the h-tops with cross distances 2h.
  static Ums concat(const Ums& u, const Ums& v, double h);
  // Maximal components with internal distances < 2h, for u in S_h.
  std::vector<Ums> decompose(double h) const;
  // Masses of the open 2h-ball components (cheap form of decompose).
  std::vector<double> component_masses(double h) const;
  // Collapses each open 2*depth-ball to a leaf carrying the ball mass and
  // reduces remaining distances by 2*depth.
  Ums trunk(double depth) const;

  // n leaves drawn i.i.d. proportional to mass, with replacement; returns
  // their pairwise distances.  Requires total_mass() > 0.
  DistanceMatrix sample_distance_matrix(int n, Rng& rng) const;
  // One mass-weighted leaf index.
  int sample_leaf(Rng& rng) const;

  // Canonical encoding, invariant under leaf relabeling and child reordering;
  // heights (and masses) are quantized to `tol` before encoding.
  std::string canonical_form(double tol = 1e-9) const;
  static bool is_isomorphic(const Ums& u, const Ums& v, double tol = 1e-9);

  std::string to_json() const;
  static Ums from_json(const std::string& text);

 private:
  friend class UmsBuilder;
  void finalize();  // derives leaf list and caches

  std::vector<Node> nodes_;
  std::vector<int32_t> roots_;
  std::vector<int32_t> leaves_;
  std::vector<double> cum_mass_;  // cumulative leaf masses, for sampling
  double ceiling_ = 0.0;
  double total_mass_ = 0.0;
};

// Incremental construction of a forest (used by the simulators).  add_leaf /
// add_internal return node ids; internal nodes take ownership of their kids.
class UmsBuilder {
 public:
  int32_t add_leaf(double mass);
  int32_t add_internal(double height, std::span<const int32_t> kids);
  void add_root(int32_t id) { roots_.push_back(id); }
  void set_ceiling(double c) { ceiling_ = c; }
  // Normalizes (splices equal/degenerate levels, prunes zero mass) and
  // validates; the builder is left empty.
  Ums build();

 private:
  std::vector<Ums::Node> nodes_;
  std::vector<int32_t> roots_;
  double ceiling_ = 0.0;
};

}  // namespace genealogy
