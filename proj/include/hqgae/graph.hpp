#ifndef HQGAE_GRAPH_HPP
#define HQGAE_GRAPH_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hqgae/matrix.hpp"
#include "hqgae/sparse.hpp"

namespace hqgae {

// Undirected pair with first < second.
using Edge = std::pair<std::int32_t, std::int32_t>;
using EdgeList = std::vector<Edge>;

// Immutable undirected graph: CSR adjacency (both directions stored, rows
// sorted, no self-loops, no duplicates) plus dense node features and
// optional labels.
struct SparseGraph {
  int num_nodes = 0;
  std::vector<std::int64_t> csr_offsets;  // num_nodes + 1
  std::vector<std::int32_t> csr_targets;  // 2 * |E|
  Matrix features;                        // num_nodes x feature_dim
  std::vector<int> labels;                // empty when absent
  int num_classes = 0;                    // 0 when labels absent

  int degree(int i) const { return static_cast<int>(csr_offsets[i + 1] - csr_offsets[i]); }
  bool has_edge(int i, int j) const;
  std::int64_t num_directed_edges() const { return static_cast<std::int64_t>(csr_targets.size()); }
  std::int64_t num_undirected_edges() const { return num_directed_edges() / 2; }
  EdgeList undirected_edges() const;
  bool has_labels() const { return !labels.empty(); }
};

// Symmetrically normalized adjacency with self-loops:
// weight(i,j) = 1 / sqrt((deg_i + 1) * (deg_j + 1)).
struct NormalizedAdjacency {
  Csr csr;
};

struct EdgeSplit {
  EdgeList train_pos, val_pos, test_pos;
  EdgeList val_neg, test_neg;
};

struct SbmParams {
  int blocks = 2;
  int nodes_per_block = 50;
  double p_in = 0.1;
  double p_out = 0.01;
  int feature_dim = 16;
  double feature_noise = 1.0;
};

struct LoadWarnings {
  std::int64_t dropped_self_loops = 0;
  std::int64_t dropped_duplicates = 0;
};

// Builds a valid SparseGraph from raw undirected edges (either direction,
// duplicates and self-loops tolerated); counts what was dropped.
SparseGraph build_graph(int num_nodes, const EdgeList& edges, Matrix features,
                        std::vector<int> labels = {}, int num_classes = 0,
                        LoadWarnings* warnings = nullptr);

// Reads a dataset directory: edges.tsv, features.tsv, meta.json, optional
// labels.tsv. Throws std::runtime_error with a distinct message per defect.
SparseGraph load_graph(const std::string& dir_path, LoadWarnings* warnings = nullptr);

// Writes a graph in the dataset directory format read by load_graph.
void save_graph(const SparseGraph& g, const std::string& dir_path);

NormalizedAdjacency sym_normalize(const SparseGraph& g);

// Deterministic edge holdout. Fractions apply to the undirected edge count
// (floor); throws if a requested nonzero fraction yields an empty set or no
// training edges remain. Negatives are disjoint from all graph edges and
// from each other.
EdgeSplit split_edges(const SparseGraph& g, double val_frac, double test_frac, std::uint64_t seed);

// `count` distinct unordered non-edges, none in the graph or in `exclude`.
// Throws when fewer than `count` candidates exist.
EdgeList sample_negative_edges(const SparseGraph& g, std::int64_t count, std::uint64_t seed,
                               const EdgeList& exclude = {});

// Planted-partition generator; block id doubles as the node label. Features
// are a one-hot block pattern tiled over feature_dim plus gaussian noise.
SparseGraph generate_sbm(const SbmParams& p, std::uint64_t seed);

// Same nodes/features/labels, adjacency restricted to the given edges.
SparseGraph restrict_to_edges(const SparseGraph& g, const EdgeList& edges);

}  // namespace hqgae

#endif
