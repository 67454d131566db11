#ifndef HQGAE_EVAL_HPP
#define HQGAE_EVAL_HPP

#include <cstdint>
#include <vector>

#include "hqgae/graph.hpp"
#include "hqgae/matrix.hpp"

namespace hqgae {

struct LpResult {
  double auc = 0.0;
  double ap = 0.0;
};

struct NcResult {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double stddev = 0.0;
};

struct ClusterResult {
  double nmi = 0.0;
  double ari = 0.0;
  double sc = 0.0;
};

// Rank-based AUC with ties counted one half, computed exactly by sorting.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

// Step-method average precision: mean precision at each positive under a
// stable descending sort (ties keep input order).
double ap_score(const std::vector<double>& scores, const std::vector<int>& labels);

// Dot-product probing: candidate (i, j) scores sigmoid(h_i . h_j); no
// trained edge model is involved.
LpResult lp_probe(const Matrix& h, const EdgeList& pos_edges, const EdgeList& neg_edges);

// Stratified k-fold linear probe: per fold, an L2-regularized multinomial
// logistic classifier is fitted by full-batch gradient descent on
// standardized embeddings under a fixed iteration budget.
NcResult nc_probe(const Matrix& h, const std::vector<int>& labels, int folds, std::uint64_t seed);

// k-means++ seeding, Lloyd iterations to an assignment fixpoint (max 300),
// best inertia over `restarts` independent starts. Deterministic per seed.
std::vector<int> kmeans(const Matrix& h, int k, std::uint64_t seed, int restarts = 10);

// NMI (arithmetic-mean normalization), adjusted Rand index, and exact
// Euclidean silhouette (restricted to N <= 20000). A single-cluster
// assignment scores 0 on all three.
ClusterResult cluster_metrics(const std::vector<int>& assignments, const std::vector<int>& labels,
                              const Matrix& h);

}  // namespace hqgae

#endif
