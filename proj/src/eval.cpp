#include "hqgae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "hqgae/rng.hpp"

namespace hqgae {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double dot_rows(const Matrix& h, int i, int j) {
  const double* a = h.row(i);
  const double* b = h.row(j);
  double acc = 0.0;
  for (int k = 0; k < h.cols; ++k) acc += a[k] * b[k];
  return acc;
}

double sq_dist(const double* a, const double* b, int d) {
  double acc = 0.0;
  for (int k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc;
}

long long comb2(long long n) { return n * (n - 1) / 2; }

}  // namespace

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::runtime_error("auc_score: empty or mismatched inputs");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::size_t num_pos = 0;
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++num_pos;
      }
    }
    i = j;
  }
  const std::size_t num_neg = n - num_pos;
  if (num_pos == 0 || num_neg == 0) {
    throw std::runtime_error("auc_score: need both positive and negative labels");
  }
  const double p = static_cast<double>(num_pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(num_neg));
}

double ap_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::runtime_error("ap_score: empty or mismatched inputs");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t hits = 0;
  double sum_precision = 0.0;
  for (std::size_t rank = 1; rank <= n; ++rank) {
    if (labels[order[rank - 1]] == 1) {
      ++hits;
      sum_precision += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  if (hits == 0) throw std::runtime_error("ap_score: no positive labels");
  return sum_precision / static_cast<double>(hits);
}

LpResult lp_probe(const Matrix& h, const EdgeList& pos_edges, const EdgeList& neg_edges) {
  if (pos_edges.empty() || neg_edges.empty()) {
    throw std::runtime_error("lp_probe: empty edge set");
  }
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(pos_edges.size() + neg_edges.size());
  labels.reserve(scores.capacity());
  for (const auto& [i, j] : pos_edges) {
    scores.push_back(sigmoid(dot_rows(h, i, j)));
    labels.push_back(1);
  }
  for (const auto& [i, j] : neg_edges) {
    scores.push_back(sigmoid(dot_rows(h, i, j)));
    labels.push_back(0);
  }
  return LpResult{auc_score(scores, labels), ap_score(scores, labels)};
}

namespace {

struct Standardizer {
  std::vector<double> mean, inv_std;

  static Standardizer fit(const Matrix& x, const std::vector<int>& rows) {
    Standardizer s;
    s.mean.assign(x.cols, 0.0);
    s.inv_std.assign(x.cols, 0.0);
    for (const int r : rows) {
      for (int j = 0; j < x.cols; ++j) s.mean[j] += x.at(r, j);
    }
    for (double& m : s.mean) m /= static_cast<double>(rows.size());
    for (const int r : rows) {
      for (int j = 0; j < x.cols; ++j) {
        const double d = x.at(r, j) - s.mean[j];
        s.inv_std[j] += d * d;
      }
    }
    for (int j = 0; j < x.cols; ++j) {
      const double var = s.inv_std[j] / static_cast<double>(rows.size());
      s.inv_std[j] = 1.0 / std::max(std::sqrt(var), 1e-8);
    }
    return s;
  }

  Matrix apply(const Matrix& x, const std::vector<int>& rows) const {
    Matrix out(static_cast<int>(rows.size()), x.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (int j = 0; j < x.cols; ++j) {
        out.at(static_cast<int>(i), j) = (x.at(rows[i], j) - mean[j]) * inv_std[j];
      }
    }
    return out;
  }
};

struct Logistic {
  Matrix w;  // d x k
  std::vector<double> b;

  // softmax cross-entropy loss and gradient at the current parameters
  double loss_and_grad(const Matrix& x, const std::vector<int>& y, int k, double l2, Matrix* gw,
                       std::vector<double>* gb) const {
    const int n = x.rows;
    const int d = x.cols;
    Matrix probs(n, k);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double z = b[c];
        const double* xr = x.row(i);
        for (int j = 0; j < d; ++j) z += xr[j] * w.at(j, c);
        probs.at(i, c) = z;
        mx = std::max(mx, z);
      }
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        probs.at(i, c) = std::exp(probs.at(i, c) - mx);
        sum += probs.at(i, c);
      }
      for (int c = 0; c < k; ++c) probs.at(i, c) /= sum;
      loss -= std::log(std::max(probs.at(i, y[i]), 1e-300));
    }
    loss /= static_cast<double>(n);
    double reg = 0.0;
    for (const double v : w.data) reg += v * v;
    loss += 0.5 * l2 * reg;

    if (gw) {
      *gw = Matrix(d, k);
      gb->assign(k, 0.0);
      for (int i = 0; i < n; ++i) {
        const double* xr = x.row(i);
        for (int c = 0; c < k; ++c) {
          const double delta = (probs.at(i, c) - (y[i] == c ? 1.0 : 0.0)) /
                               static_cast<double>(n);
          (*gb)[c] += delta;
          for (int j = 0; j < d; ++j) gw->at(j, c) += delta * xr[j];
        }
      }
      for (std::size_t idx = 0; idx < gw->size(); ++idx) {
        gw->data[idx] += l2 * w.data[idx];
      }
    }
    return loss;
  }

  int predict(const double* xr, int d, int k) const {
    int best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double z = b[c];
      for (int j = 0; j < d; ++j) z += xr[j] * w.at(j, c);
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    return best;
  }
};

// Full-batch gradient descent with a fixed budget of loss evaluations;
// steps that raise the loss are rolled back and the rate halved.
Logistic fit_logistic(const Matrix& x, const std::vector<int>& y, int k, int budget, double l2) {
  Logistic model;
  model.w = Matrix(x.cols, k);
  model.b.assign(k, 0.0);

  Matrix gw;
  std::vector<double> gb;
  double lr = 1.0;
  double loss = model.loss_and_grad(x, y, k, l2, &gw, &gb);
  for (int it = 0; it < budget; ++it) {
    Logistic trial = model;
    for (std::size_t i = 0; i < trial.w.size(); ++i) trial.w.data[i] -= lr * gw.data[i];
    for (int c = 0; c < k; ++c) trial.b[c] -= lr * gb[c];

    Matrix gw_new;
    std::vector<double> gb_new;
    const double trial_loss = trial.loss_and_grad(x, y, k, l2, &gw_new, &gb_new);
    if (trial_loss <= loss) {
      model = std::move(trial);
      loss = trial_loss;
      gw = std::move(gw_new);
      gb = std::move(gb_new);
    } else {
      lr *= 0.5;
      if (lr < 1e-12) break;
    }
  }
  return model;
}

}  // namespace

NcResult nc_probe(const Matrix& h, const std::vector<int>& labels, int folds, std::uint64_t seed) {
  if (static_cast<int>(labels.size()) != h.rows) {
    throw std::runtime_error("nc_probe: label count does not match embeddings");
  }
  if (folds < 2) throw std::runtime_error("nc_probe: need at least 2 folds");

  int num_classes = 0;
  for (const int l : labels) {
    if (l < 0) throw std::runtime_error("nc_probe: negative label");
    num_classes = std::max(num_classes, l + 1);
  }

  // Stratified fold assignment: shuffle within each class, deal round-robin.
  std::vector<std::vector<int>> by_class(num_classes);
  for (int i = 0; i < h.rows; ++i) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<int> fold_of(h.rows, -1);
  for (int c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    for (std::size_t i = members.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(members[i - 1], members[j]);
    }
    for (std::size_t t = 0; t < members.size(); ++t) {
      fold_of[members[t]] = static_cast<int>(t % folds);
    }
  }

  NcResult result;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < h.rows; ++i) {
      (fold_of[i] == f ? test_rows : train_rows).push_back(i);
    }
    if (test_rows.empty()) throw std::runtime_error("nc_probe: empty test fold");

    std::vector<int> seen(num_classes, 0);
    std::vector<int> y_train;
    y_train.reserve(train_rows.size());
    for (const int r : train_rows) {
      seen[labels[r]] = 1;
      y_train.push_back(labels[r]);
    }
    for (int c = 0; c < num_classes; ++c) {
      if (!by_class[c].empty() && !seen[c]) {
        throw std::runtime_error("nc_probe: class " + std::to_string(c) +
                                 " missing from training folds");
      }
    }

    const Standardizer stats = Standardizer::fit(h, train_rows);
    const Matrix x_train = stats.apply(h, train_rows);
    const Matrix x_test = stats.apply(h, test_rows);
    const Logistic model = fit_logistic(x_train, y_train, num_classes, 500, 1e-4);

    int correct = 0;
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      if (model.predict(x_test.row(static_cast<int>(i)), h.cols, num_classes) ==
          labels[test_rows[i]]) {
        ++correct;
      }
    }
    result.fold_accuracy.push_back(static_cast<double>(correct) /
                                   static_cast<double>(test_rows.size()));
  }

  double sum = 0.0;
  for (const double a : result.fold_accuracy) sum += a;
  result.mean = sum / static_cast<double>(result.fold_accuracy.size());
  double var = 0.0;
  for (const double a : result.fold_accuracy) var += (a - result.mean) * (a - result.mean);
  result.stddev = result.fold_accuracy.size() > 1
                      ? std::sqrt(var / static_cast<double>(result.fold_accuracy.size() - 1))
                      : 0.0;
  return result;
}

namespace {

double assign_points(const Matrix& h, const Matrix& centroids, std::vector<int>& assign) {
  const int n = h.rows;
  const int k = centroids.rows;
  std::vector<double> dists(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = sq_dist(h.row(i), centroids.row(0), h.cols);
    for (int c = 1; c < k; ++c) {
      const double d = sq_dist(h.row(i), centroids.row(c), h.cols);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    assign[i] = best;
    dists[i] = best_d;
  }
  double inertia = 0.0;
  for (const double d : dists) inertia += d;
  return inertia;
}

std::vector<int> kmeans_single(const Matrix& h, int k, Rng& rng, double* out_inertia) {
  const int n = h.rows;
  Matrix centroids(k, h.cols);

  // k-means++ seeding
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.below(n));
  std::copy(h.row(first), h.row(first) + h.cols, centroids.row(0));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      min_d[i] = std::min(min_d[i], sq_dist(h.row(i), centroids.row(c - 1), h.cols));
      total += min_d[i];
    }
    int pick;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.below(n));
    } else {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += min_d[i];
        if (target < acc) {
          pick = i;
          break;
        }
      }
    }
    std::copy(h.row(pick), h.row(pick) + h.cols, centroids.row(c));
  }

  std::vector<int> assign(n, -1), prev(n, -2);
  double inertia = 0.0;
  for (int iter = 0; iter < 300; ++iter) {
    inertia = assign_points(h, centroids, assign);
    if (assign == prev) break;
    prev = assign;

    centroids = Matrix(k, h.cols);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      counts[assign[i]]++;
      double* cr = centroids.row(assign[i]);
      const double* hr = h.row(i);
      for (int j = 0; j < h.cols; ++j) cr[j] += hr[j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        double* cr = centroids.row(c);
        for (int j = 0; j < h.cols; ++j) cr[j] /= static_cast<double>(counts[c]);
      }
    }
    // Empty cluster: move its centroid onto the point farthest from its own
    // centroid (lowest index breaks ties).
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far_i = 0;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const double d = sq_dist(h.row(i), centroids.row(assign[i]), h.cols);
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      std::copy(h.row(far_i), h.row(far_i) + h.cols, centroids.row(c));
    }
  }
  if (out_inertia) *out_inertia = inertia;
  return assign;
}

}  // namespace

std::vector<int> kmeans(const Matrix& h, int k, std::uint64_t seed, int restarts) {
  if (k < 1 || k > h.rows) {
    throw std::runtime_error("kmeans: need 1 <= k <= number of points");
  }
  if (restarts < 1) throw std::runtime_error("kmeans: need at least one restart");

  Rng base(seed);
  std::vector<int> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng run_rng(base.next_u64());
    double inertia = 0.0;
    std::vector<int> assign = kmeans_single(h, k, run_rng, &inertia);
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = std::move(assign);
    }
  }
  return best;
}

namespace {

// Contingency table over (assignment, label) pairs with dense reindexing.
struct Contingency {
  int rows = 0, cols = 0;
  std::vector<long long> counts;      // rows x cols
  std::vector<long long> row_totals;  // per assignment cluster
  std::vector<long long> col_totals;  // per label class
  long long n = 0;

  static Contingency build(const std::vector<int>& a, const std::vector<int>& b) {
    Contingency c;
    std::unordered_map<int, int> amap, bmap;
    for (const int v : a) amap.emplace(v, static_cast<int>(amap.size()));
    for (const int v : b) bmap.emplace(v, static_cast<int>(bmap.size()));
    c.rows = static_cast<int>(amap.size());
    c.cols = static_cast<int>(bmap.size());
    c.counts.assign(static_cast<std::size_t>(c.rows) * c.cols, 0);
    c.row_totals.assign(c.rows, 0);
    c.col_totals.assign(c.cols, 0);
    c.n = static_cast<long long>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const int r = amap[a[i]];
      const int l = bmap[b[i]];
      c.counts[static_cast<std::size_t>(r) * c.cols + l]++;
      c.row_totals[r]++;
      c.col_totals[l]++;
    }
    return c;
  }
};

double nmi_from(const Contingency& c) {
  const double n = static_cast<double>(c.n);
  double mi = 0.0, ha = 0.0, hb = 0.0;
  for (int r = 0; r < c.rows; ++r) {
    const double pr = static_cast<double>(c.row_totals[r]) / n;
    if (pr > 0.0) ha -= pr * std::log(pr);
  }
  for (int l = 0; l < c.cols; ++l) {
    const double pl = static_cast<double>(c.col_totals[l]) / n;
    if (pl > 0.0) hb -= pl * std::log(pl);
  }
  for (int r = 0; r < c.rows; ++r) {
    for (int l = 0; l < c.cols; ++l) {
      const long long cnt = c.counts[static_cast<std::size_t>(r) * c.cols + l];
      if (cnt == 0) continue;
      const double p = static_cast<double>(cnt) / n;
      const double pr = static_cast<double>(c.row_totals[r]) / n;
      const double pl = static_cast<double>(c.col_totals[l]) / n;
      mi += p * std::log(p / (pr * pl));
    }
  }
  const double denom = 0.5 * (ha + hb);
  return denom > 0.0 ? mi / denom : 0.0;
}

double ari_from(const Contingency& c) {
  double index = 0.0;
  for (const long long cnt : c.counts) index += static_cast<double>(comb2(cnt));
  double sum_a = 0.0, sum_b = 0.0;
  for (const long long t : c.row_totals) sum_a += static_cast<double>(comb2(t));
  for (const long long t : c.col_totals) sum_b += static_cast<double>(comb2(t));
  const double total_pairs = static_cast<double>(comb2(c.n));
  if (total_pairs == 0.0) return 0.0;
  const double expected = sum_a * sum_b / total_pairs;
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  return denom != 0.0 ? (index - expected) / denom : 0.0;
}

double silhouette(const std::vector<int>& assign, const Matrix& h) {
  const int n = h.rows;
  if (n > 20000) throw std::runtime_error("silhouette: exact O(N^2) limited to N <= 20000");
  int k = 0;
  for (const int a : assign) k = std::max(k, a + 1);
  std::vector<int> sizes(k, 0);
  for (const int a : assign) sizes[a]++;

  std::vector<double> s(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    std::vector<double> mean_dist(k, 0.0);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_dist[assign[j]] += std::sqrt(sq_dist(h.row(i), h.row(j), h.cols));
    }
    const int own = assign[i];
    if (sizes[own] <= 1) {
      s[i] = 0.0;
      continue;
    }
    const double a = mean_dist[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == own || sizes[c] == 0) continue;
      b = std::min(b, mean_dist[c] / static_cast<double>(sizes[c]));
    }
    const double m = std::max(a, b);
    s[i] = m > 0.0 ? (b - a) / m : 0.0;
  }
  double total = 0.0;
  for (const double v : s) total += v;
  return total / static_cast<double>(n);
}

}  // namespace

ClusterResult cluster_metrics(const std::vector<int>& assignments, const std::vector<int>& labels,
                              const Matrix& h) {
  if (assignments.size() != labels.size() ||
      static_cast<int>(assignments.size()) != h.rows || assignments.empty()) {
    throw std::runtime_error("cluster_metrics: size mismatch");
  }
  bool single = true;
  for (const int a : assignments) {
    if (a != assignments[0]) {
      single = false;
      break;
    }
  }
  if (single) return ClusterResult{0.0, 0.0, 0.0};

  const Contingency c = Contingency::build(assignments, labels);
  ClusterResult result;
  result.nmi = nmi_from(c);
  result.ari = ari_from(c);
  result.sc = silhouette(assignments, h);
  return result;
}

}  // namespace hqgae
