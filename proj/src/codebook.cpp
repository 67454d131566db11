#include "hqgae/codebook.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "hqgae/kernels.hpp"

namespace hqgae {

namespace {

int argmax_row(const Matrix& m, int row) {
  int best = 0;
  const double* r = m.row(row);
  for (int j = 1; j < m.cols; ++j) {
    if (r[j] > r[best]) best = j;
  }
  return best;
}

Matrix gather_matrix(const Matrix& src, const std::vector<int>& idx) {
  Matrix out(static_cast<int>(idx.size()), src.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(src.row(idx[i]), src.row(idx[i]) + src.cols, out.row(static_cast<int>(i)));
  }
  return out;
}

// mean over rows of the squared row norms: sum(x^2) / rows
Tensor mean_sq_row_norm(Tape& tp, Tensor x) {
  Tensor sq = tp.multiply(x, x);
  return tp.scale(tp.reduce_sum(sq), 1.0 / static_cast<double>(x.rows));
}

}  // namespace

AnnealState make_anneal_state(double t0, double decay, double floor_eps, SelectionMode mode) {
  if (t0 <= 0.0) throw std::runtime_error("anneal: initial temperature must be positive");
  if (floor_eps <= 0.0) throw std::runtime_error("anneal: floor must be positive");
  if (decay < 0.0 || decay > 1.0) throw std::runtime_error("anneal: decay must be in [0, 1]");
  AnnealState st;
  st.temperature = std::max(t0, floor_eps);
  st.initial = t0;
  st.decay = decay;
  st.floor = floor_eps;
  st.mode = mode;
  return st;
}

AnnealState anneal_step(const AnnealState& st) {
  AnnealState next = st;
  next.temperature = std::max(st.decay * st.temperature, st.floor);
  return next;
}

Matrix similarity_scores(const Matrix& h, const Matrix& codebook) {
  if (h.cols != codebook.cols) {
    throw std::runtime_error("similarity_scores: width mismatch");
  }
  Matrix out;
  kernels::cosine_scores(h, codebook, out);
  return out;
}

std::vector<int> select_codes(const Matrix& scores, const AnnealState& st, Rng& rng,
                              Matrix* probabilities) {
  std::vector<int> picks(scores.rows);
  if (st.mode == SelectionMode::argmax) {
    if (probabilities) *probabilities = Matrix();
    for (int i = 0; i < scores.rows; ++i) picks[i] = argmax_row(scores, i);
    return picks;
  }

  Matrix probs(scores.rows, scores.cols);
  const double t = st.temperature;
  for (int i = 0; i < scores.rows; ++i) {
    const double* s = scores.row(i);
    double* p = probs.row(i);
    double mx = s[0];
    for (int j = 1; j < scores.cols; ++j) mx = std::max(mx, s[j]);
    double sum = 0.0;
    for (int j = 0; j < scores.cols; ++j) {
      p[j] = std::exp((s[j] - mx) / t);
      sum += p[j];
    }
    for (int j = 0; j < scores.cols; ++j) p[j] /= sum;

    const double u = rng.uniform();
    double acc = 0.0;
    int pick = scores.cols - 1;
    for (int j = 0; j < scores.cols; ++j) {
      acc += p[j];
      if (u < acc) {
        pick = j;
        break;
      }
    }
    picks[i] = pick;
  }
  if (probabilities) *probabilities = std::move(probs);
  return picks;
}

QuantizeResult quantize(Tape& tp, Tensor h, const Matrix& cb1, const Matrix& cb2,
                        const AnnealState& st, Rng& rng) {
  if (cb1.cols != tp.value(h).cols || cb2.cols != cb1.cols) {
    throw std::runtime_error("quantize: code dimension mismatch");
  }

  QuantizeResult qr;
  const Matrix scores1 = similarity_scores(tp.value(h), cb1);
  qr.assignment.level1 = select_codes(scores1, st, rng, &qr.assignment.probabilities);

  const Matrix selected = gather_matrix(cb1, qr.assignment.level1);
  const Matrix scores2 = similarity_scores(selected, cb2);
  qr.assignment.level2.resize(scores2.rows);
  for (int i = 0; i < scores2.rows; ++i) qr.assignment.level2[i] = argmax_row(scores2, i);

  qr.e1 = tp.straight_through(h, selected);
  return qr;
}

std::pair<Tensor, Tensor> vq_losses(Tape& tp, Tensor h, Tensor cb1, Tensor cb2,
                                    const Assignment& asn) {
  const int n = h.rows;
  if (static_cast<int>(asn.level1.size()) != n || static_cast<int>(asn.level2.size()) != n) {
    throw std::runtime_error("vq_losses: assignment length mismatch");
  }

  Tensor e1 = tp.gather_rows(cb1, asn.level1);  // differentiable w.r.t. cb1
  Tensor e2 = tp.gather_rows(cb2, asn.level2);  // differentiable w.r.t. cb2
  Tensor e1_sg = tp.constant(tp.value(e1));
  Tensor e2_sg = tp.constant(tp.value(e2));
  Tensor h_sg = tp.constant(tp.value(h));

  Tensor l1 = tp.add(mean_sq_row_norm(tp, tp.subtract(e1_sg, h)),
                     mean_sq_row_norm(tp, tp.subtract(h_sg, e1)));
  Tensor l2 = tp.add(mean_sq_row_norm(tp, tp.subtract(e2_sg, e1)),
                     mean_sq_row_norm(tp, tp.subtract(e1_sg, e2)));
  return {l1, l2};
}

double utilization(const std::vector<int>& indices, int level_size) {
  if (level_size <= 0) throw std::runtime_error("utilization: level size must be positive");
  std::unordered_set<int> distinct;
  for (const int idx : indices) {
    if (idx < 0 || idx >= level_size) throw std::runtime_error("utilization: index out of range");
    distinct.insert(idx);
  }
  return static_cast<double>(distinct.size()) / static_cast<double>(level_size);
}

double second_layer_objective(const Matrix& cb1, const Matrix& cb2, const Assignment& asn) {
  const Matrix selected = gather_matrix(cb1, asn.level1);
  const Matrix scores = similarity_scores(selected, cb2);
  double total = 0.0;
  for (std::size_t i = 0; i < asn.level2.size(); ++i) {
    total += scores.at(static_cast<int>(i), asn.level2[i]);
  }
  return total;
}

}  // namespace hqgae
