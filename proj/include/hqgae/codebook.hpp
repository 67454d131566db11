#ifndef HQGAE_CODEBOOK_HPP
#define HQGAE_CODEBOOK_HPP

#include <utility>
#include <vector>

#include "hqgae/rng.hpp"
#include "hqgae/tape.hpp"

namespace hqgae {

enum class SelectionMode { sample, argmax };

// Temperature schedule state for stochastic code selection:
// T_k = max(decay * T_{k-1}, floor), applied once per training epoch.
struct AnnealState {
  double temperature = 1.0;
  double initial = 1.0;
  double decay = 0.9;
  double floor = 1e-4;
  SelectionMode mode = SelectionMode::sample;
};

AnnealState make_anneal_state(double t0, double decay, double floor_eps,
                              SelectionMode mode = SelectionMode::sample);

AnnealState anneal_step(const AnnealState& st);

struct Assignment {
  std::vector<int> level1;  // N entries in [0, M)
  std::vector<int> level2;  // N entries in [0, C)
  Matrix probabilities;     // N x M when sampled, empty under argmax
};

// Cosine similarity of every row of `h` against every codebook row; zero
// rows score 0 against everything.
Matrix similarity_scores(const Matrix& h, const Matrix& codebook);

// One index per row of `scores`. `sample` draws from softmax(s/T) per row;
// `argmax` takes the best score with lowest-index tie-break and ignores T.
// When sampling and `probabilities` is non-null it receives the softmax rows.
std::vector<int> select_codes(const Matrix& scores, const AnnealState& st, Rng& rng,
                              Matrix* probabilities = nullptr);

struct QuantizeResult {
  Tensor e1;              // straight-through lookup of the level-1 codes
  Assignment assignment;  // level-2 always assigned by argmax cosine
};

// Level-1 selection follows `st`; level-2 maps each selected level-1 code to
// its most similar level-2 code (argmax, never annealed).
QuantizeResult quantize(Tape& tp, Tensor h, const Matrix& cb1, const Matrix& cb2,
                        const AnnealState& st, Rng& rng);

// Symmetric stop-gradient VQ losses:
//   L1 = mean_i(||sg[e1_i] - h_i||^2 + ||sg[h_i] - e1_i||^2)
//   L2 = mean_i(||sg[e2_i] - e1_i||^2 + ||sg[e1_i] - e2_i||^2)
// Gradients: L1 reaches h through its first term and cb1 through its second;
// L2 couples cb1 and cb2 the same way and never reaches h.
std::pair<Tensor, Tensor> vq_losses(Tape& tp, Tensor h, Tensor cb1, Tensor cb2,
                                    const Assignment& asn);

// Fraction of the codebook selected at least once.
double utilization(const std::vector<int>& indices, int level_size);

// Diagnostic clustering objective: per-node cosine of the selected level-1
// code against its assigned level-2 code, summed.
double second_layer_objective(const Matrix& cb1, const Matrix& cb2, const Assignment& asn);

}  // namespace hqgae

#endif
