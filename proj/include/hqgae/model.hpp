#ifndef HQGAE_MODEL_HPP
#define HQGAE_MODEL_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hqgae/codebook.hpp"
#include "hqgae/graph.hpp"
#include "hqgae/layers.hpp"

namespace hqgae {

enum class EncoderKind { gcn, gat, sage, gin, mlp };

const char* encoder_name(EncoderKind k);
EncoderKind encoder_from_name(const std::string& name);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::gcn;
  std::vector<int> hidden = {32, 16};
  ReadoutMode readout = ReadoutMode::concat;
  int codebook1_size = 256;  // M
  int codebook2_size = 16;   // C
  double t0 = 1.0;
  double decay = 0.9;
  double t_floor = 1e-4;
  double lambda = 2.0;  // scaled-cosine exponent
  double alpha = 1.0;   // level-1 VQ loss weight
  double beta = 0.01;   // level-2 VQ loss weight
  double lr = 1e-3;
  double weight_decay = 0.0;
  int epochs = 200;
  double dropout = 0.0;
  double neg_ratio = 1.0;  // |E-| = ratio * |train E+| per epoch
  bool vq_enabled = true;
  int edge_mlp_hidden = 16;
  EdgeDecoderInput edge_input = EdgeDecoderInput::dot;
  int gat_heads = 1;
  bool gat_concat = true;
  double val_frac = 0.05;
  double test_frac = 0.10;
  std::uint64_t seed = 1;
};

// Throws std::runtime_error on any violated invariant.
void validate(const ModelConfig& cfg);

int embedding_dim(const ModelConfig& cfg);

std::string config_to_json_string(const ModelConfig& cfg);
ModelConfig config_from_json_string(const std::string& text, bool strict_keys);

struct ModelState {
  ModelConfig config;
  int feature_dim = 0;
  ParamStore params;

  std::vector<GcnLayer> enc_gcn;
  std::vector<GatLayer> enc_gat;
  std::vector<SageLayer> enc_sage;
  std::vector<GinLayer> enc_gin;
  MlpStack enc_mlp;
  GatLayer node_decoder;
  MlpStack edge_mlp;
  int cb1 = -1;  // ParamStore index of the level-1 codebook (M x d)
  int cb2 = -1;  // level-2 codebook (C x d)

  AnnealState anneal;
  std::int64_t epoch = 0;
  std::int64_t adam_t = 0;
  Rng rng{0};
};

ModelState init_model(const ModelConfig& cfg, int feature_dim);

// Constant per-graph structure shared across epochs.
struct GraphContext {
  const SparseGraph* graph = nullptr;
  SparseOperand norm_adj;
  GatGraphCache gat_cache;
  SparseOperand mean_adj;
  SparseOperand sum_adj;
};

GraphContext build_context(const SparseGraph& g);

struct ForwardOutput {
  Tensor x;                        // input features (constant node)
  Tensor h;                        // readout embeddings, N x d
  std::vector<Tensor> per_layer;   // encoder layer outputs
  Tensor e1;                       // quantized codes (id < 0 when vq disabled)
  Assignment assignment;           // empty when vq disabled
  Tensor x_hat;                    // reconstructed features, N x D
};

struct ForwardOptions {
  bool train_mode = false;
  // Use a precomputed assignment instead of selecting codes.
  const Assignment* fixed_assignment = nullptr;
  // Gradient-check hook: replace the straight-through node by
  // e1 = h + const(offset), with the offset captured at the base point.
  const Matrix* st_offset = nullptr;
};

ForwardOutput model_forward(Tape& tp, const BoundParams& bp, ModelState& state,
                            const GraphContext& ctx, const ForwardOptions& opts);

// mean over nodes of (1 - cos(x_i, xhat_i))^lambda; zero rows count as
// fully dissimilar.
Tensor node_rec_loss(Tape& tp, Tensor x, Tensor x_hat, double lambda);

// Binary cross-entropy of decoded probabilities over positive and negative
// pairs; probabilities are clamped away from {0, 1} by 1e-12.
Tensor edge_rec_loss(Tape& tp, const MlpStack& edge_mlp, const BoundParams& bp, Tensor h,
                     const EdgeList& pos_edges, const EdgeList& neg_edges,
                     EdgeDecoderInput input_kind);

// node_rec + edge_rec + alpha * vq1 + beta * vq2
Tensor total_loss(Tape& tp, Tensor node_rec, Tensor edge_rec, Tensor vq1, Tensor vq2,
                  double alpha, double beta);

void adam_step(ParamStore& params, const std::vector<Matrix>& grads, double lr,
               double weight_decay, std::int64_t t, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct DivergenceError : std::runtime_error {
  std::int64_t epoch;
  explicit DivergenceError(std::int64_t e, const std::string& what)
      : std::runtime_error("diverged at epoch " + std::to_string(e) + ": " + what), epoch(e) {}
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double node_rec = 0.0;
  double edge_rec = 0.0;
  double vq1 = 0.0;
  double vq2 = 0.0;
  double total = 0.0;
  double temperature = 0.0;
  double util1 = 0.0;
  double util2 = 0.0;
};

struct TrainResult {
  EdgeSplit split;
  std::vector<EpochRecord> epochs;
};

// Full-batch training from state.epoch up to state.config.epochs. The edge
// holdout is derived from (graph, config), message passing and positive
// edges see only training edges, and negatives are resampled every epoch
// against the full edge set. Fully deterministic in (config, graph).
TrainResult train(ModelState& state, const SparseGraph& g);

// Eval-mode embeddings (argmax selection, no dropout) on the given graph.
Matrix embed(ModelState& state, const SparseGraph& g);

// Versioned binary checkpoint; exact layout documented in the README.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace hqgae

#endif
