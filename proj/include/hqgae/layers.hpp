#ifndef HQGAE_LAYERS_HPP
#define HQGAE_LAYERS_HPP

#include <string>
#include <vector>

#include "hqgae/graph.hpp"
#include "hqgae/tape.hpp"

namespace hqgae {

enum class Activation { linear, prelu, elu, leaky_relu };

// Named parameter registry. Stores the live values plus Adam moments; the
// registration order defines the checkpoint layout.
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Matrix> values;
  std::vector<Matrix> adam_m;
  std::vector<Matrix> adam_v;

  int add(std::string name, Matrix init) {
    names.push_back(std::move(name));
    adam_m.push_back(Matrix(init.rows, init.cols));
    adam_v.push_back(Matrix(init.rows, init.cols));
    values.push_back(std::move(init));
    return static_cast<int>(values.size()) - 1;
  }
  int count() const { return static_cast<int>(values.size()); }
};

// Per-pass tensor handles for every parameter, indexed like the store.
struct BoundParams {
  std::vector<Tensor> handles;
  Tensor operator[](int i) const { return handles[i]; }
};

BoundParams bind_params(Tape& tp, const ParamStore& store);

// slope_index < 0 means the activation carries no learned parameter.
Tensor apply_activation(Tape& tp, Activation act, Tensor x, int slope_index,
                        const BoundParams& bp);

struct GcnLayer {
  int weight = -1;
  int bias = -1;
  int slope = -1;  // prelu only
  Activation act = Activation::linear;
};

struct GatLayer {
  int heads = 1;
  bool concat_heads = true;
  std::vector<int> weight;    // per head, d_in x d_head
  std::vector<int> attn_src;  // per head, 1 x d_head
  std::vector<int> attn_dst;  // per head, 1 x d_head
  int slope = -1;
  Activation act = Activation::linear;
};

struct MlpStack {
  struct Layer {
    int weight = -1;
    int bias = -1;
    int slope = -1;
    Activation act = Activation::linear;
  };
  std::vector<Layer> layers;
};

struct SageLayer {
  int w_self = -1;
  int w_neigh = -1;
  int bias = -1;
  int slope = -1;
  Activation act = Activation::linear;
};

struct GinLayer {
  MlpStack mlp;  // applied to h + sum of neighbor h
};

enum class ReadoutMode { concat, last };

// Constant edge structure for attention aggregation on a fixed graph:
// self-loop-augmented edges grouped by destination, plus the node-by-edge
// incidence used for per-destination sums.
struct GatGraphCache {
  int num_nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;
  SparseOperand incidence;  // N x E, unit weights

  static GatGraphCache build(const SparseGraph& g);
};

// Row-normalized neighbor averaging (no self-loops); isolated rows are zero.
SparseOperand mean_adjacency(const SparseGraph& g);
// Unweighted neighbor sum (no self-loops).
SparseOperand sum_adjacency(const SparseGraph& g);

// activation(adj * h * W + bias)
Tensor gcn_forward(Tape& tp, const GcnLayer& l, const BoundParams& bp,
                   const SparseOperand& adj, Tensor h);

// Attention-weighted aggregation with leaky-relu(0.2) scoring and a
// per-destination softmax over the self-loop-augmented neighborhood. When
// `attention_out` is given it receives the coefficients in cache edge order.
Tensor gat_forward(Tape& tp, const GatLayer& l, const BoundParams& bp, const GatGraphCache& cache,
                   Tensor h, std::vector<double>* attention_out = nullptr);

Tensor mlp_forward(Tape& tp, const MlpStack& m, const BoundParams& bp, Tensor h);

// activation(h * W_self + mean_neighbors(h) * W_neigh + bias)
Tensor sage_forward(Tape& tp, const SageLayer& l, const BoundParams& bp,
                    const SparseOperand& mean_adj, Tensor h);

// MLP(h + sum_neighbors(h))
Tensor gin_forward(Tape& tp, const GinLayer& l, const BoundParams& bp,
                   const SparseOperand& sum_adj, Tensor h);

enum class EdgeDecoderInput { dot, hadamard };

// Sigmoid(MLP(h_i . h_j)) per pair; `hadamard` feeds the elementwise product
// instead of the scalar dot.
Tensor edge_decode(Tape& tp, const MlpStack& m, const BoundParams& bp, Tensor h,
                   const EdgeList& pairs, EdgeDecoderInput input_kind = EdgeDecoderInput::dot);

Tensor readout(Tape& tp, const std::vector<Tensor>& per_layer_outputs, ReadoutMode mode);

}  // namespace hqgae

#endif
