#include "hqgae/layers.hpp"

#include <algorithm>
#include <stdexcept>

namespace hqgae {

BoundParams bind_params(Tape& tp, const ParamStore& store) {
  BoundParams bp;
  bp.handles.reserve(store.values.size());
  for (const Matrix& v : store.values) bp.handles.push_back(tp.param(v));
  return bp;
}

Tensor apply_activation(Tape& tp, Activation act, Tensor x, int slope_index,
                        const BoundParams& bp) {
  switch (act) {
    case Activation::linear: return x;
    case Activation::prelu: return tp.prelu(x, bp[slope_index]);
    case Activation::elu: return tp.elu(x);
    case Activation::leaky_relu: return tp.leaky_relu(x);
  }
  return x;
}

namespace {

Tensor add_bias(Tape& tp, Tensor x, Tensor bias) {
  Tensor ones = tp.constant(Matrix::full(x.rows, 1, 1.0));
  return tp.add(x, tp.matmul(ones, bias));
}

}  // namespace

GatGraphCache GatGraphCache::build(const SparseGraph& g) {
  GatGraphCache c;
  c.num_nodes = g.num_nodes;
  const std::int64_t num_edges = g.num_directed_edges() + g.num_nodes;
  c.src.reserve(num_edges);
  c.dst.reserve(num_edges);

  Csr inc;
  inc.rows = g.num_nodes;
  inc.cols = static_cast<int>(num_edges);
  inc.offsets.assign(g.num_nodes + 1, 0);
  inc.targets.resize(num_edges);
  inc.weights.assign(num_edges, 1.0);

  std::int64_t e = 0;
  for (int i = 0; i < g.num_nodes; ++i) {
    inc.offsets[i] = e;
    c.dst.push_back(i);  // self-loop first
    c.src.push_back(i);
    inc.targets[e] = static_cast<std::int32_t>(e);
    ++e;
    for (std::int64_t k = g.csr_offsets[i]; k < g.csr_offsets[i + 1]; ++k) {
      c.dst.push_back(i);
      c.src.push_back(g.csr_targets[k]);
      inc.targets[e] = static_cast<std::int32_t>(e);
      ++e;
    }
  }
  inc.offsets[g.num_nodes] = e;
  c.incidence = SparseOperand::general(std::move(inc));
  return c;
}

SparseOperand mean_adjacency(const SparseGraph& g) {
  Csr m;
  m.rows = g.num_nodes;
  m.cols = g.num_nodes;
  m.offsets.assign(g.csr_offsets.begin(), g.csr_offsets.end());
  m.targets = g.csr_targets;
  m.weights.resize(g.csr_targets.size());
  for (int i = 0; i < g.num_nodes; ++i) {
    const double d = static_cast<double>(g.degree(i));
    for (std::int64_t e = g.csr_offsets[i]; e < g.csr_offsets[i + 1]; ++e) {
      m.weights[e] = 1.0 / d;
    }
  }
  return SparseOperand::general(std::move(m));
}

SparseOperand sum_adjacency(const SparseGraph& g) {
  Csr m;
  m.rows = g.num_nodes;
  m.cols = g.num_nodes;
  m.offsets.assign(g.csr_offsets.begin(), g.csr_offsets.end());
  m.targets = g.csr_targets;
  m.weights.assign(g.csr_targets.size(), 1.0);
  return SparseOperand::symmetric(std::move(m));
}

Tensor gcn_forward(Tape& tp, const GcnLayer& l, const BoundParams& bp, const SparseOperand& adj,
                   Tensor h) {
  Tensor z = tp.spmm(adj, h);
  z = tp.matmul(z, bp[l.weight]);
  z = add_bias(tp, z, bp[l.bias]);
  return apply_activation(tp, l.act, z, l.slope, bp);
}

Tensor gat_forward(Tape& tp, const GatLayer& l, const BoundParams& bp, const GatGraphCache& cache,
                   Tensor h, std::vector<double>* attention_out) {
  if (attention_out) attention_out->clear();
  Tensor combined;
  for (int head = 0; head < l.heads; ++head) {
    Tensor z = tp.matmul(h, bp[l.weight[head]]);
    const int d_head = z.cols;
    Tensor s_src = tp.matmul(z, tp.transpose(bp[l.attn_src[head]]));  // N x 1
    Tensor s_dst = tp.matmul(z, tp.transpose(bp[l.attn_dst[head]]));  // N x 1

    Tensor e = tp.add(tp.gather_rows(s_dst, cache.dst), tp.gather_rows(s_src, cache.src));
    e = tp.leaky_relu(e);

    // Softmax is shift-invariant; subtracting the global max (held constant)
    // keeps exp() in range without changing values or gradients.
    const Matrix& ev = tp.value(e);
    const double shift = *std::max_element(ev.data.begin(), ev.data.end());
    e = tp.add(e, tp.constant(Matrix::full(e.rows, 1, -shift)));

    Tensor ex = tp.exp(e);
    Tensor denom = tp.spmm(cache.incidence, ex);                    // N x 1
    Tensor denom_per_edge = tp.gather_rows(denom, cache.dst);       // E x 1
    Tensor alpha = tp.multiply(ex, tp.pow(denom_per_edge, -1.0));   // E x 1
    if (attention_out) {
      const Matrix& av = tp.value(alpha);
      attention_out->insert(attention_out->end(), av.data.begin(), av.data.end());
    }

    Tensor alpha_wide = tp.matmul(alpha, tp.constant(Matrix::full(1, d_head, 1.0)));
    Tensor messages = tp.multiply(alpha_wide, tp.gather_rows(z, cache.src));
    Tensor out = tp.spmm(cache.incidence, messages);  // N x d_head

    if (head == 0) {
      combined = out;
    } else if (l.concat_heads) {
      combined = tp.concat_cols(combined, out);
    } else {
      combined = tp.add(combined, out);
    }
  }
  if (!l.concat_heads && l.heads > 1) {
    combined = tp.scale(combined, 1.0 / static_cast<double>(l.heads));
  }
  return apply_activation(tp, l.act, combined, l.slope, bp);
}

Tensor mlp_forward(Tape& tp, const MlpStack& m, const BoundParams& bp, Tensor h) {
  Tensor x = h;
  for (const auto& layer : m.layers) {
    x = tp.matmul(x, bp[layer.weight]);
    x = add_bias(tp, x, bp[layer.bias]);
    x = apply_activation(tp, layer.act, x, layer.slope, bp);
  }
  return x;
}

Tensor sage_forward(Tape& tp, const SageLayer& l, const BoundParams& bp,
                    const SparseOperand& mean_adj, Tensor h) {
  Tensor self_part = tp.matmul(h, bp[l.w_self]);
  Tensor neigh_part = tp.matmul(tp.spmm(mean_adj, h), bp[l.w_neigh]);
  Tensor z = add_bias(tp, tp.add(self_part, neigh_part), bp[l.bias]);
  return apply_activation(tp, l.act, z, l.slope, bp);
}

Tensor gin_forward(Tape& tp, const GinLayer& l, const BoundParams& bp,
                   const SparseOperand& sum_adj, Tensor h) {
  Tensor agg = tp.add(h, tp.spmm(sum_adj, h));
  return mlp_forward(tp, l.mlp, bp, agg);
}

Tensor edge_decode(Tape& tp, const MlpStack& m, const BoundParams& bp, Tensor h,
                   const EdgeList& pairs, EdgeDecoderInput input_kind) {
  if (pairs.empty()) throw std::runtime_error("edge_decode: empty pair list");
  std::vector<int> srcs, dsts;
  srcs.reserve(pairs.size());
  dsts.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    srcs.push_back(a);
    dsts.push_back(b);
  }
  Tensor hs = tp.gather_rows(h, std::move(srcs));
  Tensor hd = tp.gather_rows(h, std::move(dsts));
  Tensor x = (input_kind == EdgeDecoderInput::dot) ? tp.rowwise_dot(hs, hd) : tp.multiply(hs, hd);
  Tensor logits = mlp_forward(tp, m, bp, x);
  if (logits.cols != 1) throw std::runtime_error("edge_decode: MLP must end in one output column");
  return tp.sigmoid(logits);
}

Tensor readout(Tape& tp, const std::vector<Tensor>& per_layer_outputs, ReadoutMode mode) {
  if (per_layer_outputs.empty()) throw std::runtime_error("readout: no layer outputs");
  if (mode == ReadoutMode::last) return per_layer_outputs.back();
  Tensor out = per_layer_outputs.front();
  for (std::size_t i = 1; i < per_layer_outputs.size(); ++i) {
    out = tp.concat_cols(out, per_layer_outputs[i]);
  }
  return out;
}

}  // namespace hqgae
