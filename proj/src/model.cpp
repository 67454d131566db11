#include "hqgae/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <tuple>

#include <json.hpp>

namespace hqgae {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

const char* encoder_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::gcn: return "gcn";
    case EncoderKind::gat: return "gat";
    case EncoderKind::sage: return "sage";
    case EncoderKind::gin: return "gin";
    case EncoderKind::mlp: return "mlp";
  }
  return "?";
}

EncoderKind encoder_from_name(const std::string& name) {
  if (name == "gcn") return EncoderKind::gcn;
  if (name == "gat") return EncoderKind::gat;
  if (name == "sage") return EncoderKind::sage;
  if (name == "gin") return EncoderKind::gin;
  if (name == "mlp") return EncoderKind::mlp;
  throw std::runtime_error("unknown encoder kind '" + name + "'");
}

void validate(const ModelConfig& cfg) {
  if (cfg.hidden.empty()) throw std::runtime_error("config: hidden widths must be nonempty");
  for (const int w : cfg.hidden) {
    if (w < 1) throw std::runtime_error("config: hidden widths must be positive");
  }
  if (!(cfg.codebook1_size > cfg.codebook2_size && cfg.codebook2_size >= 1)) {
    throw std::runtime_error("config: need codebook1_size > codebook2_size >= 1");
  }
  if (cfg.alpha < 0.0) throw std::runtime_error("config: alpha must be >= 0");
  if (cfg.beta < 0.0) throw std::runtime_error("config: beta must be >= 0");
  if (cfg.lambda < 1.0) throw std::runtime_error("config: lambda must be >= 1");
  if (cfg.t0 <= 0.0) throw std::runtime_error("config: t0 must be positive");
  if (cfg.t_floor <= 0.0) throw std::runtime_error("config: t_floor must be positive");
  if (cfg.decay < 0.0 || cfg.decay > 1.0) throw std::runtime_error("config: decay must be in [0, 1]");
  if (cfg.lr <= 0.0) throw std::runtime_error("config: lr must be positive");
  if (cfg.epochs < 0) throw std::runtime_error("config: epochs must be >= 0");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) {
    throw std::runtime_error("config: dropout must be in [0, 1)");
  }
  if (cfg.neg_ratio < 0.0) throw std::runtime_error("config: neg_ratio must be >= 0");
  if (cfg.edge_mlp_hidden < 1) throw std::runtime_error("config: edge_mlp_hidden must be positive");
  if (cfg.gat_heads < 1) throw std::runtime_error("config: gat_heads must be positive");
  if (cfg.encoder == EncoderKind::gat && cfg.gat_concat) {
    for (const int w : cfg.hidden) {
      if (w % cfg.gat_heads != 0) {
        throw std::runtime_error("config: hidden widths must be divisible by gat_heads");
      }
    }
  }
  if (cfg.val_frac < 0.0 || cfg.test_frac < 0.0 || cfg.val_frac + cfg.test_frac >= 1.0) {
    throw std::runtime_error("config: val_frac + test_frac must stay below 1");
  }
}

int embedding_dim(const ModelConfig& cfg) {
  if (cfg.readout == ReadoutMode::last) return cfg.hidden.back();
  int total = 0;
  for (const int w : cfg.hidden) total += w;
  return total;
}

namespace {

Matrix glorot(Rng& rng, int rows, int cols) {
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.data) v = (rng.uniform() * 2.0 - 1.0) * s;
  return m;
}

Matrix normal_scaled(Rng& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal() * scale;
  return m;
}

GatLayer make_gat_layer(ParamStore& ps, Rng& rng, const std::string& prefix, int d_in,
                        int width, int heads, bool concat, Activation act) {
  GatLayer l;
  l.heads = heads;
  l.concat_heads = concat;
  const int d_head = concat ? width / heads : width;
  for (int h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    l.weight.push_back(ps.add(hp + ".weight", glorot(rng, d_in, d_head)));
    l.attn_src.push_back(ps.add(hp + ".attn_src", glorot(rng, 1, d_head)));
    l.attn_dst.push_back(ps.add(hp + ".attn_dst", glorot(rng, 1, d_head)));
  }
  l.act = act;
  if (act == Activation::prelu) {
    l.slope = ps.add(prefix + ".slope", Matrix::full(1, width, 0.25));
  }
  return l;
}

Matrix gather_rows_matrix(const Matrix& src, const std::vector<int>& idx) {
  Matrix out(static_cast<int>(idx.size()), src.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(src.row(idx[i]), src.row(idx[i]) + src.cols, out.row(static_cast<int>(i)));
  }
  return out;
}

Tensor apply_mlp_layer(Tape& tp, const MlpStack::Layer& layer, const BoundParams& bp, Tensor x) {
  Tensor ones = tp.constant(Matrix::full(x.rows, 1, 1.0));
  Tensor z = tp.add(tp.matmul(x, bp[layer.weight]), tp.matmul(ones, bp[layer.bias]));
  return apply_activation(tp, layer.act, z, layer.slope, bp);
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["encoder"] = encoder_name(cfg.encoder);
  j["hidden"] = cfg.hidden;
  j["readout"] = cfg.readout == ReadoutMode::concat ? "concat" : "last";
  j["codebook1_size"] = cfg.codebook1_size;
  j["codebook2_size"] = cfg.codebook2_size;
  j["t0"] = cfg.t0;
  j["decay"] = cfg.decay;
  j["t_floor"] = cfg.t_floor;
  j["lambda"] = cfg.lambda;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["dropout"] = cfg.dropout;
  j["neg_ratio"] = cfg.neg_ratio;
  j["vq_enabled"] = cfg.vq_enabled;
  j["edge_mlp_hidden"] = cfg.edge_mlp_hidden;
  j["edge_input"] = cfg.edge_input == EdgeDecoderInput::dot ? "dot" : "hadamard";
  j["gat_heads"] = cfg.gat_heads;
  j["gat_concat"] = cfg.gat_concat;
  j["val_frac"] = cfg.val_frac;
  j["test_frac"] = cfg.test_frac;
  j["seed"] = cfg.seed;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j, bool strict_keys) {
  static const std::vector<std::string> known = {
      "encoder",   "hidden",       "readout",         "codebook1_size", "codebook2_size",
      "t0",        "decay",        "t_floor",         "lambda",         "alpha",
      "beta",      "lr",           "weight_decay",    "epochs",         "dropout",
      "neg_ratio", "vq_enabled",   "edge_mlp_hidden", "edge_input",     "gat_heads",
      "gat_concat", "val_frac",    "test_frac",       "seed"};
  if (strict_keys) {
    for (const auto& [key, _] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw std::runtime_error("config: unknown key '" + key + "'");
      }
    }
  }
  ModelConfig cfg;
  if (j.contains("encoder")) cfg.encoder = encoder_from_name(j["encoder"].get<std::string>());
  if (j.contains("hidden")) cfg.hidden = j["hidden"].get<std::vector<int>>();
  if (j.contains("readout")) {
    const std::string r = j["readout"].get<std::string>();
    if (r == "concat") {
      cfg.readout = ReadoutMode::concat;
    } else if (r == "last") {
      cfg.readout = ReadoutMode::last;
    } else {
      throw std::runtime_error("config: readout must be 'concat' or 'last'");
    }
  }
  if (j.contains("codebook1_size")) cfg.codebook1_size = j["codebook1_size"].get<int>();
  if (j.contains("codebook2_size")) cfg.codebook2_size = j["codebook2_size"].get<int>();
  if (j.contains("t0")) cfg.t0 = j["t0"].get<double>();
  if (j.contains("decay")) cfg.decay = j["decay"].get<double>();
  if (j.contains("t_floor")) cfg.t_floor = j["t_floor"].get<double>();
  if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
  if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
  if (j.contains("beta")) cfg.beta = j["beta"].get<double>();
  if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
  if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
  if (j.contains("dropout")) cfg.dropout = j["dropout"].get<double>();
  if (j.contains("neg_ratio")) cfg.neg_ratio = j["neg_ratio"].get<double>();
  if (j.contains("vq_enabled")) cfg.vq_enabled = j["vq_enabled"].get<bool>();
  if (j.contains("edge_mlp_hidden")) cfg.edge_mlp_hidden = j["edge_mlp_hidden"].get<int>();
  if (j.contains("edge_input")) {
    const std::string e = j["edge_input"].get<std::string>();
    if (e == "dot") {
      cfg.edge_input = EdgeDecoderInput::dot;
    } else if (e == "hadamard") {
      cfg.edge_input = EdgeDecoderInput::hadamard;
    } else {
      throw std::runtime_error("config: edge_input must be 'dot' or 'hadamard'");
    }
  }
  if (j.contains("gat_heads")) cfg.gat_heads = j["gat_heads"].get<int>();
  if (j.contains("gat_concat")) cfg.gat_concat = j["gat_concat"].get<bool>();
  if (j.contains("val_frac")) cfg.val_frac = j["val_frac"].get<double>();
  if (j.contains("test_frac")) cfg.test_frac = j["test_frac"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  return cfg;
}

}  // namespace

std::string config_to_json_string(const ModelConfig& cfg) { return config_to_json(cfg).dump(); }

ModelConfig config_from_json_string(const std::string& text, bool strict_keys) {
  return config_from_json(nlohmann::json::parse(text), strict_keys);
}

ModelState init_model(const ModelConfig& cfg, int feature_dim) {
  validate(cfg);
  if (feature_dim < 1) throw std::runtime_error("init_model: feature_dim must be positive");

  ModelState st;
  st.config = cfg;
  st.feature_dim = feature_dim;
  st.rng = Rng(cfg.seed);
  st.anneal = make_anneal_state(cfg.t0, cfg.decay, cfg.t_floor, SelectionMode::sample);

  ParamStore& ps = st.params;
  Rng& rng = st.rng;
  int d_in = feature_dim;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    const int d_out = cfg.hidden[i];
    const std::string prefix = "enc." + std::to_string(i);
    switch (cfg.encoder) {
      case EncoderKind::gcn: {
        GcnLayer l;
        l.weight = ps.add(prefix + ".weight", glorot(rng, d_in, d_out));
        l.bias = ps.add(prefix + ".bias", Matrix(1, d_out));
        l.act = Activation::prelu;
        l.slope = ps.add(prefix + ".slope", Matrix::full(1, d_out, 0.25));
        st.enc_gcn.push_back(l);
        break;
      }
      case EncoderKind::gat: {
        st.enc_gat.push_back(make_gat_layer(ps, rng, prefix, d_in, d_out, cfg.gat_heads,
                                            cfg.gat_concat, Activation::prelu));
        break;
      }
      case EncoderKind::sage: {
        SageLayer l;
        l.w_self = ps.add(prefix + ".w_self", glorot(rng, d_in, d_out));
        l.w_neigh = ps.add(prefix + ".w_neigh", glorot(rng, d_in, d_out));
        l.bias = ps.add(prefix + ".bias", Matrix(1, d_out));
        l.act = Activation::prelu;
        l.slope = ps.add(prefix + ".slope", Matrix::full(1, d_out, 0.25));
        st.enc_sage.push_back(l);
        break;
      }
      case EncoderKind::gin: {
        GinLayer l;
        MlpStack::Layer m0;
        m0.weight = ps.add(prefix + ".mlp0.weight", glorot(rng, d_in, d_out));
        m0.bias = ps.add(prefix + ".mlp0.bias", Matrix(1, d_out));
        m0.act = Activation::elu;
        MlpStack::Layer m1;
        m1.weight = ps.add(prefix + ".mlp1.weight", glorot(rng, d_out, d_out));
        m1.bias = ps.add(prefix + ".mlp1.bias", Matrix(1, d_out));
        m1.act = Activation::prelu;
        m1.slope = ps.add(prefix + ".mlp1.slope", Matrix::full(1, d_out, 0.25));
        l.mlp.layers = {m0, m1};
        st.enc_gin.push_back(l);
        break;
      }
      case EncoderKind::mlp: {
        MlpStack::Layer m;
        m.weight = ps.add(prefix + ".weight", glorot(rng, d_in, d_out));
        m.bias = ps.add(prefix + ".bias", Matrix(1, d_out));
        m.act = Activation::prelu;
        m.slope = ps.add(prefix + ".slope", Matrix::full(1, d_out, 0.25));
        st.enc_mlp.layers.push_back(m);
        break;
      }
    }
    d_in = d_out;
  }

  const int d_emb = embedding_dim(cfg);
  st.node_decoder =
      make_gat_layer(ps, rng, "dec", d_emb, feature_dim, 1, true, Activation::linear);

  const int edge_in = cfg.edge_input == EdgeDecoderInput::dot ? 1 : d_emb;
  MlpStack::Layer e0;
  e0.weight = ps.add("edge.0.weight", glorot(rng, edge_in, cfg.edge_mlp_hidden));
  e0.bias = ps.add("edge.0.bias", Matrix(1, cfg.edge_mlp_hidden));
  e0.act = Activation::elu;
  MlpStack::Layer e1;
  e1.weight = ps.add("edge.1.weight", glorot(rng, cfg.edge_mlp_hidden, 1));
  e1.bias = ps.add("edge.1.bias", Matrix(1, 1));
  st.edge_mlp.layers = {e0, e1};

  const double code_scale = 1.0 / std::sqrt(static_cast<double>(d_emb));
  st.cb1 = ps.add("codebook1", normal_scaled(rng, cfg.codebook1_size, d_emb, code_scale));
  st.cb2 = ps.add("codebook2", normal_scaled(rng, cfg.codebook2_size, d_emb, code_scale));

  return st;
}

GraphContext build_context(const SparseGraph& g) {
  GraphContext ctx;
  ctx.graph = &g;
  ctx.norm_adj = SparseOperand::symmetric(std::move(sym_normalize(g).csr));
  ctx.gat_cache = GatGraphCache::build(g);
  ctx.mean_adj = mean_adjacency(g);
  ctx.sum_adj = sum_adjacency(g);
  return ctx;
}

ForwardOutput model_forward(Tape& tp, const BoundParams& bp, ModelState& state,
                            const GraphContext& ctx, const ForwardOptions& opts) {
  const ModelConfig& cfg = state.config;
  const SparseGraph& g = *ctx.graph;
  if (g.features.cols != state.feature_dim) {
    throw std::runtime_error("model_forward: graph feature dim " +
                             std::to_string(g.features.cols) + " != configured " +
                             std::to_string(state.feature_dim));
  }

  ForwardOutput out;
  out.x = tp.constant(g.features);

  Tensor h = out.x;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    h = tp.dropout(h, cfg.dropout);
    switch (cfg.encoder) {
      case EncoderKind::gcn:
        h = gcn_forward(tp, state.enc_gcn[i], bp, ctx.norm_adj, h);
        break;
      case EncoderKind::gat:
        h = gat_forward(tp, state.enc_gat[i], bp, ctx.gat_cache, h);
        break;
      case EncoderKind::sage:
        h = sage_forward(tp, state.enc_sage[i], bp, ctx.mean_adj, h);
        break;
      case EncoderKind::gin:
        h = gin_forward(tp, state.enc_gin[i], bp, ctx.sum_adj, h);
        break;
      case EncoderKind::mlp:
        h = apply_mlp_layer(tp, state.enc_mlp.layers[i], bp, h);
        break;
    }
    out.per_layer.push_back(h);
  }
  out.h = readout(tp, out.per_layer, cfg.readout);

  Tensor decoder_input = out.h;
  if (cfg.vq_enabled) {
    const Matrix& cb1v = state.params.values[state.cb1];
    const Matrix& cb2v = state.params.values[state.cb2];
    if (opts.fixed_assignment) {
      out.assignment = *opts.fixed_assignment;
      if (opts.st_offset) {
        out.e1 = tp.add(out.h, tp.constant(*opts.st_offset));
      } else {
        out.e1 = tp.straight_through(out.h, gather_rows_matrix(cb1v, out.assignment.level1));
      }
    } else {
      AnnealState st = state.anneal;
      if (!opts.train_mode) st.mode = SelectionMode::argmax;
      QuantizeResult qr = quantize(tp, out.h, cb1v, cb2v, st, state.rng);
      out.e1 = qr.e1;
      out.assignment = std::move(qr.assignment);
    }
    decoder_input = out.e1;
  }

  out.x_hat = gat_forward(tp, state.node_decoder, bp, ctx.gat_cache, decoder_input);
  return out;
}

Tensor node_rec_loss(Tape& tp, Tensor x, Tensor x_hat, double lambda) {
  if (x.rows != x_hat.rows || x.cols != x_hat.cols) {
    throw std::runtime_error("node_rec_loss: shape mismatch");
  }
  Tensor cos = tp.rowwise_dot(tp.l2_normalize_rows(x), tp.l2_normalize_rows(x_hat));
  // Shrink keeps 1 - cos strictly positive despite rounding at cos == 1.
  cos = tp.scale(cos, 1.0 - 1e-15);
  Tensor err = tp.subtract(tp.constant(Matrix::full(cos.rows, 1, 1.0)), cos);
  return tp.reduce_mean(tp.pow(err, lambda));
}

Tensor edge_rec_loss(Tape& tp, const MlpStack& edge_mlp, const BoundParams& bp, Tensor h,
                     const EdgeList& pos_edges, const EdgeList& neg_edges,
                     EdgeDecoderInput input_kind) {
  if (pos_edges.empty() || neg_edges.empty()) {
    throw std::runtime_error("edge_rec_loss: empty edge list");
  }
  const auto clamp = [&tp](Tensor p) {
    Tensor scaled = tp.scale(p, 1.0 - 2e-12);
    return tp.add(scaled, tp.constant(Matrix::full(p.rows, 1, 1e-12)));
  };
  Tensor p_pos = edge_decode(tp, edge_mlp, bp, h, pos_edges, input_kind);
  Tensor p_neg = edge_decode(tp, edge_mlp, bp, h, neg_edges, input_kind);
  Tensor l_pos = tp.reduce_mean(tp.log(clamp(p_pos)));
  Tensor ones = tp.constant(Matrix::full(p_neg.rows, 1, 1.0));
  Tensor l_neg = tp.reduce_mean(tp.log(clamp(tp.subtract(ones, p_neg))));
  return tp.scale(tp.add(l_pos, l_neg), -1.0);
}

Tensor total_loss(Tape& tp, Tensor node_rec, Tensor edge_rec, Tensor vq1, Tensor vq2,
                  double alpha, double beta) {
  Tensor t = tp.add(node_rec, edge_rec);
  t = tp.add(t, tp.scale(vq1, alpha));
  return tp.add(t, tp.scale(vq2, beta));
}

void adam_step(ParamStore& params, const std::vector<Matrix>& grads, double lr,
               double weight_decay, std::int64_t t, double beta1, double beta2, double eps) {
  if (grads.size() != params.values.size()) {
    throw std::runtime_error("adam_step: gradient count mismatch");
  }
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t p = 0; p < params.values.size(); ++p) {
    Matrix& value = params.values[p];
    Matrix& m = params.adam_m[p];
    Matrix& v = params.adam_v[p];
    const Matrix& grad = grads[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double gi = grad.data[i] + weight_decay * value.data[i];
      m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
      v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

TrainResult train(ModelState& state, const SparseGraph& g) {
  const ModelConfig& cfg = state.config;
  if (g.features.cols != state.feature_dim) {
    throw std::runtime_error("train: graph feature dim does not match model");
  }

  TrainResult result;
  result.split = split_edges(g, cfg.val_frac, cfg.test_frac, cfg.seed);
  const SparseGraph train_g = restrict_to_edges(g, result.split.train_pos);
  const GraphContext ctx = build_context(train_g);

  const std::int64_t n_neg =
      std::llround(cfg.neg_ratio * static_cast<double>(result.split.train_pos.size()));

  for (std::int64_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    try {
      const std::uint64_t neg_seed = state.rng.next_u64();
      EdgeList negatives;
      if (n_neg > 0) negatives = sample_negative_edges(g, n_neg, neg_seed);

      Tape tp(&state.rng, /*train_mode=*/true);
      BoundParams bp = bind_params(tp, state.params);
      ForwardOptions opts;
      opts.train_mode = true;
      ForwardOutput out = model_forward(tp, bp, state, ctx, opts);

      Tensor l_node = node_rec_loss(tp, out.x, out.x_hat, cfg.lambda);
      Tensor l_edge = (!result.split.train_pos.empty() && !negatives.empty())
                          ? edge_rec_loss(tp, state.edge_mlp, bp, out.h, result.split.train_pos,
                                          negatives, cfg.edge_input)
                          : tp.constant(Matrix(1, 1));
      Tensor l_vq1, l_vq2;
      if (cfg.vq_enabled) {
        std::tie(l_vq1, l_vq2) = vq_losses(tp, out.h, bp[state.cb1], bp[state.cb2],
                                           out.assignment);
      } else {
        l_vq1 = tp.constant(Matrix(1, 1));
        l_vq2 = tp.constant(Matrix(1, 1));
      }
      Tensor l_total = total_loss(tp, l_node, l_edge, l_vq1, l_vq2, cfg.alpha, cfg.beta);

      tp.backward(l_total);
      std::vector<Matrix> grads;
      grads.reserve(state.params.values.size());
      for (const Tensor& handle : bp.handles) grads.push_back(tp.grad(handle));
      state.adam_t += 1;
      adam_step(state.params, grads, cfg.lr, cfg.weight_decay, state.adam_t);

      EpochRecord rec;
      rec.epoch = epoch;
      rec.node_rec = tp.value(l_node).at(0, 0);
      rec.edge_rec = tp.value(l_edge).at(0, 0);
      rec.vq1 = tp.value(l_vq1).at(0, 0);
      rec.vq2 = tp.value(l_vq2).at(0, 0);
      rec.total = tp.value(l_total).at(0, 0);
      rec.temperature = state.anneal.temperature;
      if (cfg.vq_enabled) {
        rec.util1 = utilization(out.assignment.level1, cfg.codebook1_size);
        rec.util2 = utilization(out.assignment.level2, cfg.codebook2_size);
      }
      result.epochs.push_back(rec);

      state.anneal = anneal_step(state.anneal);
      state.epoch = epoch + 1;
    } catch (const NumericError& e) {
      throw DivergenceError(epoch, e.what());
    }
  }
  return result;
}

Matrix embed(ModelState& state, const SparseGraph& g) {
  const GraphContext ctx = build_context(g);
  Tape tp(nullptr, /*train_mode=*/false);
  BoundParams bp = bind_params(tp, state.params);
  ForwardOptions opts;
  opts.train_mode = false;
  ForwardOutput out = model_forward(tp, bp, state, ctx, opts);
  return tp.value(out.h);
}

namespace {

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

void write_u32(std::ofstream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
void write_f64(std::ofstream& out, double v) { write_bytes(out, &v, 8); }

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v;
  read_bytes(in, &v, 4);
  return v;
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v;
  read_bytes(in, &v, 8);
  return v;
}
double read_f64(std::ifstream& in) {
  double v;
  read_bytes(in, &v, 8);
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  write_bytes(out, s.data(), s.size());
}

std::string read_string(std::ifstream& in) {
  const std::uint64_t n = read_u64(in);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n);
  return s;
}

void write_matrix(std::ofstream& out, const Matrix& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows));
  write_u32(out, static_cast<std::uint32_t>(m.cols));
  write_bytes(out, m.data.data(), m.size() * sizeof(double));
}

Matrix read_matrix(std::ifstream& in) {
  const int rows = static_cast<int>(read_u32(in));
  const int cols = static_cast<int>(read_u32(in));
  Matrix m(rows, cols);
  read_bytes(in, m.data.data(), m.size() * sizeof(double));
  return m;
}

constexpr char kMagic[4] = {'H', 'Q', 'G', 'A'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");

  write_bytes(out, kMagic, 4);
  write_u32(out, kVersion);
  write_string(out, config_to_json_string(state.config));
  write_u32(out, static_cast<std::uint32_t>(state.feature_dim));

  write_u32(out, static_cast<std::uint32_t>(state.params.count()));
  for (int i = 0; i < state.params.count(); ++i) {
    write_string(out, state.params.names[i]);
    write_matrix(out, state.params.values[i]);
    write_matrix(out, state.params.adam_m[i]);
    write_matrix(out, state.params.adam_v[i]);
  }

  write_f64(out, state.anneal.temperature);
  write_f64(out, state.anneal.initial);
  write_f64(out, state.anneal.decay);
  write_f64(out, state.anneal.floor);
  write_u32(out, state.anneal.mode == SelectionMode::sample ? 0 : 1);
  write_u64(out, static_cast<std::uint64_t>(state.epoch));
  write_u64(out, static_cast<std::uint64_t>(state.adam_t));
  write_string(out, state.rng.serialize());

  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");

  char magic[4];
  read_bytes(in, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic bytes");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }

  const ModelConfig cfg = config_from_json_string(read_string(in), /*strict_keys=*/true);
  const int feature_dim = static_cast<int>(read_u32(in));

  ModelState state = init_model(cfg, feature_dim);

  const std::uint32_t count = read_u32(in);
  if (static_cast<int>(count) != state.params.count()) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    if (name != state.params.names[i]) {
      throw std::runtime_error("checkpoint: parameter '" + name + "' out of order, expected '" +
                               state.params.names[i] + "'");
    }
    Matrix value = read_matrix(in);
    Matrix m = read_matrix(in);
    Matrix v = read_matrix(in);
    if (!value.same_shape(state.params.values[i])) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    state.params.values[i] = std::move(value);
    state.params.adam_m[i] = std::move(m);
    state.params.adam_v[i] = std::move(v);
  }

  state.anneal.temperature = read_f64(in);
  state.anneal.initial = read_f64(in);
  state.anneal.decay = read_f64(in);
  state.anneal.floor = read_f64(in);
  state.anneal.mode = read_u32(in) == 0 ? SelectionMode::sample : SelectionMode::argmax;
  state.epoch = static_cast<std::int64_t>(read_u64(in));
  state.adam_t = static_cast<std::int64_t>(read_u64(in));
  state.rng.deserialize(read_string(in));
  return state;
}

}  // namespace hqgae
