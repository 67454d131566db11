#include "hqgae/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "hqgae/kernels.hpp"

namespace hqgae {

namespace {

[[noreturn]] void shape_error(OpKind k, const Tensor& a, const Tensor& b) {
  throw std::runtime_error(std::string("shape mismatch in ") + op_name(k) + ": (" +
                           std::to_string(a.rows) + "x" + std::to_string(a.cols) + ") vs (" +
                           std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
}

bool is_integer(double v) { return v == std::floor(v); }

}  // namespace

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::spmm: return "spmm";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::multiply: return "multiply";
    case OpKind::scale: return "scale";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::transpose: return "transpose";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::prelu: return "prelu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::elu: return "elu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::l2_normalize_rows: return "l2_normalize_rows";
    case OpKind::rowwise_dot: return "rowwise_dot";
    case OpKind::reduce_mean: return "reduce_mean";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::dropout: return "dropout";
    case OpKind::pow: return "pow";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::straight_through: return "straight_through";
  }
  return "?";
}

int Tape::push(Node n) {
  check_finite(n.value, n.kind);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::handle(int id) const {
  return Tensor{id, nodes_[id].value.rows, nodes_[id].value.cols};
}

const Tape::Node& Tape::node(Tensor t) const {
  if (t.id < 0 || t.id >= static_cast<int>(nodes_.size())) {
    throw std::runtime_error("tensor handle does not belong to this tape");
  }
  return nodes_[t.id];
}

void Tape::check_finite(const Matrix& m, OpKind k) const {
  for (const double v : m.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op_name(k));
    }
  }
}

const Matrix& Tape::value(Tensor t) const { return node(t).value; }

Tensor Tape::constant(Matrix v) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(v);
  n.requires_grad = false;
  return handle(push(std::move(n)));
}

Tensor Tape::param(Matrix v) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(v);
  n.requires_grad = true;
  return handle(push(std::move(n)));
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  if (a.cols != b.rows) shape_error(OpKind::matmul, a, b);
  Node n;
  n.kind = OpKind::matmul;
  n.a = a.id;
  n.b = b.id;
  kernels::matmul(node(a).value, node(b).value, n.value);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::spmm(SparseOperand m, Tensor x) {
  if (m.fwd->cols != x.rows) {
    throw std::runtime_error("shape mismatch in spmm: sparse cols " +
                             std::to_string(m.fwd->cols) + " vs dense rows " +
                             std::to_string(x.rows));
  }
  Node n;
  n.kind = OpKind::spmm;
  n.a = x.id;
  n.sparse = std::move(m);
  kernels::spmm(*n.sparse.fwd, node(x).value, n.value);
  n.requires_grad = node(x).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::add(Tensor a, Tensor b) {
  if (a.rows != b.rows || a.cols != b.cols) shape_error(OpKind::add, a, b);
  Node n;
  n.kind = OpKind::add;
  n.a = a.id;
  n.b = b.id;
  n.value = node(a).value;
  const Matrix& bv = node(b).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] += bv.data[i];
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::subtract(Tensor a, Tensor b) {
  if (a.rows != b.rows || a.cols != b.cols) shape_error(OpKind::subtract, a, b);
  Node n;
  n.kind = OpKind::subtract;
  n.a = a.id;
  n.b = b.id;
  n.value = node(a).value;
  const Matrix& bv = node(b).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] -= bv.data[i];
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::multiply(Tensor a, Tensor b) {
  if (a.rows != b.rows || a.cols != b.cols) shape_error(OpKind::multiply, a, b);
  Node n;
  n.kind = OpKind::multiply;
  n.a = a.id;
  n.b = b.id;
  n.value = node(a).value;
  const Matrix& bv = node(b).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= bv.data[i];
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::scale(Tensor a, double c) {
  Node n;
  n.kind = OpKind::scale;
  n.a = a.id;
  n.scalar = c;
  n.value = node(a).value;
  for (double& v : n.value.data) v *= c;
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::concat_rows(Tensor a, Tensor b) {
  if (a.cols != b.cols) shape_error(OpKind::concat_rows, a, b);
  Node n;
  n.kind = OpKind::concat_rows;
  n.a = a.id;
  n.b = b.id;
  n.value = Matrix(a.rows + b.rows, a.cols);
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  std::copy(av.data.begin(), av.data.end(), n.value.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), n.value.data.begin() + av.size());
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::concat_cols(Tensor a, Tensor b) {
  if (a.rows != b.rows) shape_error(OpKind::concat_cols, a, b);
  Node n;
  n.kind = OpKind::concat_cols;
  n.a = a.id;
  n.b = b.id;
  n.value = Matrix(a.rows, a.cols + b.cols);
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  for (int i = 0; i < a.rows; ++i) {
    std::copy(av.row(i), av.row(i) + av.cols, n.value.row(i));
    std::copy(bv.row(i), bv.row(i) + bv.cols, n.value.row(i) + av.cols);
  }
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::transpose(Tensor a) {
  Node n;
  n.kind = OpKind::transpose;
  n.a = a.id;
  n.value = Matrix(a.cols, a.rows);
  const Matrix& av = node(a).value;
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) n.value.at(j, i) = av.at(i, j);
  }
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::exp(Tensor a) {
  Node n;
  n.kind = OpKind::exp;
  n.a = a.id;
  n.value = node(a).value;
  for (double& v : n.value.data) v = std::exp(v);
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::log(Tensor a) {
  Node n;
  n.kind = OpKind::log;
  n.a = a.id;
  n.value = node(a).value;
  for (double& v : n.value.data) {
    if (v <= 0.0) throw NumericError("log domain violation: argument <= 0");
    v = std::log(v);
  }
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::sigmoid(Tensor a) {
  Node n;
  n.kind = OpKind::sigmoid;
  n.a = a.id;
  n.value = node(a).value;
  for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::prelu(Tensor x, Tensor slope) {
  if (slope.rows != 1 || slope.cols != x.cols) shape_error(OpKind::prelu, x, slope);
  Node n;
  n.kind = OpKind::prelu;
  n.a = x.id;
  n.b = slope.id;
  n.value = node(x).value;
  const Matrix& s = node(slope).value;
  for (int i = 0; i < n.value.rows; ++i) {
    double* r = n.value.row(i);
    for (int j = 0; j < n.value.cols; ++j) {
      if (r[j] < 0.0) r[j] *= s.at(0, j);
    }
  }
  n.requires_grad = node(x).requires_grad || node(slope).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::leaky_relu(Tensor x) {
  Node n;
  n.kind = OpKind::leaky_relu;
  n.a = x.id;
  n.value = node(x).value;
  for (double& v : n.value.data) {
    if (v < 0.0) v *= 0.2;
  }
  n.requires_grad = node(x).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::elu(Tensor x) {
  Node n;
  n.kind = OpKind::elu;
  n.a = x.id;
  n.value = node(x).value;
  for (double& v : n.value.data) {
    if (v < 0.0) v = std::expm1(v);
  }
  n.requires_grad = node(x).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::softmax_rows(Tensor a, double temperature) {
  if (temperature <= 0.0) throw std::runtime_error("softmax_rows: temperature must be positive");
  Node n;
  n.kind = OpKind::softmax_rows;
  n.a = a.id;
  n.scalar = temperature;
  n.value = node(a).value;
  for (int i = 0; i < n.value.rows; ++i) {
    double* r = n.value.row(i);
    double mx = r[0];
    for (int j = 1; j < n.value.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < n.value.cols; ++j) {
      r[j] = std::exp((r[j] - mx) / temperature);
      sum += r[j];
    }
    for (int j = 0; j < n.value.cols; ++j) r[j] /= sum;
  }
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::l2_normalize_rows(Tensor a) {
  Node n;
  n.kind = OpKind::l2_normalize_rows;
  n.a = a.id;
  n.value = node(a).value;
  n.aux = Matrix(a.rows, 1);
  for (int i = 0; i < n.value.rows; ++i) {
    double* r = n.value.row(i);
    double acc = 0.0;
    for (int j = 0; j < n.value.cols; ++j) acc += r[j] * r[j];
    const double norm = std::sqrt(acc);
    n.aux.at(i, 0) = norm;
    if (norm > 0.0) {
      for (int j = 0; j < n.value.cols; ++j) r[j] /= norm;
    }
  }
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::rowwise_dot(Tensor a, Tensor b) {
  if (a.rows != b.rows || a.cols != b.cols) shape_error(OpKind::rowwise_dot, a, b);
  Node n;
  n.kind = OpKind::rowwise_dot;
  n.a = a.id;
  n.b = b.id;
  n.value = Matrix(a.rows, 1);
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  for (int i = 0; i < a.rows; ++i) {
    double acc = 0.0;
    const double* ar = av.row(i);
    const double* br = bv.row(i);
    for (int j = 0; j < a.cols; ++j) acc += ar[j] * br[j];
    n.value.at(i, 0) = acc;
  }
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::reduce_mean(Tensor a) {
  Node n;
  n.kind = OpKind::reduce_mean;
  n.a = a.id;
  n.value = Matrix(1, 1);
  double acc = 0.0;
  for (const double v : node(a).value.data) acc += v;
  n.value.at(0, 0) = acc / static_cast<double>(node(a).value.size());
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::reduce_sum(Tensor a) {
  Node n;
  n.kind = OpKind::reduce_sum;
  n.a = a.id;
  n.value = Matrix(1, 1);
  double acc = 0.0;
  for (const double v : node(a).value.data) acc += v;
  n.value.at(0, 0) = acc;
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::dropout(Tensor a, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw std::runtime_error("dropout: rate must be in [0, 1)");
  if (!train_mode_ || rate == 0.0) return a;  // identity in eval mode
  if (!rng_) throw std::runtime_error("dropout: tape has no RNG");
  Node n;
  n.kind = OpKind::dropout;
  n.a = a.id;
  n.scalar = rate;
  n.aux = Matrix(a.rows, a.cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : n.aux.data) m = (rng_->uniform() < rate) ? 0.0 : keep_scale;
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= n.aux.data[i];
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::pow(Tensor a, double exponent) {
  Node n;
  n.kind = OpKind::pow;
  n.a = a.id;
  n.scalar = exponent;
  n.value = node(a).value;
  for (double& v : n.value.data) {
    if (v < 0.0 && !is_integer(exponent)) {
      throw NumericError("pow domain violation: negative base, non-integer exponent");
    }
    if (v == 0.0 && exponent < 1.0) {
      throw NumericError("pow domain violation: zero base, exponent < 1");
    }
    v = std::pow(v, exponent);
  }
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::gather_rows(Tensor a, std::vector<int> indices) {
  for (const int idx : indices) {
    if (idx < 0 || idx >= a.rows) {
      throw std::runtime_error("gather_rows: index " + std::to_string(idx) + " out of range [0, " +
                               std::to_string(a.rows) + ")");
    }
  }
  Node n;
  n.kind = OpKind::gather_rows;
  n.a = a.id;
  n.value = Matrix(static_cast<int>(indices.size()), a.cols);
  const Matrix& av = node(a).value;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy(av.row(indices[i]), av.row(indices[i]) + av.cols, n.value.row(static_cast<int>(i)));
  }
  n.indices = std::move(indices);
  n.requires_grad = node(a).requires_grad;
  return handle(push(std::move(n)));
}

Tensor Tape::straight_through(Tensor input, Matrix quantized) {
  if (input.rows != quantized.rows || input.cols != quantized.cols) {
    shape_error(OpKind::straight_through, input,
                Tensor{-1, quantized.rows, quantized.cols});
  }
  Node n;
  n.kind = OpKind::straight_through;
  n.a = input.id;
  n.value = std::move(quantized);
  n.requires_grad = node(input).requires_grad;
  return handle(push(std::move(n)));
}

Matrix& Tape::grad_buffer(int id) {
  if (grads_[id].size() == 0) {
    grads_[id] = Matrix(nodes_[id].value.rows, nodes_[id].value.cols);
  }
  return grads_[id];
}

Matrix Tape::grad(Tensor t) const {
  const Node& n = node(t);
  if (t.id < static_cast<int>(grads_.size()) && grads_[t.id].size() != 0) return grads_[t.id];
  return Matrix(n.value.rows, n.value.cols);
}

void Tape::backward(Tensor loss) {
  const Node& ln = node(loss);
  if (ln.value.rows != 1 || ln.value.cols != 1) {
    throw std::runtime_error("backward: loss must be a 1x1 scalar");
  }
  grads_.assign(nodes_.size(), Matrix());
  grad_buffer(loss.id).at(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    if (grads_[id].size() == 0) continue;     // not reached by the loss
    if (!nodes_[id].requires_grad) continue;  // nothing upstream needs it
    backward_record(id);
  }
}

void Tape::backward_record(int id) {
  const Node& n = nodes_[id];
  const Matrix& g = grads_[id];
  const auto input_needs = [&](int in) { return in >= 0 && nodes_[in].requires_grad; };

  switch (n.kind) {
    case OpKind::leaf:
      return;
    case OpKind::matmul: {
      if (input_needs(n.a)) {
        Matrix da;
        kernels::matmul_nt(g, nodes_[n.b].value, da);
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += da.data[i];
      }
      if (input_needs(n.b)) {
        Matrix db;
        kernels::matmul_tn(nodes_[n.a].value, g, db);
        Matrix& buf = grad_buffer(n.b);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += db.data[i];
      }
      break;
    }
    case OpKind::spmm: {
      if (input_needs(n.a)) {
        Matrix dx;
        kernels::spmm(*n.sparse.bwd, g, dx);
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += dx.data[i];
      }
      break;
    }
    case OpKind::add: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i];
      }
      if (input_needs(n.b)) {
        Matrix& buf = grad_buffer(n.b);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i];
      }
      break;
    }
    case OpKind::subtract: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i];
      }
      if (input_needs(n.b)) {
        Matrix& buf = grad_buffer(n.b);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] -= g.data[i];
      }
      break;
    }
    case OpKind::multiply: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        const Matrix& bv = nodes_[n.b].value;
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i] * bv.data[i];
      }
      if (input_needs(n.b)) {
        Matrix& buf = grad_buffer(n.b);
        const Matrix& av = nodes_[n.a].value;
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i] * av.data[i];
      }
      break;
    }
    case OpKind::scale: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += n.scalar * g.data[i];
      }
      break;
    }
    case OpKind::concat_rows: {
      const std::size_t asz = nodes_[n.a].value.size();
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < asz; ++i) buf.data[i] += g.data[i];
      }
      if (input_needs(n.b)) {
        Matrix& buf = grad_buffer(n.b);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[asz + i];
      }
      break;
    }
    case OpKind::concat_cols: {
      const int acols = nodes_[n.a].value.cols;
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (int i = 0; i < buf.rows; ++i) {
          const double* gr = g.row(i);
          double* br = buf.row(i);
          for (int j = 0; j < acols; ++j) br[j] += gr[j];
        }
      }
      if (input_needs(n.b)) {
        Matrix& buf = grad_buffer(n.b);
        for (int i = 0; i < buf.rows; ++i) {
          const double* gr = g.row(i) + acols;
          double* br = buf.row(i);
          for (int j = 0; j < buf.cols; ++j) br[j] += gr[j];
        }
      }
      break;
    }
    case OpKind::transpose: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (int i = 0; i < g.rows; ++i) {
          for (int j = 0; j < g.cols; ++j) buf.at(j, i) += g.at(i, j);
        }
      }
      break;
    }
    case OpKind::exp: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i] * n.value.data[i];
      }
      break;
    }
    case OpKind::log: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        const Matrix& x = nodes_[n.a].value;
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i] / x.data[i];
      }
      break;
    }
    case OpKind::sigmoid: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) {
          const double y = n.value.data[i];
          buf.data[i] += g.data[i] * y * (1.0 - y);
        }
      }
      break;
    }
    case OpKind::prelu: {
      const Matrix& x = nodes_[n.a].value;
      const Matrix& s = nodes_[n.b].value;
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (int i = 0; i < x.rows; ++i) {
          const double* xr = x.row(i);
          const double* gr = g.row(i);
          double* br = buf.row(i);
          for (int j = 0; j < x.cols; ++j) {
            br[j] += (xr[j] >= 0.0) ? gr[j] : s.at(0, j) * gr[j];
          }
        }
      }
      if (input_needs(n.b)) {
        Matrix& buf = grad_buffer(n.b);
        for (int i = 0; i < x.rows; ++i) {
          const double* xr = x.row(i);
          const double* gr = g.row(i);
          for (int j = 0; j < x.cols; ++j) {
            if (xr[j] < 0.0) buf.at(0, j) += xr[j] * gr[j];
          }
        }
      }
      break;
    }
    case OpKind::leaky_relu: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        const Matrix& x = nodes_[n.a].value;
        for (std::size_t i = 0; i < buf.size(); ++i) {
          buf.data[i] += (x.data[i] >= 0.0) ? g.data[i] : 0.2 * g.data[i];
        }
      }
      break;
    }
    case OpKind::elu: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        const Matrix& x = nodes_[n.a].value;
        for (std::size_t i = 0; i < buf.size(); ++i) {
          buf.data[i] += (x.data[i] >= 0.0) ? g.data[i] : g.data[i] * (n.value.data[i] + 1.0);
        }
      }
      break;
    }
    case OpKind::softmax_rows: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (int i = 0; i < g.rows; ++i) {
          const double* yr = n.value.row(i);
          const double* gr = g.row(i);
          double dot = 0.0;
          for (int j = 0; j < g.cols; ++j) dot += gr[j] * yr[j];
          double* br = buf.row(i);
          for (int j = 0; j < g.cols; ++j) {
            br[j] += yr[j] * (gr[j] - dot) / n.scalar;
          }
        }
      }
      break;
    }
    case OpKind::l2_normalize_rows: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (int i = 0; i < g.rows; ++i) {
          const double norm = n.aux.at(i, 0);
          if (norm == 0.0) continue;
          const double* yr = n.value.row(i);
          const double* gr = g.row(i);
          double dot = 0.0;
          for (int j = 0; j < g.cols; ++j) dot += gr[j] * yr[j];
          double* br = buf.row(i);
          for (int j = 0; j < g.cols; ++j) br[j] += (gr[j] - yr[j] * dot) / norm;
        }
      }
      break;
    }
    case OpKind::rowwise_dot: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        const Matrix& bv = nodes_[n.b].value;
        for (int i = 0; i < buf.rows; ++i) {
          const double gi = g.at(i, 0);
          const double* br = bv.row(i);
          double* out = buf.row(i);
          for (int j = 0; j < buf.cols; ++j) out[j] += gi * br[j];
        }
      }
      if (input_needs(n.b)) {
        Matrix& buf = grad_buffer(n.b);
        const Matrix& av = nodes_[n.a].value;
        for (int i = 0; i < buf.rows; ++i) {
          const double gi = g.at(i, 0);
          const double* ar = av.row(i);
          double* out = buf.row(i);
          for (int j = 0; j < buf.cols; ++j) out[j] += gi * ar[j];
        }
      }
      break;
    }
    case OpKind::reduce_mean: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        const double v = g.at(0, 0) / static_cast<double>(buf.size());
        for (double& b : buf.data) b += v;
      }
      break;
    }
    case OpKind::reduce_sum: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        const double v = g.at(0, 0);
        for (double& b : buf.data) b += v;
      }
      break;
    }
    case OpKind::dropout: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i] * n.aux.data[i];
      }
      break;
    }
    case OpKind::pow: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        const Matrix& x = nodes_[n.a].value;
        for (std::size_t i = 0; i < buf.size(); ++i) {
          buf.data[i] += g.data[i] * n.scalar * std::pow(x.data[i], n.scalar - 1.0);
        }
      }
      break;
    }
    case OpKind::gather_rows: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          const double* gr = g.row(static_cast<int>(i));
          double* br = buf.row(n.indices[i]);
          for (int j = 0; j < buf.cols; ++j) br[j] += gr[j];
        }
      }
      break;
    }
    case OpKind::straight_through: {
      if (input_needs(n.a)) {
        Matrix& buf = grad_buffer(n.a);
        for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] += g.data[i];
      }
      break;
    }
  }

  for (const int in : {n.a, n.b}) {
    if (in < 0 || grads_[in].size() == 0) continue;
    for (const double v : grads_[in].data) {
      if (std::isnan(v)) {
        throw NumericError("NaN gradient at op record #" + std::to_string(id) + " (" +
                                 op_name(n.kind) + ")");
      }
    }
  }
}

double finite_diff_check(const GradFn& f, std::vector<Matrix> params, double h_step) {
  std::vector<Matrix> analytic;
  f(params, &analytic);
  if (analytic.size() != params.size()) {
    throw std::runtime_error("finite_diff_check: gradient count mismatch");
  }
  double max_err = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p].data[i];
      params[p].data[i] = saved + h_step;
      const double fp = f(params, nullptr);
      params[p].data[i] = saved - h_step;
      const double fm = f(params, nullptr);
      params[p].data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h_step);
      const double err = std::abs(analytic[p].data[i] - numeric) /
                         std::max(1.0, std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace hqgae
