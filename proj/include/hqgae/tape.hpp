#ifndef HQGAE_TAPE_HPP
#define HQGAE_TAPE_HPP

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hqgae/matrix.hpp"
#include "hqgae/rng.hpp"
#include "hqgae/sparse.hpp"

namespace hqgae {

// Raised when a forward value, gradient, or op domain goes non-finite.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Tape;

// Handle to a node on a tape.
struct Tensor {
  int id = -1;
  int rows = 0;
  int cols = 0;
};

enum class OpKind {
  leaf,
  matmul,
  spmm,
  add,
  subtract,
  multiply,
  scale,
  concat_rows,
  concat_cols,
  transpose,
  exp,
  log,
  sigmoid,
  prelu,
  leaky_relu,
  elu,
  softmax_rows,
  l2_normalize_rows,
  rowwise_dot,
  reduce_mean,
  reduce_sum,
  dropout,
  pow,
  gather_rows,
  straight_through,
};

const char* op_name(OpKind k);

// Eagerly-evaluated operation tape with reverse-mode gradients. Single-owner,
// single-threaded; build a fresh tape per forward/backward pass. Forward
// values are checked for finiteness as they are produced.
class Tape {
 public:
  explicit Tape(Rng* rng = nullptr, bool train_mode = false)
      : rng_(rng), train_mode_(train_mode) {}

  bool train_mode() const { return train_mode_; }

  Tensor constant(Matrix v);  // no gradient tracked
  Tensor param(Matrix v);     // gradient tracked

  Tensor matmul(Tensor a, Tensor b);
  Tensor spmm(SparseOperand m, Tensor x);
  Tensor add(Tensor a, Tensor b);
  Tensor subtract(Tensor a, Tensor b);
  Tensor multiply(Tensor a, Tensor b);  // elementwise
  Tensor scale(Tensor a, double c);
  Tensor concat_rows(Tensor a, Tensor b);
  Tensor concat_cols(Tensor a, Tensor b);
  Tensor transpose(Tensor a);
  Tensor exp(Tensor a);
  Tensor log(Tensor a);
  Tensor sigmoid(Tensor a);
  Tensor prelu(Tensor x, Tensor slope);  // slope is 1 x cols, learned
  Tensor leaky_relu(Tensor x);           // fixed slope 0.2
  Tensor elu(Tensor x);
  Tensor softmax_rows(Tensor a, double temperature);
  Tensor l2_normalize_rows(Tensor a);
  Tensor rowwise_dot(Tensor a, Tensor b);  // N x 1
  Tensor reduce_mean(Tensor a);            // 1 x 1
  Tensor reduce_sum(Tensor a);             // 1 x 1
  Tensor dropout(Tensor a, double rate);   // identity when not in train mode
  Tensor pow(Tensor a, double exponent);
  Tensor gather_rows(Tensor a, std::vector<int> indices);

  // Forward value is exactly `quantized`; backward passes the incoming
  // gradient to `input` unchanged and nothing to `quantized`.
  Tensor straight_through(Tensor input, Matrix quantized);

  const Matrix& value(Tensor t) const;

  // Reverse pass from a 1x1 loss. Populates gradients for every node that
  // requires one; unreachable parameters read back as zeros.
  void backward(Tensor loss);

  // Valid after backward(); zeros for parameters the loss does not reach.
  Matrix grad(Tensor t) const;

  std::size_t num_records() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    int a = -1, b = -1;
    Matrix value;
    bool requires_grad = false;
    double scalar = 0.0;        // scale factor / temperature / exponent / rate
    std::vector<int> indices;   // gather_rows
    SparseOperand sparse;       // spmm
    Matrix aux;                 // dropout mask, row norms, ...
  };

  int push(Node n);
  Tensor handle(int id) const;
  const Node& node(Tensor t) const;
  void check_finite(const Matrix& m, OpKind k) const;
  Matrix& grad_buffer(int id);
  void backward_record(int id);

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  Rng* rng_ = nullptr;
  bool train_mode_ = false;
};

// Scalar function of a parameter list. When `grads` is non-null the function
// must also produce the analytic gradient for every parameter, in order.
using GradFn = std::function<double(const std::vector<Matrix>&, std::vector<Matrix>*)>;

// Central-difference gradient check: (f(x+h) - f(x-h)) / 2h per coordinate,
// returning max over coordinates of |analytic - numeric| / max(1, |numeric|).
// f must be deterministic (dropout off or RNG re-seeded per call).
double finite_diff_check(const GradFn& f, std::vector<Matrix> params, double h_step = 1e-5);

}  // namespace hqgae

#endif
