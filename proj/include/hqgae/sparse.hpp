#ifndef HQGAE_SPARSE_HPP
#define HQGAE_SPARSE_HPP

#include <cstdint>
#include <memory>
#include <vector>

namespace hqgae {

// Weighted sparse matrix in CSR form.
struct Csr {
  int rows = 0;
  int cols = 0;
  std::vector<std::int64_t> offsets;  // rows+1
  std::vector<std::int32_t> targets;  // column index per entry
  std::vector<double> weights;        // value per entry

  std::int64_t nnz() const { return static_cast<std::int64_t>(targets.size()); }
};

Csr transpose_csr(const Csr& a);

// A constant sparse factor used inside the tape: forward multiplies by `fwd`,
// backward by `bwd` (the transpose). Symmetric matrices share one object.
struct SparseOperand {
  std::shared_ptr<const Csr> fwd;
  std::shared_ptr<const Csr> bwd;

  static SparseOperand symmetric(Csr m) {
    auto p = std::make_shared<const Csr>(std::move(m));
    return SparseOperand{p, p};
  }
  static SparseOperand general(Csr m) {
    auto t = std::make_shared<const Csr>(transpose_csr(m));
    auto p = std::make_shared<const Csr>(std::move(m));
    return SparseOperand{p, t};
  }
};

}  // namespace hqgae

#endif
