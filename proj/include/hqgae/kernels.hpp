#ifndef HQGAE_KERNELS_HPP
#define HQGAE_KERNELS_HPP

#include "hqgae/matrix.hpp"
#include "hqgae/sparse.hpp"

namespace hqgae::kernels {

// OpenMP-parallel kernels. Every output entry is produced by exactly one
// task with a fixed-order inner accumulation, so results are bitwise
// identical to the serial reference at any thread count.

void matmul(const Matrix& a, const Matrix& b, Matrix& out);     // out = a * b
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);  // out = a * b^T
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);  // out = a^T * b

// out = csr * x, row-parallel with serial per-row accumulation.
void spmm(const Csr& csr, const Matrix& x, Matrix& out);

// out[i][j] = cosine(h_i, c_j); rows with zero norm score 0 against everything.
void cosine_scores(const Matrix& h, const Matrix& codes, Matrix& out);

// Serial reference implementations, kept for tests and the kernel benchmark.
namespace ref {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void spmm(const Csr& csr, const Matrix& x, Matrix& out);
void cosine_scores(const Matrix& h, const Matrix& codes, Matrix& out);
}  // namespace ref

}  // namespace hqgae::kernels

#endif
