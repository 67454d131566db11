#include "hqgae/kernels.hpp"

#include <cassert>
#include <cmath>

namespace hqgae::kernels {

namespace {

// Row-major ikj product for one output row: out_row += a[i][k] * b_row(k).
inline void row_product(const Matrix& a, const Matrix& b, Matrix& out, int i) {
  double* o = out.row(i);
  for (int j = 0; j < out.cols; ++j) o[j] = 0.0;
  const double* ar = a.row(i);
  for (int k = 0; k < a.cols; ++k) {
    const double av = ar[k];
    if (av == 0.0) continue;
    const double* br = b.row(k);
    for (int j = 0; j < b.cols; ++j) o[j] += av * br[j];
  }
}

inline void row_product_nt(const Matrix& a, const Matrix& b, Matrix& out, int i) {
  double* o = out.row(i);
  const double* ar = a.row(i);
  for (int j = 0; j < b.rows; ++j) {
    const double* br = b.row(j);
    double acc = 0.0;
    for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
    o[j] = acc;
  }
}

// out row k of a^T * b: sum_i a[i][k] * b_row(i).
inline void row_product_tn(const Matrix& a, const Matrix& b, Matrix& out, int k) {
  double* o = out.row(k);
  for (int j = 0; j < out.cols; ++j) o[j] = 0.0;
  for (int i = 0; i < a.rows; ++i) {
    const double av = a.at(i, k);
    if (av == 0.0) continue;
    const double* br = b.row(i);
    for (int j = 0; j < b.cols; ++j) o[j] += av * br[j];
  }
}

inline void spmm_row(const Csr& m, const Matrix& x, Matrix& out, int i) {
  double* o = out.row(i);
  for (int j = 0; j < out.cols; ++j) o[j] = 0.0;
  for (std::int64_t e = m.offsets[i]; e < m.offsets[i + 1]; ++e) {
    const double w = m.weights[e];
    const double* xr = x.row(m.targets[e]);
    for (int j = 0; j < x.cols; ++j) o[j] += w * xr[j];
  }
}

inline double row_norm(const Matrix& m, int i) {
  const double* r = m.row(i);
  double acc = 0.0;
  for (int j = 0; j < m.cols; ++j) acc += r[j] * r[j];
  return std::sqrt(acc);
}

inline void cosine_row(const Matrix& h, const Matrix& codes, const std::vector<double>& code_norms,
                       Matrix& out, int i) {
  double* o = out.row(i);
  const double hn = row_norm(h, i);
  if (hn == 0.0) {
    for (int j = 0; j < codes.rows; ++j) o[j] = 0.0;
    return;
  }
  const double* hr = h.row(i);
  for (int j = 0; j < codes.rows; ++j) {
    if (code_norms[j] == 0.0) {
      o[j] = 0.0;
      continue;
    }
    const double* cr = codes.row(j);
    double dot = 0.0;
    for (int k = 0; k < h.cols; ++k) dot += hr[k] * cr[k];
    o[j] = dot / (hn * code_norms[j]);
  }
}

std::vector<double> all_row_norms(const Matrix& m) {
  std::vector<double> norms(m.rows);
  for (int i = 0; i < m.rows; ++i) norms[i] = row_norm(m, i);
  return norms;
}

}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols == b.rows);
  out = Matrix(a.rows, b.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) row_product(a, b, out, i);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols == b.cols);
  out = Matrix(a.rows, b.rows);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) row_product_nt(a, b, out, i);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.rows == b.rows);
  out = Matrix(a.cols, b.cols);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < a.cols; ++k) row_product_tn(a, b, out, k);
}

void spmm(const Csr& m, const Matrix& x, Matrix& out) {
  assert(m.cols == x.rows);
  out = Matrix(m.rows, x.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m.rows; ++i) spmm_row(m, x, out, i);
}

void cosine_scores(const Matrix& h, const Matrix& codes, Matrix& out) {
  assert(h.cols == codes.cols);
  out = Matrix(h.rows, codes.rows);
  const std::vector<double> code_norms = all_row_norms(codes);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < h.rows; ++i) cosine_row(h, codes, code_norms, out, i);
}

namespace ref {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols == b.rows);
  out = Matrix(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) row_product(a, b, out, i);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols == b.cols);
  out = Matrix(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) row_product_nt(a, b, out, i);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.rows == b.rows);
  out = Matrix(a.cols, b.cols);
  for (int k = 0; k < a.cols; ++k) row_product_tn(a, b, out, k);
}

void spmm(const Csr& m, const Matrix& x, Matrix& out) {
  assert(m.cols == x.rows);
  out = Matrix(m.rows, x.cols);
  for (int i = 0; i < m.rows; ++i) spmm_row(m, x, out, i);
}

void cosine_scores(const Matrix& h, const Matrix& codes, Matrix& out) {
  assert(h.cols == codes.cols);
  out = Matrix(h.rows, codes.rows);
  const std::vector<double> code_norms = all_row_norms(codes);
  for (int i = 0; i < h.rows; ++i) cosine_row(h, codes, code_norms, out, i);
}

}  // namespace ref

}  // namespace hqgae::kernels
