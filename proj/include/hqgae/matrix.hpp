#ifndef HQGAE_MATRIX_HPP
#define HQGAE_MATRIX_HPP

#include <cassert>
#include <cstddef>
#include <vector>

namespace hqgae {

// Dense row-major matrix of doubles. All numeric state in the project is
// double precision.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    assert(data.size() == static_cast<std::size_t>(r) * c);
  }

  static Matrix zeros(int r, int c) { return Matrix(r, c); }

  static Matrix full(int r, int c, double v) {
    Matrix m(r, c);
    for (auto& x : m.data) x = v;
    return m;
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace hqgae

#endif
