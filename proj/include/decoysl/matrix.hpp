#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace decoysl {

// Dense row-major matrix of doubles. Vectors are 1×n.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);

  static Matrix row(std::vector<double> v);
  static Matrix row(std::initializer_list<double> v) { return row(std::vector<double>(v)); }

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double* row_ptr(std::size_t r) { return values.data() + r * cols; }
  const double* row_ptr(std::size_t r) const { return values.data() + r * cols; }

  std::size_t size() const { return values.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  void fill(double v);

  bool operator==(const Matrix& o) const = default;
};

}  // namespace decoysl
