#include "decoysl/matrix.hpp"

#include <cmath>

#include "decoysl/errors.hpp"

namespace decoysl {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v)
    : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != r * c) throw ShapeMismatch("matrix value count does not match shape");
}

Matrix Matrix::row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Matrix(1, n, std::move(v));
}

bool Matrix::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

void Matrix::fill(double v) {
  for (double& x : values) x = v;
}

}  // namespace decoysl
