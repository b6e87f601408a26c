#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace ipr {

// All numeric state in this library is carried by 64-bit doubles.  Reductions
// run left-to-right in index order so results are reproducible bit-for-bit.
using Vector = std::vector<double>;

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0);

  double& operator()(std::size_t r, std::size_t c) {
    return values[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values[r * cols + c];
  }
};

double dot(const Vector& a, const Vector& b);

double norm(const Vector& v);

// v / ||v||; rejects zero-norm and non-finite input.
Vector l2_normalize(const Vector& v);

// Max-shifted log-sum-exp.
double log_sum_exp(const Vector& v);

// softmax(v / temperature), computed via the shifted log-sum-exp so extreme
// logits saturate instead of overflowing.
Vector softmax(const Vector& v, double temperature = 1.0);

// y = m * x
Vector matvec(const Matrix& m, const Vector& x);

bool all_finite(const Vector& v);

// Central finite differences, the gradient oracle used by the test suite.
Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& x, double h);

}  // namespace ipr
