#include "ipr/numerics.hpp"

#include <cmath>
#include <string>

#include "ipr/errors.hpp"

namespace ipr {

Matrix::Matrix(std::size_t r, std::size_t c, double fill) : rows(r), cols(c) {
  if (r == 0 || c == 0) {
    throw InputError("Matrix: dimensions must be positive, got " +
                     std::to_string(r) + "x" + std::to_string(c));
  }
  values.assign(r * c, fill);
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw InputError("dot: length mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

double norm(const Vector& v) {
  return std::sqrt(dot(v, v));
}

Vector l2_normalize(const Vector& v) {
  if (!all_finite(v)) {
    throw NumericalError("l2_normalize: non-finite entry in input");
  }
  const double n = norm(v);
  if (n == 0.0) {
    throw DegenerateInputError("l2_normalize: zero-norm input");
  }
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = v[i] / n;
  }
  return out;
}

double log_sum_exp(const Vector& v) {
  if (v.empty()) {
    throw InputError("log_sum_exp: empty input");
  }
  double m = v[0];
  for (double x : v) {
    if (x > m) m = x;
  }
  double acc = 0.0;
  for (double x : v) {
    acc += std::exp(x - m);
  }
  return m + std::log(acc);
}

Vector softmax(const Vector& v, double temperature) {
  if (v.empty()) {
    throw InputError("softmax: empty input");
  }
  if (!(temperature > 0.0)) {
    throw ConfigError("softmax: temperature must be positive, got " +
                      std::to_string(temperature));
  }
  Vector scaled(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    scaled[i] = v[i] / temperature;
  }
  const double lse = log_sum_exp(scaled);
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(scaled[i] - lse);
  }
  return out;
}

Vector matvec(const Matrix& m, const Vector& x) {
  if (m.cols != x.size()) {
    throw InputError("matvec: matrix is " + std::to_string(m.rows) + "x" +
                     std::to_string(m.cols) + " but vector has length " +
                     std::to_string(x.size()));
  }
  Vector y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    const double* row = m.values.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) {
      acc += row[c] * x[c];
    }
    y[r] = acc;
  }
  return y;
}

bool all_finite(const Vector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& x, double h) {
  if (!(h > 0.0)) {
    throw ConfigError("finite_diff_gradient: step size must be positive");
  }
  Vector grad(x.size());
  Vector probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double fp = f(probe);
    probe[i] = saved - h;
    const double fm = f(probe);
    probe[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError(
          "finite_diff_gradient: non-finite objective at coordinate " +
          std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace ipr
