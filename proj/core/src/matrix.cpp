// SPDX-License-Identifier: Apache-2.0

#include "haven/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "haven/error.hpp"

namespace haven {

Matrix Matrix::random_normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data_) v = dist(rng);
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  }
  return out;
}

void axpy(Matrix& y, double a, const Matrix& x) {
  if (y.rows() != x.rows() || y.cols() != x.cols()) throw DimensionError("axpy: shape mismatch");
  auto yd = y.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += a * xd[i];
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

std::size_t numeric_rank(const Matrix& m_in, double rel_tol) {
  Matrix m = m_in;
  double scale = 0.0;
  for (double v : m.data()) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0;
  const double tol = rel_tol * scale;

  std::size_t rank = 0;
  const std::size_t rows = m.rows(), cols = m.cols();
  for (std::size_t step = 0; step < std::min(rows, cols); ++step) {
    std::size_t pr = step, pc = step;
    double best = 0.0;
    for (std::size_t i = step; i < rows; ++i) {
      for (std::size_t j = step; j < cols; ++j) {
        if (std::abs(m(i, j)) > best) {
          best = std::abs(m(i, j));
          pr = i;
          pc = j;
        }
      }
    }
    if (best <= tol) break;
    for (std::size_t j = 0; j < cols; ++j) std::swap(m(step, j), m(pr, j));
    for (std::size_t i = 0; i < rows; ++i) std::swap(m(i, step), m(i, pc));
    for (std::size_t i = step + 1; i < rows; ++i) {
      const double f = m(i, step) / m(step, step);
      for (std::size_t j = step; j < cols; ++j) m(i, j) -= f * m(step, j);
    }
    ++rank;
  }
  return rank;
}

}  // namespace haven
