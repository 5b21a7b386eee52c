// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace haven {

// Dense row-major matrix of doubles, sized for desk-scale models.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throws DimensionError on shape mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
void axpy(Matrix& y, double a, const Matrix& x);  // y += a * x
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

// Rank by Gaussian elimination with full pivoting; pivots below
// rel_tol * max|m| count as zero.
std::size_t numeric_rank(const Matrix& m, double rel_tol = 1e-9);

}  // namespace haven
