#pragma once

// Dense row-major double-precision matrix and the differentiable primitives the
// rest of the library is built from. Every forward op that takes part in a
// gradient has a matching *_backward that returns the vector-Jacobian product.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ntda {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const noexcept;
  std::string shape_str() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Rows gathered in the given order.
Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices);

// x + bias broadcast over rows; bias.size() must equal x.cols().
Matrix add_row_bias(const Matrix& x, std::span<const double> bias);
// Column sums; the bias gradient of add_row_bias.
std::vector<double> column_sums(const Matrix& upstream);

Matrix relu_forward(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& upstream);

// (i, j) -> ||f_i - p_j||^2.
Matrix pairwise_sqdist(const Matrix& f, const Matrix& p);

struct SqdistGrad {
  Matrix features;    // N x d
  Matrix prototypes;  // M x d
};

// Pulls dL/dD (N x M) back onto both operands of pairwise_sqdist.
SqdistGrad pairwise_sqdist_backward(const Matrix& f, const Matrix& p, const Matrix& upstream);

}  // namespace ntda
