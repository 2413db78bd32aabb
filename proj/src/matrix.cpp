#include "ntda/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "ntda/error.hpp"

namespace ntda {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: buffer of " + std::to_string(data_.size()) + " values for shape " + shape_str());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) {
  a += b;
  return a;
}

Matrix operator*(double s, Matrix a) {
  a *= s;
  return a;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape_str() + " x " + b.shape_str());
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: row counts differ " + a.shape_str() + " vs " + b.shape_str());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: column counts differ " + a.shape_str() + " vs " + b.shape_str());
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), a.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= a.rows()) throw ShapeError("select_rows: row index out of range");
    auto src = a.row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix add_row_bias(const Matrix& x, std::span<const double> bias) {
  if (bias.size() != x.cols()) {
    throw ShapeError("add_row_bias: bias of length " + std::to_string(bias.size()) + " for " + x.shape_str());
  }
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
  return out;
}

std::vector<double> column_sums(const Matrix& upstream) {
  std::vector<double> sums(upstream.cols(), 0.0);
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    auto r = upstream.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) sums[j] += r[j];
  }
  return sums;
}

Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.flat()) v = std::max(0.0, v);
  return out;
}

Matrix relu_backward(const Matrix& x, const Matrix& upstream) {
  require_same_shape(x, upstream, "relu_backward");
  Matrix out(x.rows(), x.cols());
  auto xs = x.flat();
  auto us = upstream.flat();
  auto os = out.flat();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = xs[i] > 0.0 ? us[i] : 0.0;
  return out;
}

Matrix pairwise_sqdist(const Matrix& f, const Matrix& p) {
  if (f.cols() != p.cols()) {
    throw ShapeError("pairwise_sqdist: embedding widths differ " + f.shape_str() + " vs " + p.shape_str());
  }
  Matrix out(f.rows(), p.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    auto fi = f.row(i);
    for (std::size_t j = 0; j < p.rows(); ++j) {
      auto pj = p.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < fi.size(); ++k) {
        const double diff = fi[k] - pj[k];
        acc += diff * diff;
      }
      out(i, j) = acc;
    }
  }
  return out;
}

SqdistGrad pairwise_sqdist_backward(const Matrix& f, const Matrix& p, const Matrix& upstream) {
  if (f.cols() != p.cols() || upstream.rows() != f.rows() || upstream.cols() != p.rows()) {
    throw ShapeError("pairwise_sqdist_backward: inconsistent shapes f" + f.shape_str() + " p" + p.shape_str() +
                     " upstream" + upstream.shape_str());
  }
  SqdistGrad g{Matrix(f.rows(), f.cols()), Matrix(p.rows(), p.cols())};
  for (std::size_t i = 0; i < f.rows(); ++i) {
    auto fi = f.row(i);
    auto gfi = g.features.row(i);
    for (std::size_t j = 0; j < p.rows(); ++j) {
      const double gij = upstream(i, j);
      if (gij == 0.0) continue;
      auto pj = p.row(j);
      auto gpj = g.prototypes.row(j);
      for (std::size_t k = 0; k < fi.size(); ++k) {
        const double diff = 2.0 * gij * (fi[k] - pj[k]);
        gfi[k] += diff;
        gpj[k] -= diff;
      }
    }
  }
  return g;
}

}  // namespace ntda
