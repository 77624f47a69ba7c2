#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "fairbide/errors.hpp"

namespace fairbide {

// Dense row-major matrix of doubles. All sizes here are small enough
// (n1 <= ~13k, n2 <= ~300) that dense storage is the simple, correct choice.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(const std::vector<double>& v);
  static Matrix col_vector(const std::vector<double>& v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const;

  std::vector<double> to_vector() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out = a*b (+ out when accumulate). The _tn/_nt variants compute
// transpose(a)*b and a*transpose(b) without materializing the transpose.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);

double sum(const Matrix& a);
double mean(const Matrix& a);
double frobenius_sq(const Matrix& a);
double dot(const Matrix& a, const Matrix& b);

Matrix col_mean(const Matrix& a);  // 1 x cols
Matrix col_sum(const Matrix& a);   // 1 x cols

// Column standardization: zero mean, unit variance (population variance).
// Throws NumericError when a column is constant unless eps > 0, in which
// case variance is floored at eps.
Matrix standardize_columns(const Matrix& a, double eps = 0.0);

// Solves a*x = b for small square a (Gaussian elimination, partial pivoting).
Matrix solve_linear(Matrix a, Matrix b);

// Sparse row-compressed view of a constant matrix, for graph propagation
// products where the biadjacency is sparse.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  explicit SparseMatrix(const Matrix& dense, double tol = 0.0);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  // out = this * x (+ out when accumulate)
  void multiply(const Matrix& x, Matrix& out, bool accumulate = false) const;
  SparseMatrix transposed() const;
  Matrix to_dense() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_start_;  // rows+1
  std::vector<std::size_t> col_index_;
  std::vector<double> values_;
};

}  // namespace fairbide
