#include "fairbide/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace fairbide {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged initializer");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::row_vector(const std::vector<double>& v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

Matrix Matrix::col_vector(const std::vector<double>& v) {
  Matrix m(v.size(), 1);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape_str(a) + " * " + shape_str(b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
  if (!accumulate) out.fill(0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict__ arow = a.row(i);
    double* __restrict__ crow = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* __restrict__ brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.rows() != b.rows())
    throw DimensionError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
  if (!accumulate) out.fill(0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* __restrict__ arow = a.row(p);
    const double* __restrict__ brow = b.row(p);
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* __restrict__ crow = out.row(i);
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict__ arow = a.row(i);
    double* __restrict__ crow = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* __restrict__ brow = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out;
  gemm_nn(a, b, out);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out;
  gemm_tn(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out;
  gemm_nt(a, b, out);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("add: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out = a;
  double* __restrict__ o = out.data();
  const double* __restrict__ p = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += p[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("sub: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out = a;
  double* __restrict__ o = out.data();
  const double* __restrict__ p = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] -= p[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("hadamard: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out = a;
  double* __restrict__ o = out.data();
  const double* __restrict__ p = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] *= p[i];
  return out;
}

Matrix scale(const Matrix& a, double c) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
  return out;
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i];
  return s;
}

double mean(const Matrix& a) {
  if (a.size() == 0) throw DimensionError("mean of empty matrix");
  return sum(a) / static_cast<double>(a.size());
}

double frobenius_sq(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  return s;
}

double dot(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

Matrix col_sum(const Matrix& a) {
  Matrix out(1, a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* row = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out.data()[j] += row[j];
  }
  return out;
}

Matrix col_mean(const Matrix& a) {
  if (a.rows() == 0) throw DimensionError("col_mean of empty matrix");
  return scale(col_sum(a), 1.0 / static_cast<double>(a.rows()));
}

Matrix standardize_columns(const Matrix& a, double eps) {
  const std::size_t n = a.rows(), d = a.cols();
  if (n == 0) throw DimensionError("standardize_columns: empty matrix");
  Matrix out(n, d);
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += a(i, j);
    m /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = a(i, j) - m;
      var += c * c;
    }
    var /= static_cast<double>(n);
    if (var <= 0.0 && eps <= 0.0)
      throw NumericError("standardize_columns: constant column " + std::to_string(j));
    const double inv = 1.0 / std::sqrt(std::max(var, eps));
    for (std::size_t i = 0; i < n; ++i) out(i, j) = (a(i, j) - m) * inv;
  }
  return out;
}

Matrix solve_linear(Matrix a, Matrix b) {
  if (a.rows() != a.cols()) throw DimensionError("solve_linear: matrix not square");
  if (a.rows() != b.rows()) throw DimensionError("solve_linear: rhs row mismatch");
  const std::size_t n = a.rows(), m = b.cols();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(pivot, col))) pivot = r;
    if (std::fabs(a(pivot, col)) < 1e-300)
      throw NumericError("solve_linear: singular matrix");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
      for (std::size_t j = 0; j < m; ++j) std::swap(b(col, j), b(pivot, j));
    }
    const double inv = 1.0 / a(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) * inv;
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
      for (std::size_t j = 0; j < m; ++j) b(r, j) -= f * b(col, j);
    }
  }
  Matrix x(n, m);
  for (std::size_t col = m; col-- > 0;) {
    for (std::size_t r = n; r-- > 0;) {
      double acc = b(r, col);
      for (std::size_t j = r + 1; j < n; ++j) acc -= a(r, j) * x(j, col);
      x(r, col) = acc / a(r, r);
    }
  }
  return x;
}

SparseMatrix::SparseMatrix(const Matrix& dense, double tol) {
  rows_ = dense.rows();
  cols_ = dense.cols();
  row_start_.assign(rows_ + 1, 0);
  for (std::size_t i = 0; i < rows_; ++i) {
    const double* row = dense.row(i);
    for (std::size_t j = 0; j < cols_; ++j) {
      if (std::fabs(row[j]) > tol) {
        col_index_.push_back(j);
        values_.push_back(row[j]);
      }
    }
    row_start_[i + 1] = values_.size();
  }
}

void SparseMatrix::multiply(const Matrix& x, Matrix& out, bool accumulate) const {
  if (x.rows() != cols_)
    throw DimensionError("SparseMatrix::multiply: inner dimension mismatch");
  const std::size_t n = x.cols();
  if (out.rows() != rows_ || out.cols() != n) out = Matrix(rows_, n);
  if (!accumulate) out.fill(0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    double* __restrict__ orow = out.row(i);
    for (std::size_t p = row_start_[i]; p < row_start_[i + 1]; ++p) {
      const double v = values_[p];
      const double* __restrict__ xrow = x.row(col_index_[p]);
      for (std::size_t j = 0; j < n; ++j) orow[j] += v * xrow[j];
    }
  }
}

SparseMatrix SparseMatrix::transposed() const {
  SparseMatrix t;
  t.rows_ = cols_;
  t.cols_ = rows_;
  t.row_start_.assign(cols_ + 1, 0);
  for (std::size_t c : col_index_) t.row_start_[c + 1]++;
  for (std::size_t i = 0; i < cols_; ++i) t.row_start_[i + 1] += t.row_start_[i];
  t.col_index_.resize(values_.size());
  t.values_.resize(values_.size());
  std::vector<std::size_t> fill = t.row_start_;
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t p = row_start_[i]; p < row_start_[i + 1]; ++p) {
      const std::size_t pos = fill[col_index_[p]]++;
      t.col_index_[pos] = i;
      t.values_[pos] = values_[p];
    }
  }
  return t;
}

Matrix SparseMatrix::to_dense() const {
  Matrix d(rows_, cols_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t p = row_start_[i]; p < row_start_[i + 1]; ++p)
      d(i, col_index_[p]) = values_[p];
  return d;
}

}  // namespace fairbide
