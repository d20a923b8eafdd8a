#include "pnp/sparse.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pnp {

SparseMatrix::SparseMatrix(int n_rows, int n_cols) : n_rows_(n_rows), n_cols_(n_cols) {
  if (n_rows < 0 || n_cols < 0) throw std::invalid_argument("SparseMatrix: negative dimension");
  row_ptr_.assign(static_cast<size_t>(n_rows) + 1, 0);
}

SparseMatrix SparseMatrix::from_triplets(int n_rows, int n_cols, std::span<const Triplet> entries) {
  SparseMatrix m(n_rows, n_cols);
  for (const Triplet& t : entries) {
    if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols)
      throw std::out_of_range("from_triplets: index (" + std::to_string(t.row) + "," +
                              std::to_string(t.col) + ") out of range");
  }

  // Counting sort by row keeps the original insertion order within each row,
  // so the duplicate summation order is deterministic.
  std::vector<int> count(static_cast<size_t>(n_rows) + 1, 0);
  for (const Triplet& t : entries) ++count[static_cast<size_t>(t.row) + 1];
  std::partial_sum(count.begin(), count.end(), count.begin());
  std::vector<int> order(entries.size());
  {
    std::vector<int> next(count.begin(), count.end() - 1);
    for (size_t k = 0; k < entries.size(); ++k) order[next[entries[k].row]++] = static_cast<int>(k);
  }

  std::vector<int> cols_in_row;
  std::vector<double> vals_in_row;
  for (int i = 0; i < n_rows; ++i) {
    cols_in_row.clear();
    vals_in_row.clear();
    for (int k = count[i]; k < count[i + 1]; ++k) {
      cols_in_row.push_back(entries[order[k]].col);
      vals_in_row.push_back(entries[order[k]].value);
    }
    std::vector<int> perm(cols_in_row.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](int a, int b) { return cols_in_row[a] < cols_in_row[b]; });
    size_t k = 0;
    while (k < perm.size()) {
      const int col = cols_in_row[perm[k]];
      double sum = 0.0;
      while (k < perm.size() && cols_in_row[perm[k]] == col) sum += vals_in_row[perm[k++]];
      if (sum != 0.0) {
        m.col_idx_.push_back(col);
        m.values_.push_back(sum);
      }
    }
    m.row_ptr_[static_cast<size_t>(i) + 1] = static_cast<int>(m.col_idx_.size());
  }
  return m;
}

SparseMatrix SparseMatrix::from_csr(int n_rows, int n_cols, std::vector<int> row_ptr,
                                    std::vector<int> col_idx, std::vector<double> values) {
  if (row_ptr.size() != static_cast<size_t>(n_rows) + 1 || row_ptr.front() != 0 ||
      row_ptr.back() != static_cast<int>(col_idx.size()) || col_idx.size() != values.size())
    throw std::invalid_argument("from_csr: inconsistent arrays");
  for (int i = 0; i < n_rows; ++i) {
    if (row_ptr[i] > row_ptr[static_cast<size_t>(i) + 1])
      throw std::invalid_argument("from_csr: row_ptr not nondecreasing");
    for (int k = row_ptr[i]; k < row_ptr[static_cast<size_t>(i) + 1]; ++k) {
      if (col_idx[k] < 0 || col_idx[k] >= n_cols)
        throw std::out_of_range("from_csr: column index out of range");
      if (k > row_ptr[i] && col_idx[k] <= col_idx[k - 1])
        throw std::invalid_argument("from_csr: columns not strictly increasing");
    }
  }
  SparseMatrix m(n_rows, n_cols);
  m.row_ptr_ = std::move(row_ptr);
  m.col_idx_ = std::move(col_idx);
  m.values_ = std::move(values);
  return m;
}

SparseMatrix SparseMatrix::identity(int n) {
  SparseMatrix m(n, n);
  m.col_idx_.resize(n);
  m.values_.assign(n, 1.0);
  std::iota(m.col_idx_.begin(), m.col_idx_.end(), 0);
  std::iota(m.row_ptr_.begin(), m.row_ptr_.end(), 0);
  return m;
}

SparseMatrix SparseMatrix::diagonal(std::span<const double> d) {
  std::vector<Triplet> ts;
  ts.reserve(d.size());
  for (size_t i = 0; i < d.size(); ++i)
    ts.push_back({static_cast<int>(i), static_cast<int>(i), d[i]});
  return from_triplets(static_cast<int>(d.size()), static_cast<int>(d.size()), ts);
}

double SparseMatrix::coeff(int i, int j) const {
  if (i < 0 || i >= n_rows_ || j < 0 || j >= n_cols_)
    throw std::out_of_range("SparseMatrix::coeff: index out of range");
  const auto begin = col_idx_.begin() + row_ptr_[i];
  const auto end = col_idx_.begin() + row_ptr_[static_cast<size_t>(i) + 1];
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return values_[static_cast<size_t>(it - col_idx_.begin())];
}

std::vector<double> SparseMatrix::matvec(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n_cols_)
    throw std::invalid_argument("matvec: dimension mismatch");
  std::vector<double> y(n_rows_, 0.0);
  for (int i = 0; i < n_rows_; ++i) {
    double sum = 0.0;
    for (int k = row_ptr_[i]; k < row_ptr_[static_cast<size_t>(i) + 1]; ++k)
      sum += values_[k] * x[col_idx_[k]];
    y[i] = sum;
  }
  return y;
}

SparseMatrix SparseMatrix::transpose() const {
  SparseMatrix t(n_cols_, n_rows_);
  t.col_idx_.resize(values_.size());
  t.values_.resize(values_.size());
  std::vector<int> count(static_cast<size_t>(n_cols_) + 1, 0);
  for (int c : col_idx_) ++count[static_cast<size_t>(c) + 1];
  std::partial_sum(count.begin(), count.end(), count.begin());
  t.row_ptr_ = count;
  std::vector<int> next(count.begin(), count.end() - 1);
  for (int i = 0; i < n_rows_; ++i) {
    for (int k = row_ptr_[i]; k < row_ptr_[static_cast<size_t>(i) + 1]; ++k) {
      const int pos = next[col_idx_[k]]++;
      t.col_idx_[pos] = i;
      t.values_[pos] = values_[k];
    }
  }
  return t;
}

double SparseMatrix::frobenius_norm() const {
  double sum = 0.0;
  for (double v : values_) sum += v * v;
  return std::sqrt(sum);
}

bool SparseMatrix::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("multiply: dimension mismatch");
  SparseMatrix c(a.rows(), b.cols());
  std::vector<double> acc(b.cols(), 0.0);
  std::vector<int> marker(b.cols(), -1);
  std::vector<int> cols;
  for (int i = 0; i < a.rows(); ++i) {
    cols.clear();
    for (int ka = a.row_ptr_[i]; ka < a.row_ptr_[static_cast<size_t>(i) + 1]; ++ka) {
      const int j = a.col_idx_[ka];
      const double av = a.values_[ka];
      for (int kb = b.row_ptr_[j]; kb < b.row_ptr_[static_cast<size_t>(j) + 1]; ++kb) {
        const int col = b.col_idx_[kb];
        if (marker[col] != i) {
          marker[col] = i;
          acc[col] = 0.0;
          cols.push_back(col);
        }
        acc[col] += av * b.values_[kb];
      }
    }
    std::sort(cols.begin(), cols.end());
    for (int col : cols) {
      if (acc[col] != 0.0) {
        c.col_idx_.push_back(col);
        c.values_.push_back(acc[col]);
      }
    }
    c.row_ptr_[static_cast<size_t>(i) + 1] = static_cast<int>(c.col_idx_.size());
  }
  return c;
}

SparseMatrix triple_product(const SparseMatrix& r, const SparseMatrix& a, const SparseMatrix& p) {
  return multiply(multiply(r, a), p);
}

namespace {

Eigen::SparseMatrix<double> to_eigen(const SparseMatrix& a) {
  Eigen::SparseMatrix<double> m(a.rows(), a.cols());
  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(a.nnz());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = a.row_ptr()[i]; k < a.row_ptr()[static_cast<size_t>(i) + 1]; ++k)
      ts.emplace_back(i, a.col_idx()[k], a.values()[k]);
  m.setFromTriplets(ts.begin(), ts.end());
  m.makeCompressed();
  return m;
}

}  // namespace

struct LuFactorization::Impl {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

LuFactorization::LuFactorization(const SparseMatrix& a) : impl_(std::make_unique<Impl>()) {
  if (a.rows() != a.cols()) throw std::invalid_argument("LuFactorization: matrix not square");
  n_ = a.rows();
  if (!a.all_finite()) throw SingularMatrixError("LuFactorization: non-finite entries");
  const Eigen::SparseMatrix<double> m = to_eigen(a);
  impl_->lu.compute(m);
  if (impl_->lu.info() != Eigen::Success)
    throw SingularMatrixError("LuFactorization: factorization failed (singular matrix)");
}

LuFactorization::~LuFactorization() = default;
LuFactorization::LuFactorization(LuFactorization&&) noexcept = default;
LuFactorization& LuFactorization::operator=(LuFactorization&&) noexcept = default;

std::vector<double> LuFactorization::solve(std::span<const double> b) const {
  if (static_cast<int>(b.size()) != n_)
    throw std::invalid_argument("LuFactorization::solve: dimension mismatch");
  Eigen::VectorXd rhs(n_);
  for (int i = 0; i < n_; ++i) rhs[i] = b[i];
  const Eigen::VectorXd x = impl_->lu.solve(rhs);
  if (impl_->lu.info() != Eigen::Success)
    throw SingularMatrixError("LuFactorization::solve: solve failed");
  return std::vector<double>(x.data(), x.data() + n_);
}

std::vector<double> lu_solve(const SparseMatrix& a, std::span<const double> b) {
  return LuFactorization(a).solve(b);
}

double euclidean_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

double rms_norm(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return euclidean_norm(v) / std::sqrt(static_cast<double>(v.size()));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

}  // namespace pnp
