#ifndef PNP_SPARSE_HPP
#define PNP_SPARSE_HPP

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pnp {

struct Triplet {
  int row;
  int col;
  double value;
};

class SingularMatrixError : public std::runtime_error {
public:
  explicit SingularMatrixError(const std::string& what) : std::runtime_error(what) {}
};

/// Compressed-sparse-row matrix. Within each row the column indices are
/// strictly increasing; duplicate triplets are summed on construction and
/// exact-zero sums are dropped. All kernels accumulate in a fixed order so
/// repeated runs are bit-identical.
class SparseMatrix {
public:
  SparseMatrix() = default;
  SparseMatrix(int n_rows, int n_cols);

  static SparseMatrix from_triplets(int n_rows, int n_cols, std::span<const Triplet> entries);
  static SparseMatrix from_csr(int n_rows, int n_cols, std::vector<int> row_ptr,
                               std::vector<int> col_idx, std::vector<double> values);
  static SparseMatrix identity(int n);
  static SparseMatrix diagonal(std::span<const double> d);

  int rows() const { return n_rows_; }
  int cols() const { return n_cols_; }
  int nnz() const { return static_cast<int>(values_.size()); }

  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Entry lookup by binary search; absent entries read as zero.
  double coeff(int i, int j) const;

  std::vector<double> matvec(std::span<const double> x) const;
  SparseMatrix transpose() const;

  double frobenius_norm() const;
  bool all_finite() const;

private:
  int n_rows_ = 0;
  int n_cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;

  friend SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b);
};

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b);

/// R*A*P as two successive sparse products (deterministic summation order).
SparseMatrix triple_product(const SparseMatrix& r, const SparseMatrix& a, const SparseMatrix& p);

/// Sparse LU with a fill-reducing ordering; reusable across right-hand sides.
/// Construction throws SingularMatrixError on structurally or numerically
/// singular input.
class LuFactorization {
public:
  explicit LuFactorization(const SparseMatrix& a);
  ~LuFactorization();
  LuFactorization(LuFactorization&&) noexcept;
  LuFactorization& operator=(LuFactorization&&) noexcept;
  LuFactorization(const LuFactorization&) = delete;
  LuFactorization& operator=(const LuFactorization&) = delete;

  std::vector<double> solve(std::span<const double> b) const;
  int size() const { return n_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int n_ = 0;
};

/// One-shot factor-and-solve.
std::vector<double> lu_solve(const SparseMatrix& a, std::span<const double> b);

double euclidean_norm(std::span<const double> v);

/// Root-mean-square norm ||v||_2 / sqrt(len); the residual stopping tests use
/// this so one tolerance works across mesh sizes.
double rms_norm(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace pnp

#endif
