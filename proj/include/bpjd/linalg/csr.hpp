#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "bpjd/errors.hpp"
#include "bpjd/types.hpp"

namespace bpjd {

template <typename Scalar>
struct Triplet {
  Index row;
  Index col;
  Scalar value;
};

/// Compressed sparse row storage. Column indices are sorted and unique within
/// each row; every kernel sums in ascending column order so results are
/// reproducible bit for bit.
template <typename Scalar>
class CsrMatrix {
 public:
  CsrMatrix() : row_ptr_(1, 0) {}

  CsrMatrix(Index rows, Index cols, std::vector<Index> row_ptr, std::vector<Index> col_idx,
            std::vector<Scalar> values)
      : rows_(rows),
        cols_(cols),
        row_ptr_(std::move(row_ptr)),
        col_idx_(std::move(col_idx)),
        values_(std::move(values)) {
    validate();
  }

  static CsrMatrix identity(Index n) {
    std::vector<Index> ptr(n + 1), idx(n);
    std::vector<Scalar> val(n, Scalar(1));
    for (Index i = 0; i < n; ++i) {
      ptr[i] = i;
      idx[i] = i;
    }
    ptr[n] = n;
    return CsrMatrix(n, n, std::move(ptr), std::move(idx), std::move(val));
  }

  /// Duplicate entries are summed in the order they appear in `entries`.
  static CsrMatrix from_triplets(Index rows, Index cols, std::vector<Triplet<Scalar>> entries) {
    for (const auto& t : entries) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw DimensionError("triplet outside matrix bounds");
    }
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    std::vector<Index> ptr(rows + 1, 0), idx;
    std::vector<Scalar> val;
    idx.reserve(entries.size());
    val.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& t = entries[k];
      if (!idx.empty() && k > 0 && entries[k - 1].row == t.row && idx.back() == t.col) {
        val.back() += t.value;
        continue;
      }
      idx.push_back(t.col);
      val.push_back(t.value);
      ++ptr[t.row + 1];
    }
    for (Index i = 0; i < rows; ++i) ptr[i + 1] += ptr[i];
    return CsrMatrix(rows, cols, std::move(ptr), std::move(idx), std::move(val));
  }

  template <typename Derived>
  static CsrMatrix from_dense(const Eigen::MatrixBase<Derived>& dense) {
    std::vector<Index> ptr(dense.rows() + 1, 0), idx;
    std::vector<Scalar> val;
    for (Index i = 0; i < dense.rows(); ++i) {
      for (Index j = 0; j < dense.cols(); ++j) {
        if (dense(i, j) != Scalar(0)) {
          idx.push_back(j);
          val.push_back(dense(i, j));
        }
      }
      ptr[i + 1] = static_cast<Index>(idx.size());
    }
    return CsrMatrix(dense.rows(), dense.cols(), std::move(ptr), std::move(idx), std::move(val));
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index nnz() const noexcept { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_ptr() const noexcept { return row_ptr_; }
  std::span<const Index> col_idx() const noexcept { return col_idx_; }
  std::span<const Scalar> values() const noexcept { return values_; }
  std::span<Scalar> values() noexcept { return values_; }

  /// Position of (i, j) in the value array, or -1 when not stored.
  Index find(Index i, Index j) const {
    const auto first = col_idx_.begin() + row_ptr_[i];
    const auto last = col_idx_.begin() + row_ptr_[i + 1];
    const auto it = std::lower_bound(first, last, j);
    return (it != last && *it == j) ? static_cast<Index>(it - col_idx_.begin()) : Index(-1);
  }

  Scalar coeff(Index i, Index j) const {
    const Index pos = find(i, j);
    return pos < 0 ? Scalar(0) : values_[pos];
  }

  MatrixX<Scalar> to_dense() const {
    MatrixX<Scalar> d = MatrixX<Scalar>::Zero(rows_, cols_);
    for (Index i = 0; i < rows_; ++i)
      for (Index k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) d(i, col_idx_[k]) = values_[k];
    return d;
  }

  CsrMatrix transpose() const {
    std::vector<Index> ptr(cols_ + 1, 0), idx(values_.size());
    std::vector<Scalar> val(values_.size());
    for (Index k = 0; k < nnz(); ++k) ++ptr[col_idx_[k] + 1];
    for (Index j = 0; j < cols_; ++j) ptr[j + 1] += ptr[j];
    std::vector<Index> next(ptr.begin(), ptr.end() - 1);
    for (Index i = 0; i < rows_; ++i) {
      for (Index k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        const Index dst = next[col_idx_[k]]++;
        idx[dst] = i;
        val[dst] = values_[k];
      }
    }
    return CsrMatrix(cols_, rows_, std::move(ptr), std::move(idx), std::move(val));
  }

  /// Exact (0 ulp) structural and numerical symmetry.
  bool is_symmetric() const {
    if (rows_ != cols_) return false;
    for (Index i = 0; i < rows_; ++i)
      for (Index k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        const Index pos = find(col_idx_[k], i);
        if (pos < 0 || values_[pos] != values_[k]) return false;
      }
    return true;
  }

 private:
  void validate() const {
    if (rows_ < 0 || cols_ < 0) throw DimensionError("negative matrix dimension");
    if (static_cast<Index>(row_ptr_.size()) != rows_ + 1 || row_ptr_.front() != 0)
      throw DimensionError("row_ptr must have rows+1 entries starting at 0");
    if (col_idx_.size() != values_.size() || row_ptr_.back() != static_cast<Index>(values_.size()))
      throw DimensionError("row_ptr, col_idx and values disagree on nnz");
    for (Index i = 0; i < rows_; ++i) {
      if (row_ptr_[i + 1] < row_ptr_[i]) throw DimensionError("row_ptr must be non-decreasing");
      for (Index k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        if (col_idx_[k] < 0 || col_idx_[k] >= cols_) throw DimensionError("column index out of range");
        if (k > row_ptr_[i] && col_idx_[k] <= col_idx_[k - 1])
          throw DimensionError("column indices must be sorted and unique within a row");
      }
    }
  }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<Scalar> values_;
};

using CsrMatrixd = CsrMatrix<double>;

/// y = A x.
template <typename Scalar, typename In, typename Out>
void spmv_into(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<In>& x, Eigen::MatrixBase<Out>& y) {
  if (x.size() != A.cols() || y.size() != A.rows()) throw DimensionError("spmv: dimension mismatch");
  const auto ptr = A.row_ptr();
  const auto idx = A.col_idx();
  const auto val = A.values();
  for (Index i = 0; i < A.rows(); ++i) {
    Scalar sum(0);
    for (Index k = ptr[i]; k < ptr[i + 1]; ++k) sum += val[k] * x(idx[k]);
    y(i) = sum;
  }
}

template <typename Scalar, typename Derived>
VectorX<Scalar> spmv(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<Derived>& x) {
  VectorX<Scalar> y(A.rows());
  spmv_into(A, x, y);
  return y;
}

template <typename Scalar, typename Derived>
VectorX<Scalar> operator*(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<Derived>& x)
  requires(Derived::ColsAtCompileTime == 1)
{
  return spmv(A, x);
}

/// Column-by-column product with a dense block.
template <typename Scalar, typename Derived>
MatrixX<Scalar> spmm(const CsrMatrix<Scalar>& A, const Eigen::MatrixBase<Derived>& X) {
  if (X.rows() != A.cols()) throw DimensionError("spmm: dimension mismatch");
  MatrixX<Scalar> Y(A.rows(), X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    auto col = Y.col(j);
    spmv_into(A, X.col(j), col);
  }
  return Y;
}

/// Sparse product A B; each output row is accumulated in ascending column order.
template <typename Scalar>
CsrMatrix<Scalar> multiply(const CsrMatrix<Scalar>& A, const CsrMatrix<Scalar>& B) {
  if (A.cols() != B.rows()) throw DimensionError("sparse product: dimension mismatch");
  std::vector<Index> ptr(A.rows() + 1, 0), idx;
  std::vector<Scalar> val;
  std::vector<Scalar> acc(B.cols(), Scalar(0));
  std::vector<char> used(B.cols(), 0);
  std::vector<Index> pattern;
  const auto ap = A.row_ptr();
  const auto ai = A.col_idx();
  const auto av = A.values();
  const auto bp = B.row_ptr();
  const auto bi = B.col_idx();
  const auto bv = B.values();
  for (Index i = 0; i < A.rows(); ++i) {
    pattern.clear();
    for (Index ka = ap[i]; ka < ap[i + 1]; ++ka) {
      const Index r = ai[ka];
      for (Index kb = bp[r]; kb < bp[r + 1]; ++kb) {
        const Index j = bi[kb];
        if (!used[j]) {
          used[j] = 1;
          pattern.push_back(j);
        }
      }
    }
    std::sort(pattern.begin(), pattern.end());
    // Accumulate in a fixed (A-row, B-row) traversal order.
    for (Index ka = ap[i]; ka < ap[i + 1]; ++ka) {
      const Index r = ai[ka];
      for (Index kb = bp[r]; kb < bp[r + 1]; ++kb) acc[bi[kb]] += av[ka] * bv[kb];
    }
    for (Index j : pattern) {
      idx.push_back(j);
      val.push_back(acc[j]);
      acc[j] = Scalar(0);
      used[j] = 0;
    }
    ptr[i + 1] = static_cast<Index>(idx.size());
  }
  return CsrMatrix<Scalar>(A.rows(), B.cols(), std::move(ptr), std::move(idx), std::move(val));
}

/// P^T A P, symmetrised entrywise so the result is exactly symmetric.
template <typename Scalar>
CsrMatrix<Scalar> galerkin_product(const CsrMatrix<Scalar>& A, const CsrMatrix<Scalar>& P) {
  auto G = multiply(P.transpose(), multiply(A, P));
  auto values = G.values();
  for (Index i = 0; i < G.rows(); ++i) {
    for (Index k = G.row_ptr()[i]; k < G.row_ptr()[i + 1]; ++k) {
      const Index j = G.col_idx()[k];
      if (j <= i) continue;
      const Index mirror = G.find(j, i);
      if (mirror < 0) throw ContractViolation("Galerkin product is structurally unsymmetric");
      const Scalar avg = (values[k] + values[mirror]) / Scalar(2);
      values[k] = avg;
      values[mirror] = avg;
    }
  }
  return G;
}

/// Rows and columns of A selected by the sorted index list `keep`.
template <typename Scalar>
CsrMatrix<Scalar> principal_submatrix(const CsrMatrix<Scalar>& A, std::span<const Index> keep) {
  std::vector<Index> local(A.cols(), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= A.rows()) throw DimensionError("submatrix index out of range");
    local[keep[k]] = static_cast<Index>(k);
  }
  std::vector<Index> ptr(keep.size() + 1, 0), idx;
  std::vector<Scalar> val;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const Index i = keep[r];
    for (Index k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k) {
      const Index j = local[A.col_idx()[k]];
      if (j >= 0) {
        idx.push_back(j);
        val.push_back(A.values()[k]);
      }
    }
    ptr[r + 1] = static_cast<Index>(idx.size());
  }
  // The selection keeps relative column order only when `keep` is sorted.
  const Index n = static_cast<Index>(keep.size());
  if (!std::is_sorted(keep.begin(), keep.end())) {
    std::vector<Triplet<Scalar>> t;
    for (Index r = 0; r < n; ++r)
      for (Index k = ptr[r]; k < ptr[r + 1]; ++k) t.push_back({r, idx[k], val[k]});
    return CsrMatrix<Scalar>::from_triplets(n, n, std::move(t));
  }
  return CsrMatrix<Scalar>(n, n, std::move(ptr), std::move(idx), std::move(val));
}

}  // namespace bpjd
