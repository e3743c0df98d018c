#include "bpjd/linalg/orthogonalize.hpp"

#include <cmath>

namespace bpjd {

Matrix m_orthonormalize(const CsrMatrixd& M, const Matrix& X, double drop_tol) {
  const Index n = X.rows();
  Matrix Q(n, X.cols()), MQ(n, X.cols());
  Index kept = 0;
  Vector v(n), Mv(n);
  for (Index j = 0; j < X.cols(); ++j) {
    v = X.col(j);
    spmv_into(M, v, Mv);
    const double original = std::sqrt(std::max(0.0, v.dot(Mv)));
    if (original == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (Index q = 0; q < kept; ++q) v -= MQ.col(q).dot(v) * Q.col(q);
    spmv_into(M, v, Mv);
    const double norm = std::sqrt(std::max(0.0, v.dot(Mv)));
    if (!(norm > drop_tol * original)) continue;
    Q.col(kept) = v / norm;
    MQ.col(kept) = Mv / norm;
    ++kept;
  }
  return Q.leftCols(kept);
}

Matrix m_orthonormal_extension(const CsrMatrixd& M, const Matrix& Q, const Matrix& X, double drop_tol) {
  if (Q.cols() == 0) return m_orthonormalize(M, X, drop_tol);
  const Matrix MQ = spmm(M, Q);
  const Matrix MX = spmm(M, X);
  Matrix out(X.rows(), X.cols()), MO(X.rows(), X.cols());
  Index kept = 0;
  Vector v(X.rows()), Mv(X.rows());
  for (Index j = 0; j < X.cols(); ++j) {
    // Drop decisions are relative to the norm before any projection.
    const double original = std::sqrt(std::max(0.0, X.col(j).dot(MX.col(j))));
    if (original == 0.0) continue;
    v = X.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      v -= Q * (MQ.transpose() * v);
      for (Index q = 0; q < kept; ++q) v -= MO.col(q).dot(v) * out.col(q);
    }
    spmv_into(M, v, Mv);
    const double norm = std::sqrt(std::max(0.0, v.dot(Mv)));
    if (!(norm > drop_tol * original)) continue;
    out.col(kept) = v / norm;
    MO.col(kept) = Mv / norm;
    ++kept;
  }
  return out.leftCols(kept);
}

}  // namespace bpjd
