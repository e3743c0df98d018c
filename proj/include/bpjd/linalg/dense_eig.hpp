#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>

#include "bpjd/errors.hpp"
#include "bpjd/types.hpp"

namespace bpjd {

template <typename Scalar>
struct SymmetricEigen {
  VectorX<Scalar> values;   // ascending
  MatrixX<Scalar> vectors;  // one column per value
};

namespace detail {

template <typename Scalar>
void sort_ascending(SymmetricEigen<Scalar>& e) {
  const Index n = e.values.size();
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return e.values(a) < e.values(b); });
  SymmetricEigen<Scalar> sorted{VectorX<Scalar>(n), MatrixX<Scalar>(e.vectors.rows(), n)};
  for (Index k = 0; k < n; ++k) {
    sorted.values(k) = e.values(order[k]);
    sorted.vectors.col(k) = e.vectors.col(order[k]);
  }
  e = std::move(sorted);
}

}  // namespace detail

/// Eigen-decomposition of a symmetric matrix by the cyclic Jacobi rotation
/// method in round-robin ordering: each sweep is a sequence of rounds of n/2
/// disjoint rotations, applied as one pass over the columns (A J) and one pass
/// down every column (J^T A), which keeps all memory access contiguous.
/// Sweeps run until the off-diagonal Frobenius mass drops below eps * ||A||_F,
/// so ||AV - V diag(values)||_F is O(eps ||A||_F).
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> dense_sym_eig(const Eigen::MatrixBase<Derived>& input) {
  using Scalar = typename Derived::Scalar;
  const Index n = input.rows();
  if (input.cols() != n) throw DimensionError("dense_sym_eig: matrix is not square");

  MatrixX<Scalar> a = input;
  const Scalar frob = a.norm();
  if (!std::isfinite(static_cast<double>(frob))) throw ContractViolation("dense_sym_eig: non-finite entries");
  if ((a - a.transpose()).norm() > Scalar(1e-12) * frob)
    throw ContractViolation("dense_sym_eig: matrix is not symmetric");
  a = (a + a.transpose()) / Scalar(2);

  MatrixX<Scalar> v = MatrixX<Scalar>::Identity(n, n);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  constexpr int kMaxSweeps = 100;

  struct Rotation {
    Index p, q;
    Scalar c, s;
  };
  std::vector<Rotation> round;
  round.reserve(n / 2 + 1);
  VectorX<Scalar> tmp(n);
  const auto rotate_columns = [&tmp](MatrixX<Scalar>& m, const Rotation& r) {
    auto x = m.col(r.p);
    auto y = m.col(r.q);
    tmp = x;
    x = r.c * x - r.s * y;
    y = r.s * tmp + r.c * y;
  };

  // Circle method: player slots[0] stays, the others rotate; slot value n is a bye.
  const Index players = n + (n % 2);
  std::vector<Index> slots(players);
  std::iota(slots.begin(), slots.end(), Index(0));

  for (int sweep = 0; sweep < kMaxSweeps && n > 1; ++sweep) {
    Scalar off = 0;
    for (Index q = 1; q < n; ++q) off += a.col(q).head(q).squaredNorm();
    if (std::sqrt(Scalar(2) * off) <= eps * frob) break;

    for (Index r = 0; r + 1 < players; ++r) {
      round.clear();
      for (Index i = 0; i < players / 2; ++i) {
        Index p = slots[i], q = slots[players - 1 - i];
        if (p >= n || q >= n) continue;
        if (p > q) std::swap(p, q);
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar app = a(p, p);
        const Scalar aqq = a(q, q);
        // Rotations that cannot change the diagonal in floating point are dropped.
        if (sweep > 3 && std::abs(apq) <= eps * Scalar(0.01) * std::sqrt(std::abs(app * aqq))) {
          a(p, q) = a(q, p) = Scalar(0);
          continue;
        }
        const Scalar theta = (aqq - app) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        round.push_back({p, q, c, t * c});
      }
      std::rotate(slots.begin() + 1, slots.end() - 1, slots.end());
      if (round.empty()) continue;

      for (const auto& rot : round) rotate_columns(a, rot);
      for (Index k = 0; k < n; ++k) {
        Scalar* col = a.col(k).data();
        for (const auto& rot : round) {
          const Scalar x = col[rot.p], y = col[rot.q];
          col[rot.p] = rot.c * x - rot.s * y;
          col[rot.q] = rot.s * x + rot.c * y;
        }
      }
      for (const auto& rot : round) {
        a(rot.p, rot.q) = Scalar(0);
        a(rot.q, rot.p) = Scalar(0);
        rotate_columns(v, rot);
      }
    }
  }

  SymmetricEigen<Scalar> result{a.diagonal(), std::move(v)};
  detail::sort_ascending(result);
  return result;
}

/// Solves A x = lambda B x for symmetric A and symmetric positive definite B by
/// reducing with B = L L^T to L^{-1} A L^{-T}. Eigenvectors are B-orthonormal.
template <typename DerivedA, typename DerivedB>
SymmetricEigen<typename DerivedA::Scalar> dense_generalized_eig(const Eigen::MatrixBase<DerivedA>& A,
                                                                const Eigen::MatrixBase<DerivedB>& B) {
  using Scalar = typename DerivedA::Scalar;
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
    throw DimensionError("dense_generalized_eig: size mismatch");
  const MatrixX<Scalar> b = B;
  Eigen::LLT<MatrixX<Scalar>> llt(b);
  if (llt.info() != Eigen::Success)
    throw DefinitenessError("dense_generalized_eig: B is not positive definite (Cholesky pivot <= 0)");
  const auto L = llt.matrixL();
  MatrixX<Scalar> c = L.solve(MatrixX<Scalar>(A));
  c = L.solve(MatrixX<Scalar>(c.transpose()));
  c = (c + c.transpose()) / Scalar(2);
  auto e = dense_sym_eig(c);
  e.vectors = llt.matrixU().solve(e.vectors);
  return e;
}

/// | Tr(B^{-1} A) - [Tr(D_B^{-1} D_A) - Tr(A1) + Tr(A2) + Tr(A3)] | for the
/// splitting A = Lambda - At, B = I - Bt with Lambda = D_A, where D_X is the
/// diagonal part of X, Dbar_X = D_X - X and
///   A1 = D_B^{-1} Bt D_B^{-1} (At + D)
///   A2 = D_B^{-1} D_Bt D_B^{-1} (D_At + D)
///   A3 = D_B^{-1} Dbar_B B^{-1} Dbar_B D_B^{-1} A.
/// The identity is exact for any diagonal D, so the result measures roundoff only.
template <typename DerivedA, typename DerivedB, typename DerivedD>
typename DerivedA::Scalar trace_identity_residual(const Eigen::MatrixBase<DerivedA>& A,
                                                  const Eigen::MatrixBase<DerivedB>& B,
                                                  const Eigen::MatrixBase<DerivedD>& d) {
  using Scalar = typename DerivedA::Scalar;
  using Mat = MatrixX<Scalar>;
  const Index n = A.rows();
  if (A.cols() != n || B.rows() != n || B.cols() != n || d.size() != n)
    throw DimensionError("trace_identity_residual: size mismatch");

  Eigen::LLT<Mat> llt{Mat(B)};
  if (llt.info() != Eigen::Success) throw DefinitenessError("trace_identity_residual: B is not positive definite");

  const Mat a = A;
  const Mat b = B;
  const Mat D = d.asDiagonal();
  const auto diag = [](const Mat& x) { return Mat(x.diagonal().asDiagonal()); };

  const Mat a_tilde = diag(a) - a;
  const Mat b_tilde = Mat::Identity(n, n) - b;
  const Mat db_inv = b.diagonal().cwiseInverse().asDiagonal();
  const Mat dbar_b = diag(b) - b;

  const Mat a1 = db_inv * b_tilde * db_inv * (a_tilde + D);
  const Mat a2 = db_inv * diag(b_tilde) * db_inv * (diag(a_tilde) + D);
  const Mat a3 = db_inv * dbar_b * llt.solve(dbar_b) * db_inv * a;

  const Scalar lhs = llt.solve(a).trace();
  const Scalar rhs = (db_inv * diag(a)).trace() - a1.trace() + a2.trace() + a3.trace();
  return std::abs(lhs - rhs);
}

}  // namespace bpjd
