#pragma once

#include <memory>
#include <optional>

#include "bpjd/assembly.hpp"
#include "bpjd/linalg/cg.hpp"
#include "bpjd/linalg/csr.hpp"
#include "bpjd/linalg/dense_eig.hpp"
#include "bpjd/mesh.hpp"

namespace bpjd {

/// Largest coarse problem solved with the dense eigensolver.
inline constexpr Index kDenseThreshold = 4000;

/// First `count` generalized eigenpairs of (K_H, M_H), ascending, M_H-orthonormal.
SymmetricEigen<double> coarse_eigs(const CsrMatrixd& K_H, const CsrMatrixd& M_H, Index count);

/// Coarse ingredient of the two-level preconditioner: the Galerkin pencil
/// K_H = P^T K P, M_H = P^T M P and its first s + 1 eigenpairs.
struct CoarseSpectral {
  CsrMatrixd P;
  CsrMatrixd Pt;
  CsrMatrixd K_H;
  CsrMatrixd M_H;
  Vector eigvals;   // s + 1 values
  Matrix eigvecs;   // n_H x (s + 1)
  Index s = 0;
  /// The first s eigenvectors with M_H as metric.
  std::optional<DeflationSpace<double>> deflation;

  Index size() const { return K_H.rows(); }
  /// lambda_{s+1}^H, the upper limit for admissible shifts.
  double shift_limit() const { return eigvals(s); }
};

/// Throws ConfigurationError when dim V^H < s + 1 or lambda_s^H = lambda_{s+1}^H.
CoarseSpectral build_coarse_spectral(const FeProblem& fine, CsrMatrixd P, Index s);
CoarseSpectral build_coarse_spectral(const FeProblem& fine, const StructuredMesh& coarse, Index s);

/// P x where (K_H - shift M_H) x = P^T rhs is solved on the M_H-orthogonal
/// complement of the first s coarse eigenvectors.
///
/// Feeding the restricted functional P^T rhs to the solver is the same as
/// applying the M-orthogonal projection onto V^H first: for coarse test
/// functions both give P^T rhs, so no mass-matrix solve is needed.
Vector coarse_deflated_solve(const CoarseSpectral& cs, double shift, const Vector& fine_rhs,
                             CgReport* report = nullptr);

}  // namespace bpjd
