#include "bpjd/coarse.hpp"

#include <cmath>
#include <sstream>

#include "bpjd/errors.hpp"
#include "bpjd/linalg/orthogonalize.hpp"

namespace bpjd {

SymmetricEigen<double> coarse_eigs(const CsrMatrixd& K_H, const CsrMatrixd& M_H, Index count) {
  const Index n = K_H.rows();
  if (n > kDenseThreshold)
    throw ConfigurationError("coarse problem has " + std::to_string(n) + " dofs, above the dense limit of " +
                             std::to_string(kDenseThreshold) + "; use a coarser initial mesh (smaller tau)");
  if (count < 0 || count > n)
    throw ConfigurationError("requested " + std::to_string(count) + " coarse eigenpairs but the coarse space has " +
                             std::to_string(n) + " dofs");
  auto full = dense_generalized_eig(K_H.to_dense(), M_H.to_dense());
  SymmetricEigen<double> out{full.values.head(count), full.vectors.leftCols(count)};
  // Fix signs so runs are reproducible: largest-magnitude entry positive.
  for (Index j = 0; j < count; ++j) {
    Index imax = 0;
    out.vectors.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.vectors(imax, j) < 0) out.vectors.col(j) *= -1.0;
  }
  return out;
}

CoarseSpectral build_coarse_spectral(const FeProblem& fine, CsrMatrixd P, Index s) {
  if (s < 0) throw ConfigurationError("s must be non-negative");
  if (P.rows() != fine.n_free) throw DimensionError("prolongation rows differ from the fine dof count");
  CoarseSpectral cs;
  cs.s = s;
  cs.K_H = galerkin_product(fine.stiffness, P);
  cs.M_H = galerkin_product(fine.mass, P);
  cs.Pt = P.transpose();
  cs.P = std::move(P);
  if (cs.size() < s + 1)
    throw ConfigurationError("coarse space has " + std::to_string(cs.size()) + " dofs but s + 1 = " +
                             std::to_string(s + 1) + " coarse eigenpairs are needed; refine the coarse mesh");
  auto eig = coarse_eigs(cs.K_H, cs.M_H, s + 1);
  cs.eigvals = std::move(eig.values);
  cs.eigvecs = std::move(eig.vectors);
  if (s > 0) {
    const double lo = cs.eigvals(s - 1), hi = cs.eigvals(s);
    if (!(hi - lo > 1e-10 * std::abs(hi))) {
      std::ostringstream msg;
      msg.precision(12);
      msg << "coarse eigenvalues lambda_s = " << lo << " and lambda_{s+1} = " << hi
          << " are not separated; enlarge s to include the whole cluster";
      throw ConfigurationError(msg.str());
    }
    // The dense eigenvectors are M_H-orthonormal only to ~1e-13; a leak of that
    // size along the (partly negative) deflated modes stalls CG once its target
    // drops below it. Re-orthonormalizing keeps the span and removes the leak.
    Matrix basis = m_orthonormalize(cs.M_H, cs.eigvecs.leftCols(s));
    if (basis.cols() < s) throw DegeneracyError("coarse eigenvectors are linearly dependent");
    cs.deflation.emplace(std::move(basis), cs.M_H);
  }
  return cs;
}

CoarseSpectral build_coarse_spectral(const FeProblem& fine, const StructuredMesh& coarse, Index s) {
  if (!fine.mesh) throw ConfigurationError("fine problem carries no mesh");
  return build_coarse_spectral(fine, prolongation(coarse, *fine.mesh), s);
}

Vector coarse_deflated_solve(const CoarseSpectral& cs, double shift, const Vector& fine_rhs, CgReport* report) {
  if (!(shift < cs.shift_limit())) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "shift must stay below lambda_{s+1}^H = " << cs.shift_limit();
    throw ShiftSafetyError("coarse", ShiftSafetyError::kCoarse, shift, msg.str());
  }
  Vector rhs_H = cs.Pt * fine_rhs;
  const auto* defl = cs.deflation ? &*cs.deflation : nullptr;
  Vector tmp(cs.size());
  auto apply = [&](const Vector& in, Vector& out) {
    spmv_into(cs.K_H, in, out);
    spmv_into(cs.M_H, in, tmp);
    out -= shift * tmp;
  };
  try {
    auto [x, rep] = cg_solve<double>(apply, rhs_H, {}, defl);
    if (report) *report = rep;
    return cs.P * x;
  } catch (const IndefiniteOperatorError& e) {
    throw ShiftSafetyError("coarse", ShiftSafetyError::kCoarse, shift, e.what());
  }
}

}  // namespace bpjd
