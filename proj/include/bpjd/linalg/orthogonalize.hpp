#pragma once

#include "bpjd/linalg/csr.hpp"
#include "bpjd/types.hpp"

namespace bpjd {

/// M-orthonormalizes the columns of X by two passes of modified Gram-Schmidt,
/// dropping columns whose norm falls below drop_tol times their original norm.
Matrix m_orthonormalize(const CsrMatrixd& M, const Matrix& X, double drop_tol = 1e-10);

/// Orthonormal directions extending the M-orthonormal basis Q by the columns of
/// X: X is projected against Q twice (block form), then treated as above.
Matrix m_orthonormal_extension(const CsrMatrixd& M, const Matrix& Q, const Matrix& X, double drop_tol = 1e-10);

}  // namespace bpjd
