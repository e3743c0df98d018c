#pragma once

#include <array>
#include <memory>

#include "bpjd/linalg/csr.hpp"
#include "bpjd/mesh.hpp"
#include "bpjd/types.hpp"

namespace bpjd {

/// Discrete pencil (K, M) on the free (interior) dofs of a mesh; Dirichlet
/// dofs are eliminated, so both matrices are symmetric positive definite.
struct FeProblem {
  CsrMatrixd stiffness;
  CsrMatrixd mass;
  std::shared_ptr<const StructuredMesh> mesh;
  Index n_free = 0;
};

struct ElementMatrices {
  Matrix stiffness;
  Matrix mass;
};

/// Exact P1 matrices of the triangle whose vertices are the columns of `vertices`.
ElementMatrices p1_element_matrices(const Eigen::Matrix<double, 2, 3>& vertices);

/// Trilinear matrices of an axis-aligned box with the given edge lengths,
/// integrated with the 2-point Gauss rule per axis (exact for these integrands).
/// Local vertex v sits at offset (v & 1, (v >> 1) & 1, (v >> 2) & 1).
ElementMatrices q1_element_matrices(const std::array<double, 3>& lengths);

FeProblem assemble_p1(std::shared_ptr<const StructuredMesh> mesh);
FeProblem assemble_q1_3d(std::shared_ptr<const StructuredMesh> mesh);

/// P1 in 2D, trilinear in 3D.
FeProblem assemble(std::shared_ptr<const StructuredMesh> mesh);
FeProblem assemble(const StructuredMesh& mesh);

/// v^T K v / v^T M v.
double rayleigh_quotient(const FeProblem& p, const Vector& v);

}  // namespace bpjd
