#pragma once

#include <memory>
#include <vector>

#include "bpjd/assembly.hpp"
#include "bpjd/linalg/cg.hpp"
#include "bpjd/linalg/csr.hpp"
#include "bpjd/mesh.hpp"

namespace bpjd {

/// Overlapping subdomains: one per coarse element, each grown by whole layers
/// of fine elements. local_dofs[l] are the fine free dofs all of whose
/// incident elements lie in the grown subdomain, i.e. the interior of Omega_l'.
struct Decomposition {
  Index N = 0;
  /// coarse element -> subdomain (the identity, kept for reporting).
  std::vector<Index> owner;
  std::vector<std::vector<Index>> local_elems;
  std::vector<std::vector<Index>> local_dofs;
  int overlap_layers = 0;
  /// Coarse and fine element diameters; delta = overlap_layers * h.
  double H = 0.0;
  double h = 0.0;
  double delta = 0.0;
  /// Greedy coloring of the graph whose edges join subdomains sharing a fine element.
  std::vector<int> color;
  int num_colors = 0;
  Index n_fine = 0;
};

/// Layers needed for the overlap ratio delta/H, lround(ratio * H / h); at least 1.
int overlap_layers_for_ratio(const StructuredMesh& coarse, const StructuredMesh& fine, double ratio);

Decomposition build_decomposition(const StructuredMesh& coarse, const StructuredMesh& fine, int overlap_layers);

/// N = 1: the whole domain as a single subdomain.
Decomposition single_subdomain(const StructuredMesh& fine);

Vector restrict_to(const Vector& v, const Decomposition& d, Index l);
Vector extend_from(const Vector& v_l, const Decomposition& d, Index l);
/// out[local_dofs[l]] += v_l.
void extend_add(const Vector& v_l, const Decomposition& d, Index l, Vector& out);

/// Principal submatrices of K and M on local_dofs[l].
struct LocalPencil {
  CsrMatrixd stiffness;
  CsrMatrixd mass;
};

LocalPencil local_pencil(const FeProblem& p, const Decomposition& d, Index l);

/// v -> (K_l - shift M_l) v on the dofs of one subdomain. Solves run CG and
/// report an indefinite shifted operator as ShiftSafetyError("local", l, shift).
class LocalShiftedOperator {
 public:
  LocalShiftedOperator(const LocalPencil& pencil, Index subdomain, double shift);

  void apply(const Vector& in, Vector& out) const { spmv_into(matrix_, in, out); }
  Vector operator()(const Vector& v) const { return matrix_ * v; }
  std::pair<Vector, CgReport> solve(const Vector& rhs, const CgOptions& options = {}) const;

  Index size() const { return matrix_.rows(); }
  double shift() const { return shift_; }
  Index subdomain() const { return subdomain_; }
  const CsrMatrixd& matrix() const { return matrix_; }

 private:
  CsrMatrixd matrix_;
  Index subdomain_;
  double shift_;
};

LocalShiftedOperator local_shifted_operator(const FeProblem& p, const Decomposition& d, Index l, double shift);

}  // namespace bpjd
