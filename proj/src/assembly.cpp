#include "bpjd/assembly.hpp"

#include <algorithm>
#include <cmath>

#include "bpjd/errors.hpp"

namespace bpjd {

namespace {

/// CSR pattern of all free-free couplings, then element-order accumulation.
class Assembler {
 public:
  explicit Assembler(const StructuredMesh& mesh) : mesh_(mesh) {
    const Index n = mesh.num_free();
    std::vector<std::vector<Index>> rows(n);
    for (const auto& el : mesh.elements) {
      for (int a = 0; a < mesh.vertices_per_element; ++a) {
        const Index i = mesh.free_dof[el[a]];
        if (i < 0) continue;
        for (int b = 0; b < mesh.vertices_per_element; ++b) {
          const Index j = mesh.free_dof[el[b]];
          if (j >= 0) rows[i].push_back(j);
        }
      }
    }
    std::vector<Index> ptr(n + 1, 0), idx;
    for (Index i = 0; i < n; ++i) {
      auto& r = rows[i];
      std::sort(r.begin(), r.end());
      r.erase(std::unique(r.begin(), r.end()), r.end());
      idx.insert(idx.end(), r.begin(), r.end());
      ptr[i + 1] = static_cast<Index>(idx.size());
    }
    std::vector<double> zeros(idx.size(), 0.0);
    stiffness_ = CsrMatrixd(n, n, ptr, idx, zeros);
    mass_ = CsrMatrixd(n, n, std::move(ptr), std::move(idx), std::move(zeros));
  }

  void add(Index e, const ElementMatrices& em) {
    const auto& el = mesh_.elements[e];
    auto kv = stiffness_.values();
    auto mv = mass_.values();
    for (int a = 0; a < mesh_.vertices_per_element; ++a) {
      const Index i = mesh_.free_dof[el[a]];
      if (i < 0) continue;
      for (int b = 0; b < mesh_.vertices_per_element; ++b) {
        const Index j = mesh_.free_dof[el[b]];
        if (j < 0) continue;
        const Index pos = stiffness_.find(i, j);
        kv[pos] += em.stiffness(a, b);
        mv[pos] += em.mass(a, b);
      }
    }
  }

  FeProblem finish(std::shared_ptr<const StructuredMesh> mesh) {
    // Element matrices are symmetric, but the two triangles of a cell add
    // their halves in different orders; averaging mirrors makes K = K^T exact.
    for (CsrMatrixd* A : {&stiffness_, &mass_}) {
      auto v = A->values();
      for (Index i = 0; i < A->rows(); ++i)
        for (Index k = A->row_ptr()[i]; k < A->row_ptr()[i + 1]; ++k) {
          const Index j = A->col_idx()[k];
          if (j <= i) continue;
          const Index m = A->find(j, i);
          const double avg = 0.5 * (v[k] + v[m]);
          v[k] = v[m] = avg;
        }
    }
    FeProblem p;
    p.n_free = mesh->num_free();
    p.stiffness = std::move(stiffness_);
    p.mass = std::move(mass_);
    p.mesh = std::move(mesh);
    return p;
  }

 private:
  const StructuredMesh& mesh_;
  CsrMatrixd stiffness_;
  CsrMatrixd mass_;
};

}  // namespace

ElementMatrices p1_element_matrices(const Eigen::Matrix<double, 2, 3>& vertices) {
  Eigen::Matrix2d J;
  J.col(0) = vertices.col(1) - vertices.col(0);
  J.col(1) = vertices.col(2) - vertices.col(0);
  const double det = J.determinant();
  const double scale = J.cwiseAbs().maxCoeff();
  if (!(std::abs(det) > 1e-14 * scale * scale)) throw ContractViolation("degenerate triangle");
  const double area = 0.5 * std::abs(det);

  Eigen::Matrix<double, 2, 3> ref;
  ref << -1, 1, 0, -1, 0, 1;
  const Eigen::Matrix<double, 2, 3> grads = J.transpose().inverse() * ref;

  ElementMatrices em;
  em.stiffness = area * grads.transpose() * grads;
  em.mass = (area / 12.0) * (Matrix::Ones(3, 3) + Matrix::Identity(3, 3));
  return em;
}

ElementMatrices q1_element_matrices(const std::array<double, 3>& lengths) {
  for (double l : lengths)
    if (!(l > 0)) throw ContractViolation("hexahedron edge lengths must be positive");
  const double g = 0.5 / std::sqrt(3.0);
  const std::array<double, 2> pts{0.5 - g, 0.5 + g};
  const double vol = lengths[0] * lengths[1] * lengths[2];

  ElementMatrices em{Matrix::Zero(8, 8), Matrix::Zero(8, 8)};
  for (double x : pts)
    for (double y : pts)
      for (double z : pts) {
        const std::array<double, 3> q{x, y, z};
        std::array<double, 8> phi{};
        std::array<std::array<double, 3>, 8> grad{};
        for (int v = 0; v < 8; ++v) {
          std::array<double, 3> f{}, df{};
          for (int d = 0; d < 3; ++d) {
            const bool hi = (v >> d) & 1;
            f[d] = hi ? q[d] : 1 - q[d];
            df[d] = (hi ? 1.0 : -1.0) / lengths[d];
          }
          phi[v] = f[0] * f[1] * f[2];
          grad[v] = {df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]};
        }
        const double w = vol / 8.0;
        for (int a = 0; a < 8; ++a)
          for (int b = 0; b < 8; ++b) {
            em.mass(a, b) += w * phi[a] * phi[b];
            em.stiffness(a, b) +=
                w * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1] + grad[a][2] * grad[b][2]);
          }
      }
  return em;
}

FeProblem assemble_p1(std::shared_ptr<const StructuredMesh> mesh) {
  if (!mesh || mesh->dim != 2 || mesh->vertices_per_element != 3)
    throw ConfigurationError("P1 assembly needs a 2D triangular mesh");
  Assembler asmb(*mesh);
  for (Index e = 0; e < mesh->num_elements(); ++e) {
    Eigen::Matrix<double, 2, 3> x;
    for (int v = 0; v < 3; ++v) x.col(v) = mesh->nodes.col(mesh->elements[e][v]);
    asmb.add(e, p1_element_matrices(x));
  }
  return asmb.finish(std::move(mesh));
}

FeProblem assemble_q1_3d(std::shared_ptr<const StructuredMesh> mesh) {
  if (!mesh || mesh->dim != 3 || mesh->vertices_per_element != 8)
    throw ConfigurationError("trilinear assembly needs a 3D hexahedral mesh");
  // Cells are congruent cubes, so one element matrix serves every element.
  const double h = mesh->cell_size;
  const ElementMatrices em = q1_element_matrices({h, h, h});
  Assembler asmb(*mesh);
  for (Index e = 0; e < mesh->num_elements(); ++e) asmb.add(e, em);
  return asmb.finish(std::move(mesh));
}

FeProblem assemble(std::shared_ptr<const StructuredMesh> mesh) {
  if (!mesh) throw ConfigurationError("assemble: no mesh");
  return mesh->dim == 2 ? assemble_p1(std::move(mesh)) : assemble_q1_3d(std::move(mesh));
}

FeProblem assemble(const StructuredMesh& mesh) { return assemble(std::make_shared<const StructuredMesh>(mesh)); }

double rayleigh_quotient(const FeProblem& p, const Vector& v) {
  if (v.size() != p.n_free) throw DimensionError("rayleigh_quotient: vector length differs from n_free");
  const double b = v.dot(p.mass * v);
  if (!(b > 0)) throw ContractViolation("rayleigh_quotient: zero vector");
  return v.dot(p.stiffness * v) / b;
}

}  // namespace bpjd
