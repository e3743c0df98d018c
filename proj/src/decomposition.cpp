#include "bpjd/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "bpjd/errors.hpp"

namespace bpjd {

namespace {

std::vector<std::vector<Index>> node_elements(const StructuredMesh& m) {
  std::vector<std::vector<Index>> adj(m.num_nodes());
  for (Index e = 0; e < m.num_elements(); ++e)
    for (int v = 0; v < m.vertices_per_element; ++v) adj[m.elements[e][v]].push_back(e);
  return adj;
}

void color_subdomains(Decomposition& d, Index n_elements) {
  std::vector<std::vector<Index>> containing(n_elements);
  for (Index l = 0; l < d.N; ++l)
    for (Index e : d.local_elems[l]) containing[e].push_back(l);
  std::vector<std::vector<Index>> nbr(d.N);
  for (const auto& c : containing)
    for (Index a : c)
      for (Index b : c)
        if (a != b) nbr[a].push_back(b);
  d.color.assign(d.N, -1);
  d.num_colors = 0;
  std::vector<char> taken;
  for (Index l = 0; l < d.N; ++l) {
    taken.assign(d.num_colors + 1, 0);
    for (Index m : nbr[l])
      if (d.color[m] >= 0) taken[d.color[m]] = 1;
    int c = 0;
    while (taken[c]) ++c;
    d.color[l] = c;
    d.num_colors = std::max(d.num_colors, c + 1);
  }
}

}  // namespace

int overlap_layers_for_ratio(const StructuredMesh& coarse, const StructuredMesh& fine, double ratio) {
  if (!(ratio > 0) || !std::isfinite(ratio)) throw ConfigurationError("overlap_ratio must be positive");
  const long layers = std::lround(ratio * coarse.mesh_size / fine.mesh_size);
  if (layers < 1)
    throw ConfigurationError("overlap_ratio " + std::to_string(ratio) +
                             " is below one fine layer on this mesh pair; refine further or enlarge the ratio");
  return static_cast<int>(layers);
}

Decomposition build_decomposition(const StructuredMesh& coarse, const StructuredMesh& fine, int overlap_layers) {
  if (overlap_layers < 1) throw ConfigurationError("overlap_layers must be at least 1");
  const auto parent = ancestor_elements(coarse, fine);
  const auto adj = node_elements(fine);

  Decomposition d;
  d.N = coarse.num_elements();
  d.owner.resize(d.N);
  for (Index l = 0; l < d.N; ++l) d.owner[l] = l;
  d.overlap_layers = overlap_layers;
  d.H = coarse.mesh_size;
  d.h = fine.mesh_size;
  d.delta = overlap_layers * fine.mesh_size;
  d.n_fine = fine.num_free();
  if (d.delta >= d.H)
    throw ConfigurationError("overlap width delta = " + std::to_string(d.delta) +
                             " must be smaller than the coarse diameter H = " + std::to_string(d.H));

  std::vector<std::vector<Index>> seed(d.N);
  for (Index e = 0; e < fine.num_elements(); ++e) seed[parent[e]].push_back(e);

  d.local_elems.resize(d.N);
  d.local_dofs.resize(d.N);
  std::vector<char> in(fine.num_elements(), 0);
  std::vector<char> node_seen(fine.num_nodes(), 0);
  for (Index l = 0; l < d.N; ++l) {
    std::vector<Index> elems = seed[l];
    for (Index e : elems) in[e] = 1;
    std::vector<Index> frontier = elems;
    for (int layer = 0; layer < overlap_layers; ++layer) {
      std::vector<Index> nodes;
      for (Index e : frontier)
        for (int v = 0; v < fine.vertices_per_element; ++v) {
          const Index n = fine.elements[e][v];
          if (!node_seen[n]) {
            node_seen[n] = 1;
            nodes.push_back(n);
          }
        }
      std::vector<Index> added;
      for (Index n : nodes)
        for (Index e : adj[n])
          if (!in[e]) {
            in[e] = 1;
            added.push_back(e);
          }
      elems.insert(elems.end(), added.begin(), added.end());
      frontier = std::move(added);
      // Nodes touched in earlier layers need no revisit; all their elements are in.
    }
    std::sort(elems.begin(), elems.end());
    if (d.N > 1 && static_cast<Index>(elems.size()) == fine.num_elements())
      throw ConfigurationError("overlap of " + std::to_string(overlap_layers) + " layers makes subdomain " +
                               std::to_string(l) + " cover the whole domain");

    for (Index e : elems)
      for (int v = 0; v < fine.vertices_per_element; ++v) {
        const Index n = fine.elements[e][v];
        const Index dof = fine.free_dof[n];
        if (dof < 0 || node_seen[n] == 2) continue;
        node_seen[n] = 2;
        const bool inside = std::all_of(adj[n].begin(), adj[n].end(), [&](Index f) { return in[f] != 0; });
        if (inside) d.local_dofs[l].push_back(dof);
      }
    std::sort(d.local_dofs[l].begin(), d.local_dofs[l].end());

    for (Index e : elems) {
      in[e] = 0;
      for (int v = 0; v < fine.vertices_per_element; ++v) node_seen[fine.elements[e][v]] = 0;
    }
    d.local_elems[l] = std::move(elems);
  }
  color_subdomains(d, fine.num_elements());
  return d;
}

Decomposition single_subdomain(const StructuredMesh& fine) {
  Decomposition d;
  d.N = 1;
  d.owner = {0};
  d.local_elems.resize(1);
  d.local_elems[0].resize(fine.num_elements());
  for (Index e = 0; e < fine.num_elements(); ++e) d.local_elems[0][e] = e;
  d.local_dofs.resize(1);
  d.local_dofs[0].resize(fine.num_free());
  for (Index i = 0; i < fine.num_free(); ++i) d.local_dofs[0][i] = i;
  d.H = fine.domain.longest_extent() * std::sqrt(double(fine.dim));
  d.h = fine.mesh_size;
  d.color = {0};
  d.num_colors = 1;
  d.n_fine = fine.num_free();
  return d;
}

Vector restrict_to(const Vector& v, const Decomposition& d, Index l) {
  const auto& idx = d.local_dofs.at(l);
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(k) = v(idx[k]);
  return out;
}

void extend_add(const Vector& v_l, const Decomposition& d, Index l, Vector& out) {
  const auto& idx = d.local_dofs.at(l);
  if (v_l.size() != static_cast<Index>(idx.size())) throw DimensionError("extend: local vector has wrong length");
  for (std::size_t k = 0; k < idx.size(); ++k) out(idx[k]) += v_l(k);
}

Vector extend_from(const Vector& v_l, const Decomposition& d, Index l) {
  Vector out = Vector::Zero(d.n_fine);
  extend_add(v_l, d, l, out);
  return out;
}

LocalPencil local_pencil(const FeProblem& p, const Decomposition& d, Index l) {
  const auto& idx = d.local_dofs.at(l);
  return {principal_submatrix(p.stiffness, std::span<const Index>(idx)),
          principal_submatrix(p.mass, std::span<const Index>(idx))};
}

LocalShiftedOperator::LocalShiftedOperator(const LocalPencil& pencil, Index subdomain, double shift)
    : matrix_(pencil.stiffness), subdomain_(subdomain), shift_(shift) {
  // K and M share the assembled pattern, so the shifted matrix reuses it.
  auto v = matrix_.values();
  const auto m = pencil.mass.values();
  if (m.size() != v.size()) throw ContractViolation("local stiffness and mass patterns differ");
  for (std::size_t k = 0; k < v.size(); ++k) v[k] -= shift * m[k];
}

std::pair<Vector, CgReport> LocalShiftedOperator::solve(const Vector& rhs, const CgOptions& options) const {
  try {
    return cg_solve<double>([this](const Vector& in, Vector& out) { apply(in, out); }, rhs, options);
  } catch (const IndefiniteOperatorError& e) {
    throw ShiftSafetyError("local", subdomain_, shift_, e.what());
  }
}

LocalShiftedOperator local_shifted_operator(const FeProblem& p, const Decomposition& d, Index l, double shift) {
  return LocalShiftedOperator(local_pencil(p, d, l), l, shift);
}

}  // namespace bpjd
