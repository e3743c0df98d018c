#include "bpjd/mesh.hpp"

#include <cmath>
#include <numbers>

#include "bpjd/errors.hpp"

namespace bpjd {

namespace {

constexpr double kPi = std::numbers::pi;

bool same_domain(const DomainSpec& a, const DomainSpec& b) {
  return a.dim == b.dim && a.kind == b.kind && a.extents == b.extents && a.origin == b.origin;
}

std::array<Index, 3> grid_points(const StructuredMesh& m) {
  std::array<Index, 3> pts{1, 1, 1};
  for (int d = 0; d < m.dim; ++d) pts[d] = m.cells[d] + 1;
  return pts;
}

bool cell_is_active(const DomainSpec& spec, const std::array<Index, 3>& cells, Index i, Index j) {
  if (spec.kind == DomainKind::box) return true;
  const Index half = cells[0] / 2;
  if (spec.dim == 2) return !(i >= half && j < half);
  return !(i >= half && j >= half);
}

StructuredMesh build_grid(const DomainSpec& spec, Index coarse_n, int level) {
  spec.validate();
  if (coarse_n < 2) throw ConfigurationError("n_per_axis must be at least 2 (got " + std::to_string(coarse_n) + ")");
  if (spec.kind == DomainKind::l_shape && coarse_n % 2 != 0)
    throw ConfigurationError("L-shaped domains need an even n_per_axis so the notch aligns with cells (got " +
                             std::to_string(coarse_n) + ")");

  StructuredMesh m;
  m.domain = spec;
  m.dim = spec.dim;
  m.level = level;
  m.coarse_n = coarse_n;
  const Index n = coarse_n << level;
  m.cell_size = spec.longest_extent() / double(n);
  for (int d = 0; d < spec.dim; ++d) {
    const double ratio = spec.extents[d] / m.cell_size;
    const Index c = std::llround(ratio);
    if (c < 1 || std::abs(ratio - double(c)) > 1e-9 * ratio)
      throw ConfigurationError("domain extent along axis " + std::to_string(d) +
                               " is not a whole number of cells");
    m.cells[d] = c;
  }
  m.mesh_size = m.cell_size * std::sqrt(double(spec.dim));

  m.active.assign(m.num_cells(), 0);
  for (Index c = 0; c < m.num_cells(); ++c) {
    const auto p = m.cell_position(c);
    m.active[c] = cell_is_active(spec, m.cells, p[0], p[1]) ? 1 : 0;
  }
  auto active_at = [&](Index i, Index j, Index k) {
    if (i < 0 || j < 0 || k < 0 || i >= m.cells[0] || j >= m.cells[1] || k >= m.cells[2]) return false;
    return m.active[m.cell_index(i, j, k)] != 0;
  };

  // Nodes: every grid point touched by an active cell.
  const auto pts = grid_points(m);
  const Index around = Index(1) << spec.dim;
  m.grid_node.assign(pts[0] * pts[1] * pts[2], -1);
  std::vector<std::array<double, 3>> coords;
  for (Index k = 0; k < pts[2]; ++k)
    for (Index j = 0; j < pts[1]; ++j)
      for (Index i = 0; i < pts[0]; ++i) {
        Index touching = 0;
        for (Index o = 0; o < around; ++o) {
          const Index ci = i - 1 + (o & 1);
          const Index cj = j - 1 + ((o >> 1) & 1);
          const Index ck = spec.dim == 3 ? k - 1 + ((o >> 2) & 1) : 0;
          if (active_at(ci, cj, ck)) ++touching;
        }
        if (touching == 0) continue;
        m.grid_node[m.grid_index(i, j, k)] = m.num_nodes();
        m.node_grid.push_back({i, j, k});
        m.boundary_node.push_back(touching < around ? 1 : 0);
        coords.push_back({spec.origin[0] + double(i) * m.cell_size, spec.origin[1] + double(j) * m.cell_size,
                          spec.origin[2] + double(k) * m.cell_size});
      }
  m.nodes.resize(spec.dim, m.num_nodes());
  for (Index v = 0; v < m.num_nodes(); ++v)
    for (int d = 0; d < spec.dim; ++d) m.nodes(d, v) = coords[v][d];

  m.free_dof.assign(m.num_nodes(), -1);
  for (Index v = 0; v < m.num_nodes(); ++v) {
    if (m.boundary_node[v]) continue;
    m.free_dof[v] = static_cast<Index>(m.dof_node.size());
    m.dof_node.push_back(v);
  }

  // Elements.
  m.vertices_per_element = spec.dim == 2 ? 3 : 8;
  m.cell_first_element.assign(m.num_cells(), -1);
  auto node_at = [&](Index i, Index j, Index k) { return m.grid_node[m.grid_index(i, j, k)]; };
  for (Index c = 0; c < m.num_cells(); ++c) {
    if (!m.active[c]) continue;
    const auto [i, j, k] = m.cell_position(c);
    m.cell_first_element[c] = m.num_elements();
    if (spec.dim == 2) {
      m.elements.push_back({node_at(i, j, 0), node_at(i + 1, j, 0), node_at(i + 1, j + 1, 0)});
      m.elements.push_back({node_at(i, j, 0), node_at(i + 1, j + 1, 0), node_at(i, j + 1, 0)});
      m.element_cell.insert(m.element_cell.end(), {c, c});
      m.element_half.insert(m.element_half.end(), {0, 1});
    } else {
      std::array<Index, 8> hex{};
      for (int v = 0; v < 8; ++v) hex[v] = node_at(i + (v & 1), j + ((v >> 1) & 1), k + ((v >> 2) & 1));
      m.elements.push_back(hex);
      m.element_cell.push_back(c);
    }
  }
  return m;
}

struct Nesting {
  Index ratio;
};

Nesting check_nesting(const StructuredMesh& coarse, const StructuredMesh& fine) {
  if (!same_domain(coarse.domain, fine.domain))
    throw StructuralError("meshes are not nested: they discretize different domains");
  if (fine.cells[0] % coarse.cells[0] != 0)
    throw StructuralError("meshes are not nested: fine grid does not subdivide the coarse grid");
  const Index r = fine.cells[0] / coarse.cells[0];
  for (int d = 0; d < coarse.dim; ++d)
    if (fine.cells[d] != r * coarse.cells[d])
      throw StructuralError("meshes are not nested: inconsistent subdivision across axes");
  return {r};
}

}  // namespace

DomainSpec DomainSpec::box(int dim, double extent) {
  DomainSpec s;
  s.dim = dim;
  s.kind = DomainKind::box;
  for (int d = 0; d < dim && d < 3; ++d) s.extents[d] = extent;
  s.validate();
  return s;
}

DomainSpec DomainSpec::l_shape(int dim) {
  DomainSpec s;
  s.dim = dim;
  s.kind = DomainKind::l_shape;
  if (dim == 2) {
    s.extents = {2 * kPi, 2 * kPi, 0.0};
    s.origin = {-kPi, -kPi, 0.0};
  } else {
    s.extents = {2 * kPi, 2 * kPi, kPi};
    s.origin = {0.0, 0.0, 0.0};
  }
  s.validate();
  return s;
}

void DomainSpec::validate() const {
  if (dim != 2 && dim != 3) throw ConfigurationError("domain dimension must be 2 or 3");
  for (int d = 0; d < dim; ++d)
    if (!(extents[d] > 0.0) || !std::isfinite(extents[d]))
      throw ConfigurationError("domain extents must be strictly positive");
  if (kind == DomainKind::l_shape) {
    const auto canonical = [&] {
      constexpr double tol = 1e-12;
      auto near = [](double a, double b) { return std::abs(a - b) <= tol * (1 + std::abs(b)); };
      if (dim == 2)
        return near(extents[0], 2 * kPi) && near(extents[1], 2 * kPi) && near(origin[0], -kPi) &&
               near(origin[1], -kPi);
      return near(extents[0], 2 * kPi) && near(extents[1], 2 * kPi) && near(extents[2], kPi) &&
             near(origin[0], 0) && near(origin[1], 0) && near(origin[2], 0);
    }();
    if (!canonical) throw ConfigurationError("only the standard 2D and 3D L-shaped domains are supported");
  }
}

double DomainSpec::longest_extent() const {
  double e = 0;
  for (int d = 0; d < dim; ++d) e = std::max(e, extents[d]);
  return e;
}

double DomainSpec::volume() const {
  double v = 1;
  for (int d = 0; d < dim; ++d) v *= extents[d];
  // The removed part is a quarter of the bounding box in both cases.
  return kind == DomainKind::l_shape ? 0.75 * v : v;
}

std::string DomainSpec::name() const {
  return std::string(kind == DomainKind::box ? "box" : "lshape") + std::to_string(dim) + "d";
}

std::array<Index, 3> StructuredMesh::cell_position(Index c) const {
  return {c % cells[0], (c / cells[0]) % cells[1], c / (cells[0] * cells[1])};
}

double StructuredMesh::element_measure(Index) const {
  return dim == 2 ? 0.5 * cell_size * cell_size : cell_size * cell_size * cell_size;
}

StructuredMesh build_coarse_mesh(const DomainSpec& spec, Index n_per_axis) { return build_grid(spec, n_per_axis, 0); }

StructuredMesh refine_uniform(const StructuredMesh& mesh) {
  StructuredMesh fine = build_grid(mesh.domain, mesh.coarse_n, mesh.level + 1);
  fine.parent_element = ancestor_elements(mesh, fine);
  return fine;
}

StructuredMesh refine(const StructuredMesh& mesh, int levels) {
  if (levels < 0) throw ConfigurationError("refinement levels must be non-negative");
  StructuredMesh m = mesh;
  for (int l = 0; l < levels; ++l) m = refine_uniform(m);
  return m;
}

std::vector<Index> ancestor_elements(const StructuredMesh& coarse, const StructuredMesh& fine) {
  const Index r = check_nesting(coarse, fine).ratio;
  std::vector<Index> parent(fine.num_elements());
  for (Index e = 0; e < fine.num_elements(); ++e) {
    const auto p = fine.cell_position(fine.element_cell[e]);
    const Index cc = coarse.cell_index(p[0] / r, p[1] / r, p[2] / r);
    if (!coarse.active[cc]) throw StructuralError("fine element lies outside the coarse mesh");
    Index idx = coarse.cell_first_element[cc];
    if (fine.dim == 2) {
      // Compare the fine centroid with the coarse diagonal x = y, in units of
      // fine cells scaled by 3 to stay integral.
      const Index a = p[0] - r * (p[0] / r);
      const Index b = p[1] - r * (p[1] / r);
      const bool lower_fine = fine.element_half[e] == 0;
      const Index cx = 3 * a + (lower_fine ? 2 : 1);
      const Index cy = 3 * b + (lower_fine ? 1 : 2);
      if (cx < cy) ++idx;
    }
    parent[e] = idx;
  }
  return parent;
}

CsrMatrixd prolongation(const StructuredMesh& coarse, const StructuredMesh& fine) {
  const Index r = check_nesting(coarse, fine).ratio;
  const int dim = fine.dim;
  std::vector<Triplet<double>> entries;
  entries.reserve(fine.num_free() * (dim == 2 ? 3 : 8));

  for (Index dof = 0; dof < fine.num_free(); ++dof) {
    const auto g = fine.node_grid[fine.dof_node[dof]];
    // Candidate coarse cells containing the node: two per axis when it lies on a grid plane.
    std::array<std::array<Index, 2>, 3> cand{};
    std::array<int, 3> ncand{1, 1, 1};
    for (int d = 0; d < 3; ++d) {
      if (d >= dim) {
        cand[d] = {0, 0};
        continue;
      }
      const Index c = g[d] / r;
      cand[d][0] = std::min(c, coarse.cells[d] - 1);
      if (g[d] % r == 0 && c > 0 && c < coarse.cells[d]) {
        cand[d][1] = c - 1;
        ncand[d] = 2;
      }
    }
    Index cell = -1;
    std::array<Index, 3> cp{};
    for (int a = 0; a < ncand[0] && cell < 0; ++a)
      for (int b = 0; b < ncand[1] && cell < 0; ++b)
        for (int c = 0; c < ncand[2] && cell < 0; ++c) {
          const Index id = coarse.cell_index(cand[0][a], cand[1][b], cand[2][c]);
          if (coarse.active[id]) {
            cell = id;
            cp = {cand[0][a], cand[1][b], cand[2][c]};
          }
        }
    if (cell < 0) throw StructuralError("fine node is not covered by any coarse cell");

    std::array<double, 3> xi{0, 0, 0};
    for (int d = 0; d < dim; ++d) xi[d] = double(g[d] - r * cp[d]) / double(r);

    std::array<double, 8> w{};
    Index first = coarse.cell_first_element[cell];
    if (dim == 2) {
      if (xi[0] >= xi[1]) {
        w = {1 - xi[0], xi[0] - xi[1], xi[1]};
      } else {
        ++first;
        w = {1 - xi[1], xi[0], xi[1] - xi[0]};
      }
    } else {
      for (int v = 0; v < 8; ++v) {
        double p = 1;
        for (int d = 0; d < 3; ++d) p *= ((v >> d) & 1) ? xi[d] : 1 - xi[d];
        w[v] = p;
      }
    }
    const auto& verts = coarse.elements[first];
    for (int v = 0; v < coarse.vertices_per_element; ++v) {
      const Index col = coarse.free_dof[verts[v]];
      if (col >= 0 && w[v] != 0.0) entries.push_back({dof, col, w[v]});
    }
  }
  return CsrMatrixd::from_triplets(fine.num_free(), coarse.num_free(), std::move(entries));
}

}  // namespace bpjd
