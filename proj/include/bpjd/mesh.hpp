#pragma once

#include <array>
#include <string>
#include <vector>

#include "bpjd/linalg/csr.hpp"
#include "bpjd/types.hpp"

namespace bpjd {

enum class DomainKind { box, l_shape };

/// Axis-aligned computational domain. An L-shape is its bounding box with one
/// quadrant (2D) or one quarter column (3D) removed:
///   2D: (-pi,pi)^2 \ [0,pi)x(-pi,0]
///   3D: (0,2pi)^2 x (0,pi) \ [pi,2pi)^2 x (0,pi)
struct DomainSpec {
  int dim = 2;
  DomainKind kind = DomainKind::box;
  std::array<double, 3> extents{0.0, 0.0, 0.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  static DomainSpec box(int dim, double extent);
  static DomainSpec l_shape(int dim);

  /// Throws ConfigurationError for anything other than a positive box or the
  /// two supported L-shapes.
  void validate() const;
  double longest_extent() const;
  /// Exact measure of the domain.
  double volume() const;
  std::string name() const;
};

/// Uniform Cartesian cell grid restricted to the active cells of a domain.
/// In 2D every cell is cut along its lower-left to upper-right diagonal into a
/// "lower" triangle (0,0),(1,0),(1,1) and an "upper" one (0,0),(1,1),(0,1); in
/// 3D cells are trilinear hexahedra whose local vertex v sits at offset
/// (v & 1, (v >> 1) & 1, (v >> 2) & 1).
///
/// Nodes are numbered lexicographically with x fastest, then y, then z;
/// elements cell by cell in the same order, lower triangle first.
struct StructuredMesh {
  DomainSpec domain;
  int dim = 2;
  int level = 0;
  /// Cells along the longest extent of the level-0 mesh this one descends from.
  Index coarse_n = 0;
  std::array<Index, 3> cells{1, 1, 1};
  double cell_size = 0.0;
  /// Largest element diameter.
  double mesh_size = 0.0;

  /// Per grid cell (x fastest): whether it belongs to the domain.
  std::vector<char> active;
  /// Per grid cell: index of its first element, or -1 for inactive cells.
  std::vector<Index> cell_first_element;

  /// dim x n_nodes coordinates.
  Matrix nodes;
  /// Integer grid position of each node (unused axes are 0).
  std::vector<std::array<Index, 3>> node_grid;
  /// Grid point -> node index, -1 where no active cell touches the point.
  std::vector<Index> grid_node;

  int vertices_per_element = 3;
  /// Connectivity padded to 8 entries; only the first vertices_per_element are used.
  std::vector<std::array<Index, 8>> elements;
  std::vector<Index> element_cell;
  /// 2D only: 0 for the lower triangle of a cell, 1 for the upper one.
  std::vector<int> element_half;

  std::vector<char> boundary_node;
  /// node -> free dof index or -1 when constrained; dof_node is its inverse.
  std::vector<Index> free_dof;
  std::vector<Index> dof_node;
  /// Element of the next coarser level containing each element (empty at level 0).
  std::vector<Index> parent_element;

  Index num_nodes() const { return static_cast<Index>(node_grid.size()); }
  Index num_elements() const { return static_cast<Index>(elements.size()); }
  Index num_free() const { return static_cast<Index>(dof_node.size()); }
  Index num_cells() const { return cells[0] * cells[1] * cells[2]; }
  Index cell_index(Index i, Index j, Index k) const { return i + cells[0] * (j + cells[1] * k); }
  std::array<Index, 3> cell_position(Index c) const;
  Index grid_index(Index i, Index j, Index k) const {
    return i + (cells[0] + 1) * (j + (cells[1] + 1) * k);
  }
  /// Measure of element e (area in 2D, volume in 3D).
  double element_measure(Index e) const;
};

StructuredMesh build_coarse_mesh(const DomainSpec& spec, Index n_per_axis);

/// Splits every triangle into 4 congruent children and every hex into 8.
StructuredMesh refine_uniform(const StructuredMesh& mesh);

/// Applies refine_uniform `levels` times.
StructuredMesh refine(const StructuredMesh& mesh, int levels);

/// For every fine element, the coarse element containing it. `fine` must be a
/// (possibly multi-level) refinement of `coarse`; otherwise StructuralError.
std::vector<Index> ancestor_elements(const StructuredMesh& coarse, const StructuredMesh& fine);

/// Nodal interpolation of coarse free-dof basis functions onto fine free dofs
/// (fine dofs x coarse dofs). Weights are exact dyadic rationals.
CsrMatrixd prolongation(const StructuredMesh& coarse, const StructuredMesh& fine);

}  // namespace bpjd
