#include <random>
#include <set>

#include "doctest.h"

#include "bpjd/coarse.hpp"
#include "bpjd/decomposition.hpp"
#include "bpjd/errors.hpp"

using namespace bpjd;

namespace {

struct Pair {
  std::shared_ptr<StructuredMesh> coarse, fine;
};

Pair meshes(const DomainSpec& spec, Index n, int levels) {
  auto c = std::make_shared<StructuredMesh>(build_coarse_mesh(spec, n));
  auto f = std::make_shared<StructuredMesh>(refine(*c, levels));
  return {c, f};
}

}  // namespace

TEST_CASE("single subdomain holds every dof") {
  const auto m = meshes(DomainSpec::box(2, M_PI), 4, 1);
  const auto d = single_subdomain(*m.fine);
  REQUIRE(d.N == 1);
  REQUIRE(d.local_dofs[0].size() == static_cast<std::size_t>(m.fine->num_free()));
  for (Index i = 0; i < m.fine->num_free(); ++i) CHECK(d.local_dofs[0][i] == i);
  CHECK(d.local_elems[0].size() == static_cast<std::size_t>(m.fine->num_elements()));
}

TEST_CASE("coverage and overlap ratio") {
  for (const auto& [spec, ratio] : std::vector<std::pair<DomainSpec, double>>{
           {DomainSpec::box(2, M_PI), 0.25}, {DomainSpec::l_shape(2), 0.25}, {DomainSpec::box(3, M_PI), 0.5}}) {
    CAPTURE(spec.name());
    const auto m = meshes(spec, 4, 2);
    const int layers = overlap_layers_for_ratio(*m.coarse, *m.fine, ratio);
    const auto d = build_decomposition(*m.coarse, *m.fine, layers);
    CHECK(d.N == m.coarse->num_elements());
    CHECK(std::abs(d.delta / d.H - ratio) <= d.h / d.H);

    std::vector<int> elem_count(m.fine->num_elements(), 0);
    for (const auto& le : d.local_elems)
      for (Index e : le) ++elem_count[e];
    for (int c : elem_count) CHECK(c >= 1);

    Vector cover = Vector::Zero(m.fine->num_free());
    for (Index l = 0; l < d.N; ++l) extend_add(restrict_to(Vector::Ones(cover.size()), d, l), d, l, cover);
    CHECK(cover.minCoeff() >= 1.0);

    // Local dof lists are sorted and unique.
    for (const auto& ld : d.local_dofs) CHECK(std::is_sorted(ld.begin(), ld.end()));
  }
}

TEST_CASE("one layer: delta = h and neighbouring subdomains overlap") {
  const auto m = meshes(DomainSpec::box(2, M_PI), 4, 2);
  const auto d = build_decomposition(*m.coarse, *m.fine, 1);
  CHECK(d.delta == doctest::Approx(d.h));
  CHECK(d.N == 32);
  // Coarse elements sharing an edge: their grown subdomains share fine elements.
  const auto& c = *m.coarse;
  for (Index a = 0; a < c.num_elements(); ++a)
    for (Index b = a + 1; b < c.num_elements(); ++b) {
      int shared = 0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) shared += c.elements[a][i] == c.elements[b][j];
      if (shared != 2) continue;
      std::set<Index> ea(d.local_elems[a].begin(), d.local_elems[a].end());
      bool overlap = false;
      for (Index e : d.local_elems[b]) overlap = overlap || ea.count(e) > 0;
      CHECK(overlap);
    }
}

TEST_CASE("coloring is proper and bounded") {
  const auto m = meshes(DomainSpec::box(2, M_PI), 4, 2);
  const auto d = build_decomposition(*m.coarse, *m.fine, overlap_layers_for_ratio(*m.coarse, *m.fine, 0.25));
  CHECK(d.N == 32);
  CHECK(d.num_colors <= 8);
  for (Index a = 0; a < d.N; ++a) {
    std::set<Index> ea(d.local_elems[a].begin(), d.local_elems[a].end());
    for (Index b = a + 1; b < d.N; ++b) {
      bool overlap = false;
      for (Index e : d.local_elems[b]) overlap = overlap || ea.count(e) > 0;
      if (overlap) CHECK(d.color[a] != d.color[b]);
    }
  }

  // Fixed layer count under refinement keeps the color count.
  const auto m3 = meshes(DomainSpec::box(2, M_PI), 4, 3);
  const auto d3 = build_decomposition(*m3.coarse, *m3.fine, 1);
  const auto d2 = build_decomposition(*m.coarse, *m.fine, 1);
  CHECK(d3.num_colors == d2.num_colors);
}

TEST_CASE("rejected overlaps") {
  const auto m = meshes(DomainSpec::box(2, M_PI), 4, 1);
  CHECK_THROWS_AS(build_decomposition(*m.coarse, *m.fine, 0), ConfigurationError);
  CHECK_THROWS_AS(build_decomposition(*m.coarse, *m.fine, 5), ConfigurationError);
  CHECK_THROWS_AS(overlap_layers_for_ratio(*m.coarse, *m.fine, 0.0), ConfigurationError);
  CHECK_THROWS_AS(overlap_layers_for_ratio(*m.coarse, *m.fine, 0.1), ConfigurationError);
}

TEST_CASE("restriction and extension") {
  const auto m = meshes(DomainSpec::l_shape(2), 4, 2);
  const auto d = build_decomposition(*m.coarse, *m.fine, 2);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  const Index n = m.fine->num_free();
  for (int trial = 0; trial < 20; ++trial) {
    const Index l = trial % d.N;
    const Index nl = static_cast<Index>(d.local_dofs[l].size());
    Vector x(nl), y(n);
    for (Index i = 0; i < nl; ++i) x(i) = u(rng);
    for (Index i = 0; i < n; ++i) y(i) = u(rng);
    const Vector ex = extend_from(x, d, l);
    CHECK(restrict_to(ex, d, l) == x);
    // Adjointness: the only products that survive are the same ones on both sides.
    CHECK(ex.dot(y) == doctest::Approx(x.dot(restrict_to(y, d, l))).epsilon(1e-15));
    Index nonzero_outside = 0;
    std::vector<char> mask(n, 0);
    for (Index i : d.local_dofs[l]) mask[i] = 1;
    for (Index i = 0; i < n; ++i) nonzero_outside += (!mask[i] && ex(i) != 0.0);
    CHECK(nonzero_outside == 0);
  }
  CHECK_THROWS_AS(extend_from(Vector::Zero(1), d, 0), DimensionError);
}

TEST_CASE("local shifted operators") {
  const auto m = meshes(DomainSpec::box(2, M_PI), 4, 1);
  const auto p = assemble(m.fine);

  SUBCASE("N = 1 with zero shift inverts K") {
    const auto d = single_subdomain(*m.fine);
    const auto e = coarse_eigs(p.stiffness, p.mass, 1);
    const Vector u = e.vectors.col(0);
    const auto op = local_shifted_operator(p, d, 0, 0.0);
    CHECK(op.matrix().is_symmetric());
    const auto [x, rep] = op.solve(p.mass * u);
    CHECK(rep.converged);
    CHECK((x - u / e.values(0)).norm() <= 1e-10 * u.norm() / e.values(0));
  }

  SUBCASE("shift near 2 is safe on small subdomains") {
    const auto d = build_decomposition(*m.coarse, *m.fine, 1);
    for (Index l = 0; l < d.N; ++l) {
      const auto pencil = local_pencil(p, d, l);
      const auto e = coarse_eigs(pencil.stiffness, pencil.mass, 1);
      CHECK(e.values(0) > 2.0);
      const auto op = local_shifted_operator(p, d, l, 2.0);
      const auto [x, rep] = op.solve(Vector::Ones(op.size()));
      CHECK(rep.converged);
    }
  }

  SUBCASE("shift above the local spectrum is reported") {
    const auto d = build_decomposition(*m.coarse, *m.fine, 1);
    const auto pencil = local_pencil(p, d, 0);
    const double lmax = coarse_eigs(pencil.stiffness, pencil.mass, pencil.stiffness.rows()).values.maxCoeff();
    const auto op = local_shifted_operator(p, d, 0, lmax + 1.0);
    try {
      (void)op.solve(Vector::Ones(op.size()));
      FAIL("expected a shift-safety error");
    } catch (const ShiftSafetyError& err) {
      CHECK(err.component() == "local");
      CHECK(err.subdomain() == 0);
      CHECK(err.shift() == doctest::Approx(lmax + 1.0));
    }
  }
}
