#include <random>

#include "doctest.h"

#include "bpjd/errors.hpp"
#include "bpjd/solver.hpp"

using namespace bpjd;

namespace {

SolverConfig config(Index s, SubspacePolicy policy = SubspacePolicy::fixed_2s) {
  SolverConfig c;
  c.s = s;
  c.policy = policy;
  c.tau = 0;
  c.overlap_ratio = 0.5;
  return c;
}

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

}  // namespace

TEST_CASE("config validation and policy names") {
  SolverConfig c;
  c.s = 0;
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  c = {};
  c.tol = 0;
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  c = {};
  c.tau = -1;
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  c = {};
  c.overlap_ratio = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  CHECK(SolverConfig{}.policy == SubspacePolicy::fixed_2s);
  CHECK(SolverConfig{}.tol == 1e-10);
  CHECK(SolverConfig{}.tau == 1);
  CHECK(SolverConfig{}.max_outer == 100);
  for (auto p : {SubspacePolicy::fixed_2s, SubspacePolicy::fixed_3s, SubspacePolicy::growing})
    CHECK(parse_policy(to_string(p)) == p);
  CHECK_THROWS_AS(parse_policy("shrinking"), ConfigurationError);

  auto bad = config(1);
  bad.tau = 3;
  CHECK_THROWS_AS(make_two_level(DomainSpec::box(2, M_PI), 4, 2, bad), ConfigurationError);
}

TEST_CASE("initialization") {
  SolverConfig cfg = config(1);
  cfg.tau = 1;
  const auto setup = make_two_level(DomainSpec::box(2, M_PI), 4, 2, cfg);
  const auto st = initialize(setup.problem, setup.init_prolongation, cfg);
  const auto& p = setup.problem;
  CHECK(max_abs(st.U.transpose() * spmm(p.mass, st.U) - Matrix::Identity(1, 1)) < 1e-10);
  // Refined initial space: below the coarse value, above the continuum one.
  CHECK(st.lambdas(0) > 2.0);
  CHECK(st.lambdas(0) < setup.coarse_spectral->eigvals(0));
  const double lh = coarse_eigs(p.stiffness, p.mass, 1).values(0);
  CHECK(st.lambdas(0) >= lh);

  SolverConfig six = config(6);
  six.tau = 1;
  const auto st6 = initialize(setup.problem, setup.init_prolongation, six);
  const auto ref = coarse_eigs(p.stiffness, p.mass, 6).values;
  for (int i = 0; i < 6; ++i) CHECK(st6.lambdas(i) >= ref(i) - 1e-12);
  CHECK(max_abs(st6.U.transpose() * spmm(p.mass, st6.U) - Matrix::Identity(6, 6)) < 1e-10);
}

TEST_CASE("block residuals") {
  const auto cfg = config(3);
  const auto setup = make_two_level(DomainSpec::box(2, M_PI), 4, 1, cfg);
  const auto& p = setup.problem;
  SolverState st = initialize(p, setup.init_prolongation, cfg);
  const Matrix R = block_residuals(p, st);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(R.col(i).dot(st.U.col(i))) < 1e-12);

  const auto exact = coarse_eigs(p.stiffness, p.mass, 3);
  st.U = exact.vectors;
  st.lambdas = exact.values;
  CHECK(max_abs(block_residuals(p, st)) < 1e-12);
}

TEST_CASE("correction projector") {
  const auto cfg = config(3);
  const auto setup = make_two_level(DomainSpec::l_shape(2), 4, 1, cfg);
  const auto& p = setup.problem;
  const SolverState st = initialize(p, setup.init_prolongation, cfg);
  std::mt19937_64 rng(2);

  const Matrix inside = st.U * random_matrix(3, 3, rng);
  CHECK(max_abs(block_correction(p, st, inside)) < 1e-12 * max_abs(inside));

  const Matrix Z = random_matrix(p.n_free, 3, rng);
  const Matrix T = block_correction(p, st, Z);
  CHECK(max_abs(st.U.transpose() * spmm(p.mass, T)) < 1e-10);
  CHECK(max_abs(block_correction(p, st, T) - T) < 1e-13 * max_abs(T));
}

TEST_CASE("Rayleigh-Ritz fixed point") {
  for (auto policy : {SubspacePolicy::fixed_2s, SubspacePolicy::fixed_3s, SubspacePolicy::growing}) {
    const auto cfg = config(3, policy);
    const auto setup = make_two_level(DomainSpec::box(2, M_PI), 4, 1, cfg);
    const auto& p = setup.problem;
    const SolverState st = initialize(p, setup.init_prolongation, cfg);
    const auto next = rayleigh_ritz(p, st, Matrix::Zero(p.n_free, 3), cfg);
    CHECK(max_abs(next.lambdas - st.lambdas) < 1e-12 * st.lambdas.maxCoeff());
    // Same vectors up to sign (values are simple here).
    for (int i = 0; i < 3; ++i) CHECK(std::abs(std::abs(next.U.col(i).dot(p.mass * Vector(st.U.col(i)))) - 1) < 1e-10);
  }
}

TEST_CASE("policies agree at the first iteration") {
  Vector first[3];
  int idx = 0;
  for (auto policy : {SubspacePolicy::fixed_2s, SubspacePolicy::fixed_3s, SubspacePolicy::growing}) {
    auto cfg = config(4, policy);
    cfg.s = 3;
    cfg.max_outer = 1;
    const auto setup = make_two_level(DomainSpec::box(2, M_PI), 4, 2, cfg);
    const auto r = solve(setup, cfg);
    CHECK(r.iterations == 1);
    CHECK(!r.converged);
    first[idx++] = r.lambdas;
  }
  CHECK(max_abs(first[0] - first[1]) < 1e-11);
  CHECK(max_abs(first[0] - first[2]) < 1e-11);
}

TEST_CASE("preconditioner: linearity, mass symmetry and exact inverse") {
  const auto cfg = config(3);
  const auto setup = make_two_level(DomainSpec::box(2, M_PI), 4, 2, cfg);
  const auto& p = setup.problem;
  const TwoLevelPreconditioner prec(p, setup.decomposition, &*setup.coarse_spectral);
  std::mt19937_64 rng(4);
  const double shift = 1.9;
  const Matrix r = random_matrix(p.n_free, 2, rng);
  const Vector a = prec.apply(shift, r.col(0)), b = prec.apply(shift, r.col(1));
  const Vector ab = prec.apply(shift, Vector(r.col(0) + r.col(1)));
  CHECK((ab - a - b).norm() <= 1e-9 * ab.norm());

  // b-symmetry of r -> B^{-1} M r.
  const Vector Fa = prec.apply(shift, p.mass * Vector(r.col(0)));
  const Vector Fb = prec.apply(shift, p.mass * Vector(r.col(1)));
  const double lhs = Fa.dot(p.mass * Vector(r.col(1))), rhs = (p.mass * Vector(r.col(0))).dot(Fb);
  CHECK(std::abs(lhs - rhs) <= 1e-9 * std::abs(lhs));

  // apply_block uses one shift per column.
  Vector shifts(2);
  shifts << 1.9, 0.5;
  const Matrix Z = prec.apply_block(shifts, r);
  CHECK((Z.col(0) - a).norm() == 0.0);
  CHECK((Z.col(1) - prec.apply(0.5, r.col(1))).norm() == 0.0);

  // N = 1 without coarse term at zero shift is K^{-1}: inverse iteration finds lambda_1^h.
  const auto whole = single_subdomain(*setup.fine);
  const TwoLevelPreconditioner exact(p, whole, nullptr);
  Vector u = Vector::Ones(p.n_free);
  double rq = 0;
  for (int it = 0; it < 60; ++it) {
    u = exact.apply(0.0, p.mass * u);
    u /= std::sqrt(u.dot(p.mass * u));
    rq = rayleigh_quotient(p, u);
  }
  CHECK(std::abs(rq - coarse_eigs(p.stiffness, p.mass, 1).values(0)) < 1e-10);
}

TEST_CASE("converged result: Ritz invariants, monotonicity, bracketing") {
  for (auto policy : {SubspacePolicy::fixed_2s, SubspacePolicy::fixed_3s, SubspacePolicy::growing}) {
    CAPTURE(to_string(policy));
    auto cfg = config(4, policy);
    cfg.s = 3;
    const auto setup = make_two_level(DomainSpec::l_shape(2), 4, 2, cfg);
    const auto& p = setup.problem;
    const auto r = solve(setup, cfg);
    REQUIRE(r.converged);
    CHECK(r.stop_value < cfg.tol);
    CHECK(r.iterations == static_cast<int>(r.history.size()));
    CHECK(r.monotonicity_violations == 0);
    CHECK(max_abs(r.U.transpose() * spmm(p.mass, r.U) - Matrix::Identity(3, 3)) < 1e-10);
    CHECK(max_abs(r.U.transpose() * spmm(p.stiffness, r.U) - Matrix(r.lambdas.asDiagonal())) < 1e-9);

    const auto ref = coarse_eigs(p.stiffness, p.mass, 3).values;
    Vector prev = r.init.lambdas_init;
    for (const auto& rec : r.history) {
      for (int i = 0; i < 3; ++i) {
        CHECK(rec.lambdas(i) <= prev(i) + 1e-12);
        CHECK(rec.lambdas(i) >= ref(i) - 1e-10);
      }
      prev = rec.lambdas;
    }
    CHECK(max_abs(r.lambdas - ref) < 1e-8);
  }
}

TEST_CASE("runs are bitwise reproducible, also with threads") {
  auto cfg = config(3, SubspacePolicy::fixed_3s);
  const auto setup = make_two_level(DomainSpec::box(2, M_PI), 4, 2, cfg);
  const auto a = solve(setup, cfg);
  cfg.threads = 3;
  const auto b = solve(setup, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    CHECK(a.history[k].lambdas == b.history[k].lambdas);
    CHECK(a.history[k].sum_delta == b.history[k].sum_delta);
  }
  CHECK(a.U == b.U);
}

TEST_CASE("iteration cap gives a non-converged result") {
  auto cfg = config(3);
  cfg.max_outer = 2;
  const auto r = solve(make_two_level(DomainSpec::box(2, M_PI), 4, 2, cfg), cfg);
  CHECK(!r.converged);
  CHECK(r.iterations == 2);
  CHECK(r.history.size() == 2);
  CHECK(r.stop_value == r.history.back().sum_delta);
}

TEST_CASE("whole-domain subdomain cannot take the Ritz shift") {
  // (0,pi) x (0,pi/2) with 4 x 2 cells: a single row of three interior nodes.
  // With one subdomain covering everything, the local operator K - lambda M with
  // lambda >= lambda_1 is not positive definite and the solve must refuse it.
  DomainSpec strip = DomainSpec::box(2, M_PI);
  strip.extents[1] = M_PI / 2;
  strip.validate();
  auto mesh = std::make_shared<StructuredMesh>(refine(build_coarse_mesh(strip, 2), 1));
  const auto p = assemble(mesh);
  REQUIRE(p.n_free == 3);

  auto cfg = config(1);
  cfg.use_coarse = false;
  const auto d = single_subdomain(*mesh);
  const TwoLevelPreconditioner prec(p, d, nullptr);
  Matrix start = Matrix::Zero(3, 1);
  start(1, 0) = 1.0;
  const auto st = initialize_from(p, CsrMatrixd::identity(3), start, cfg);
  try {
    (void)solve(p, prec, cfg, st);
    FAIL("expected a shift-safety error");
  } catch (const ShiftSafetyError& e) {
    CHECK(e.component() == "local");
    CHECK(e.subdomain() == 0);
    CHECK(e.shift() >= coarse_eigs(p.stiffness, p.mass, 1).values(0));
  }
}
