#include <limits>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"

#include "bpjd/linalg/cg.hpp"
#include "bpjd/linalg/csr.hpp"
#include "bpjd/linalg/dense_eig.hpp"

using namespace bpjd;

namespace {

Matrix random_symmetric(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) a(i, j) = a(j, i) = u(rng);
  return a;
}

Matrix random_spd(Index n, std::mt19937_64& rng) {
  const Matrix g = random_symmetric(n, rng);
  return g * g.transpose() + double(n) * Matrix::Identity(n, n);
}

CsrMatrixd laplacian_1d(Index n) {
  std::vector<Triplet<double>> t;
  for (Index i = 0; i < n; ++i) {
    t.push_back({i, i, 2.0});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.0});
  }
  return CsrMatrixd::from_triplets(n, n, std::move(t));
}

auto applier(const CsrMatrixd& A) {
  return [&A](const Vector& in, Vector& out) { spmv_into(A, in, out); };
}

}  // namespace

TEST_CASE("csr construction validates structure") {
  CHECK_THROWS_AS(CsrMatrixd(2, 2, {0, 1}, {0}, {1.0}), DimensionError);
  CHECK_THROWS_AS(CsrMatrixd(1, 2, {0, 2}, {1, 0}, {1.0, 1.0}), DimensionError);
  const auto A = CsrMatrixd::from_triplets(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}, {1, 0, -1.0}});
  CHECK(A.nnz() == 2);
  CHECK(A.coeff(0, 0) == 3.0);
  CHECK(A.coeff(1, 0) == -1.0);
  CHECK(A.coeff(0, 1) == 0.0);
}

TEST_CASE("spmv") {
  const auto I = CsrMatrixd::identity(4);
  const Vector x = Vector::LinSpaced(4, 1.0, 4.0);
  CHECK((I * x - x).norm() == 0.0);

  Matrix a2(2, 2);
  a2 << 2, -1, -1, 2;
  const auto A = CsrMatrixd::from_dense(a2);
  CHECK((A * Vector::Ones(2) - Vector::Ones(2)).norm() == 0.0);
  CHECK_THROWS_AS(spmv(A, Vector::Ones(3)), DimensionError);

  std::mt19937_64 rng(7);
  const Matrix dense = random_symmetric(50, rng);
  const auto S = CsrMatrixd::from_dense(dense);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector u = Vector::Random(50), v = Vector::Random(50);
    const double lhs = (S * u).dot(v);
    const double rhs = u.dot(S * v);
    CHECK(std::abs(lhs - rhs) <= 1e-13 * std::abs(lhs) + 1e-13);
    CHECK(((S * u) - dense * u).norm() <= 1e-13 * (dense * u).norm());
    const double alpha = 1.7, beta = -0.3;
    const Vector lin = S * (alpha * u + beta * v);
    CHECK((lin - (alpha * (S * u) + beta * (S * v))).norm() <= 1e-13 * lin.norm());
  }
}

TEST_CASE("sparse products and submatrices") {
  std::mt19937_64 rng(11);
  const Matrix a = random_symmetric(12, rng);
  Matrix p = Matrix::Zero(12, 5);
  for (Index i = 0; i < 12; ++i) p(i, i % 5) = 0.5 + 0.1 * double(i);
  const auto A = CsrMatrixd::from_dense(a);
  const auto P = CsrMatrixd::from_dense(p);
  const auto G = galerkin_product(A, P);
  CHECK(G.is_symmetric());
  CHECK((G.to_dense() - p.transpose() * a * p).norm() <= 1e-13 * a.norm());
  CHECK((A.transpose().to_dense() - a.transpose()).norm() == 0.0);

  const std::vector<Index> keep{1, 4, 7};
  const auto sub = principal_submatrix(A, keep);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(sub.coeff(i, j) == a(keep[i], keep[j]));
}

TEST_CASE("cg: identity converges in one iteration") {
  const auto I = CsrMatrixd::identity(10);
  const Vector b = Vector::LinSpaced(10, -1.0, 2.0);
  auto [x, rep] = cg_solve<double>(applier(I), b);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
  CHECK((x - b).norm() <= 1e-15);
}

TEST_CASE("cg: 1D Laplacian against a tridiagonal direct solve") {
  const Index n = 50;
  const auto A = laplacian_1d(n);
  Vector b = Vector::Zero(n);
  b(0) = 1.0;

  // Thomas algorithm oracle.
  Vector c(n), d(n), ref(n);
  c(0) = -1.0 / 2.0;
  d(0) = b(0) / 2.0;
  for (Index i = 1; i < n; ++i) {
    const double m = 2.0 + c(i - 1);
    c(i) = -1.0 / m;
    d(i) = (b(i) + d(i - 1)) / m;
  }
  ref(n - 1) = d(n - 1);
  for (Index i = n - 2; i >= 0; --i) ref(i) = d(i) - c(i) * ref(i + 1);
  // Closed form for e_1: x_i = (n - i) / (n + 1) with 0-based i.
  for (Index i = 0; i < n; ++i) CHECK(ref(i) == doctest::Approx(double(n - i) / double(n + 1)).epsilon(1e-13));

  auto [x, rep] = cg_solve<double>(applier(A), b, CgOptions{.tol_rel = 1e-12});
  CHECK(rep.converged);
  CHECK(rep.relative_residual <= 1e-12);
  CHECK((A * x - b).norm() <= 1e-12 * b.norm());
  CHECK((x - ref).norm() <= 1e-9 * ref.norm());
}

TEST_CASE("cg: A-norm of the error is non-increasing") {
  const Index n = 60;
  const auto A = laplacian_1d(n);
  const Vector exact = Vector::LinSpaced(n, 0.0, 1.0).array().sin();
  const Vector b = A * exact;
  std::vector<double> errs;
  CgOptions opt;
  opt.on_iterate = [&](const Vector& x) {
    const Vector e = x - exact;
    errs.push_back(std::sqrt(e.dot(A * e)));
  };
  auto [x, rep] = cg_solve<double>(applier(A), b, opt);
  CHECK(rep.converged);
  REQUIRE(errs.size() >= 2);
  for (std::size_t k = 1; k < errs.size(); ++k) CHECK(errs[k] <= errs[k - 1] * (1 + 1e-12) + 1e-14);
}

TEST_CASE("cg: deflation removes the null space of a Neumann Laplacian") {
  const Index n = 40;
  std::vector<Triplet<double>> t;
  for (Index i = 0; i < n; ++i) {
    const double deg = (i == 0 || i == n - 1) ? 1.0 : 2.0;
    t.push_back({i, i, deg});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.0});
  }
  const auto A = CsrMatrixd::from_triplets(n, n, std::move(t));
  const auto I = CsrMatrixd::identity(n);
  const Matrix ones = Matrix::Constant(n, 1, 1.0 / std::sqrt(double(n)));
  const DeflationSpace<double> defl(ones, I);

  Vector b = Vector::LinSpaced(n, -1.0, 3.0);
  auto [x, rep] = cg_solve<double>(applier(A), b, {}, &defl);
  CHECK(rep.converged);
  CHECK(std::abs(x.sum()) < 1e-12 * x.norm() * std::sqrt(double(n)));
  Vector bp = b;
  defl.project_dual(bp);
  CHECK((A * x - bp).norm() <= 1e-10 * bp.norm());
}

TEST_CASE("cg: indefiniteness is detected") {
  Matrix a = Matrix::Identity(3, 3);
  a(2, 2) = -1.0;
  const auto A = CsrMatrixd::from_dense(a);
  CHECK_THROWS_AS(cg_solve<double>(applier(A), Vector(Vector::Unit(3, 2))), IndefiniteOperatorError);
}

TEST_CASE("cg: zero rhs and non-convergence reporting") {
  const auto A = laplacian_1d(30);
  auto [x0, r0] = cg_solve<double>(applier(A), Vector(Vector::Zero(30)));
  CHECK(r0.converged);
  CHECK(x0.norm() == 0.0);
  auto [x1, r1] = cg_solve<double>(applier(A), Vector(Vector::Ones(30)), CgOptions{.tol_rel = 1e-14, .max_it = 2});
  CHECK_FALSE(r1.converged);
  CHECK(r1.iterations == 2);
  CHECK(r1.relative_residual > 1e-14);
}

TEST_CASE("dense_sym_eig: small known cases") {
  Matrix d = Vector(Eigen::Vector3d(3, 1, 2)).asDiagonal();
  auto e = dense_sym_eig(d);
  CHECK(e.values(0) == 1.0);
  CHECK(e.values(1) == 2.0);
  CHECK(e.values(2) == 3.0);
  CHECK(std::abs(e.vectors(1, 0)) == 1.0);
  CHECK(std::abs(e.vectors(2, 1)) == 1.0);
  CHECK(std::abs(e.vectors(0, 2)) == 1.0);

  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  auto s = dense_sym_eig(swap);
  CHECK(s.values(0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(s.values(1) == doctest::Approx(1.0).epsilon(1e-15));

  Matrix bad(2, 2);
  bad << 1, 2, 0, 1;
  CHECK_THROWS_AS(dense_sym_eig(bad), ContractViolation);
}

TEST_CASE("dense_sym_eig: random matrices against an independent solver") {
  std::mt19937_64 rng(3);
  for (Index n : {1, 2, 5, 20, 60}) {
    const Matrix a = random_symmetric(n, rng);
    const auto e = dense_sym_eig(a);
    const Matrix& v = e.vectors;
    CHECK((a * v - v * e.values.asDiagonal()).norm() <= 1e-12 * a.norm());
    CHECK((v * e.values.asDiagonal() * v.transpose() - a).norm() < 1e-11);
    CHECK((v.transpose() * v - Matrix::Identity(n, n)).norm() < 1e-11);
    for (Index i = 1; i < n; ++i) CHECK(e.values(i - 1) <= e.values(i));
    Eigen::SelfAdjointEigenSolver<Matrix> oracle(a);
    CHECK((oracle.eigenvalues() - e.values).cwiseAbs().maxCoeff() <= 1e-12 * a.norm());
  }
}

TEST_CASE("dense_sym_eig: repeated eigenvalues") {
  std::mt19937_64 rng(5);
  const Matrix q = Eigen::HouseholderQR<Matrix>(random_symmetric(8, rng)).householderQ();
  Vector lam(8);
  lam << 1, 1, 1, 2, 2, 5, 5, 5;
  const Matrix a = q * lam.asDiagonal() * q.transpose();
  const auto e = dense_sym_eig(Matrix((a + a.transpose()) / 2));
  CHECK((e.values - lam).cwiseAbs().maxCoeff() < 1e-13 * 5);
  CHECK((a * e.vectors - e.vectors * e.values.asDiagonal()).norm() <= 1e-12 * a.norm());
}

TEST_CASE("dense_generalized_eig") {
  Matrix a = Vector(Eigen::Vector2d(2, 8)).asDiagonal();
  Matrix b = Vector(Eigen::Vector2d(1, 2)).asDiagonal();
  const auto e = dense_generalized_eig(a, b);
  CHECK(e.values(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(e.values(1) == doctest::Approx(4.0).epsilon(1e-14));

  std::mt19937_64 rng(9);
  const Matrix s = random_symmetric(6, rng);
  const auto plain = dense_sym_eig(s);
  const auto gen = dense_generalized_eig(s, Matrix(Matrix::Identity(6, 6)));
  CHECK((plain.values - gen.values).norm() < 1e-13 * s.norm());

  const Matrix A = random_symmetric(15, rng);
  const Matrix B = random_spd(15, rng);
  const auto g = dense_generalized_eig(A, B);
  const Matrix& V = g.vectors;
  CHECK((A * V - B * V * g.values.asDiagonal()).norm() < 1e-10 * (A.norm() + B.norm()));
  CHECK((V.transpose() * B * V - Matrix::Identity(15, 15)).norm() < 1e-11);
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> oracle(A, B);
  CHECK((oracle.eigenvalues() - g.values).cwiseAbs().maxCoeff() < 1e-11);

  Matrix indefinite = Matrix::Identity(3, 3);
  indefinite(1, 1) = -2.0;
  CHECK_THROWS_AS(dense_generalized_eig(Matrix(Matrix::Identity(3, 3)), indefinite), DefinitenessError);
}

TEST_CASE("trace identity: exact special cases") {
  std::mt19937_64 rng(13);
  const Matrix a = random_symmetric(6, rng);
  CHECK(trace_identity_residual(a, Matrix(Matrix::Identity(6, 6)), Vector(Vector::Zero(6))) == 0.0);

  Matrix a1(1, 1), b1(1, 1);
  a1 << 3.7;
  b1 << 0.45;
  Vector d1(1);
  d1 << -12.0;
  // Both sides are about 8; allow a few ulps.
  CHECK(trace_identity_residual(a1, b1, d1) < 8 * 8 * std::numeric_limits<double>::epsilon());

  CHECK_THROWS_AS(trace_identity_residual(a, Matrix(Matrix::Identity(5, 5)), Vector(Vector::Zero(6))),
                  DimensionError);
  Matrix negative = -Matrix::Identity(6, 6);
  CHECK_THROWS_AS(trace_identity_residual(a, negative, Vector(Vector::Zero(6))), DefinitenessError);
}

TEST_CASE("trace identity: 100 random instances") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  int checked = 0;
  while (checked < 100) {
    const Matrix a = random_symmetric(5, rng);
    const Matrix b = Matrix::Identity(5, 5) + 0.1 * random_symmetric(5, rng);
    if (Eigen::SelfAdjointEigenSolver<Matrix>(b).eigenvalues().minCoeff() <= 0) continue;
    Vector d(5);
    for (Index i = 0; i < 5; ++i) d(i) = normal(rng);
    CHECK(trace_identity_residual(a, b, d) < 1e-10);
    ++checked;
  }
}
