#include "bpjd/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "bpjd/coarse.hpp"
#include "bpjd/errors.hpp"

namespace bpjd {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

SparseMatrix to_eigen(const CsrMatrixd& A) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(A.nnz());
  const auto ptr = A.row_ptr();
  const auto idx = A.col_idx();
  const auto val = A.values();
  for (Index i = 0; i < A.rows(); ++i)
    for (Index k = ptr[i]; k < ptr[i + 1]; ++k) t.emplace_back(i, idx[k], val[k]);
  SparseMatrix S(A.rows(), A.cols());
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

Vector relative_residuals(const FeProblem& p, const Vector& lambdas, const Matrix& U) {
  const Matrix KU = spmm(p.stiffness, U);
  const Matrix MU = spmm(p.mass, U);
  Vector r(lambdas.size());
  for (Index i = 0; i < lambdas.size(); ++i)
    r(i) = (KU.col(i) - lambdas(i) * MU.col(i)).norm() / (std::abs(lambdas(i)) * MU.col(i).norm());
  return r;
}

/// Shift-invert block subspace iteration with Rayleigh-Ritz after every step.
/// Eigenvalue i converges like (lambda_i / lambda_{m+1})^k, so a block twice
/// the requested size keeps the iteration count small.
SymmetricEigen<double> subspace_iteration(const FeProblem& p, Index count) {
  const Index n = p.n_free;
  const Index m = std::min(n, count + std::max<Index>(count, 8));
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(to_eigen(p.stiffness));
  if (ldlt.info() != Eigen::Success) throw DefinitenessError("reference: stiffness factorization failed");

  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix X(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) X(i, j) = dist(rng);

  SymmetricEigen<double> out;
  for (int it = 0; it < 1000; ++it) {
    const Matrix Y = ldlt.solve(spmm(p.mass, X));
    Matrix A = Y.transpose() * spmm(p.stiffness, Y);
    Matrix B = Y.transpose() * spmm(p.mass, Y);
    A = (A + A.transpose()) / 2.0;
    B = (B + B.transpose()) / 2.0;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(A, B);
    if (ges.info() != Eigen::Success) throw DegeneracyError("reference: projected pencil is singular");
    X = Y * ges.eigenvectors();
    const Vector vals = ges.eigenvalues();
    const Vector res = relative_residuals(p, vals.head(count), X.leftCols(count));
    if (res.maxCoeff() < 1e-11) {
      out.values = vals.head(count);
      out.vectors = X.leftCols(count);
      return out;
    }
  }
  throw Error("reference: subspace iteration did not converge");
}

}  // namespace

ReferenceSolution reference_solve(const FeProblem& p, Index s) {
  if (s < 1) throw ConfigurationError("reference: s must be at least 1");
  const Index count = s + 1;
  if (count > p.n_free)
    throw ConfigurationError("reference: " + std::to_string(count) + " pairs requested from " +
                             std::to_string(p.n_free) + " dofs");
  ReferenceSolution ref;
  SymmetricEigen<double> e;
  if (p.n_free <= kDenseReferenceLimit) {
    e = coarse_eigs(p.stiffness, p.mass, count);
    ref.method = "dense";
  } else {
    e = subspace_iteration(p, count);
    ref.method = "subspace_iteration";
  }
  for (Index j = 0; j < count; ++j) {
    Index imax = 0;
    e.vectors.col(j).cwiseAbs().maxCoeff(&imax);
    if (e.vectors(imax, j) < 0) e.vectors.col(j) *= -1.0;
  }
  ref.lambdas = std::move(e.values);
  ref.U = std::move(e.vectors);
  ref.max_relative_residual = relative_residuals(p, ref.lambdas, ref.U).maxCoeff();

  const double lo = ref.lambdas(s - 1), hi = ref.lambdas(s);
  if (!(hi - lo > 1e-8 * std::abs(hi))) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "lambda_s = " << lo << " and lambda_{s+1} = " << hi
        << " are not separated; choose s so that the whole cluster is included";
    ref.gap_ok = false;
    ref.advisory = msg.str();
  }
  return ref;
}

namespace {

/// max over unit x in span(Q1) of the G-distance to span(Q2), Q1 and Q2 G-orthonormal.
double directed_sine(const Matrix& Q1, const Matrix& Q2, const Matrix& GQ2, const CsrMatrixd& G) {
  Matrix R = Q1 - Q2 * (GQ2.transpose() * Q1);
  // One more projection removes what rounding left in the first one.
  R -= Q2 * (GQ2.transpose() * R);
  Matrix S = R.transpose() * spmm(G, R);
  S = (S + S.transpose()) / 2.0;
  const double top = Eigen::SelfAdjointEigenSolver<Matrix>(S, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  return std::sqrt(std::clamp(top, 0.0, 1.0));
}

}  // namespace

double subspace_gap(const Matrix& U1, const Matrix& U2, const CsrMatrixd& G) {
  if (U1.rows() != G.rows() || U2.rows() != G.rows()) throw DimensionError("subspace_gap: basis and metric differ");
  if (U1.cols() == 0 || U2.cols() == 0) throw DegeneracyError("subspace_gap: empty basis");
  const Matrix Q1 = m_orthonormalize(G, U1);
  const Matrix Q2 = m_orthonormalize(G, U2);
  if (Q1.cols() < U1.cols() || Q2.cols() < U2.cols())
    throw DegeneracyError("subspace_gap: basis is rank deficient");
  const Matrix GQ1 = spmm(G, Q1), GQ2 = spmm(G, Q2);
  return std::max(directed_sine(Q1, Q2, GQ2, G), directed_sine(Q2, Q1, GQ1, G));
}

std::pair<double, double> fit_geometric_rate(const std::vector<double>& k, const std::vector<double>& values) {
  const std::size_t n = k.size();
  if (n != values.size()) throw DimensionError("fit: size mismatch");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (n < 2) return {nan, nan};
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += k[i];
    my += std::log(values[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = k[i] - mx, dy = std::log(values[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0) return {nan, nan};
  const double slope = sxy / sxx;
  const double r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return {std::exp(slope), r2};
}

GapReport check_iteration_bounds(const std::vector<IterationRecord>& history, const ReferenceSolution& ref,
                                 const FeProblem& p, const BoundOptions& options) {
  const Index s = ref.s();
  if (s < 1) throw ConfigurationError("bounds: reference holds fewer than 2 pairs");
  GapReport report;
  report.g_evaluated = options.check_g;
  const Matrix Us = ref.U.leftCols(s);
  const Vector lam_h = ref.lambdas.head(s);
  const Vector mu_h = lam_h.cwiseInverse();
  const double lambda_gap = ref.lambdas(s) - ref.lambdas(s - 1);
  const double mu_gap = 1.0 / ref.lambdas(s - 1) - 1.0 / ref.lambdas(s);
  // Rounding floor. Computed Rayleigh quotients (and the reference values) carry
  // errors of order eps * lambda_max, not eps * lambda_i; lambda_max is bounded
  // row-wise by sum|K_ij| / sum M_ij.
  const double eps = std::numeric_limits<double>::epsilon();
  double lam_top = 0.0;
  {
    const auto kp = p.stiffness.row_ptr();
    const auto kv = p.stiffness.values();
    const auto mp = p.mass.row_ptr();
    const auto mv = p.mass.values();
    for (Index i = 0; i < p.n_free; ++i) {
      double k = 0.0, m = 0.0;
      for (Index t = kp[i]; t < kp[i + 1]; ++t) k += std::abs(kv[t]);
      for (Index t = mp[i]; t < mp[i + 1]; ++t) m += mv[t];
      if (m > 0) lam_top = std::max(lam_top, k / m);
    }
  }
  const double lam_floor = 64 * eps * s * std::max(lam_top, ref.lambdas(s));
  const double mu_floor = lam_floor / (lam_h(0) * lam_h(0));

  std::optional<Eigen::SimplicialLDLT<SparseMatrix>> ldlt;
  if (options.check_g) {
    ldlt.emplace(to_eigen(p.stiffness));
    if (ldlt->info() != Eigen::Success) throw DefinitenessError("bounds: stiffness factorization failed");
  }

  std::vector<double> fit_k, fit_v;
  for (const auto& rec : history) {
    if (rec.U.cols() != s || rec.U.rows() != p.n_free)
      throw ConfigurationError("bounds: history lacks Ritz bases of width s (enable record_bases)");
    GapRecord g;
    g.k = rec.k;
    const Vector lam_k = rec.lambdas.head(s);
    g.lambda_error = (lam_k - lam_h).sum();
    g.mu_error = (mu_h - lam_k.cwiseInverse()).sum();
    g.theta_b = subspace_gap(Us, rec.U, p.mass);
    g.theta_a = subspace_gap(Us, rec.U, p.stiffness);
    g.theta_b_bound = g.lambda_error / lambda_gap;
    g.theta_a_bound = g.mu_error / mu_gap;
    g.theta_b_ok = g.theta_b * g.theta_b <= g.theta_b_bound * (1 + options.slack) + lam_floor / lambda_gap;
    g.theta_a_ok = g.theta_a * g.theta_a <= g.theta_a_bound * (1 + options.slack) + mu_floor / mu_gap;

    if (options.check_g) {
      // g_i = mu_i u_i - K^{-1} M u_i with b-normalized u_i.
      const Matrix X = ldlt->solve(spmm(p.mass, rec.U));
      double sum = 0.0;
      for (Index i = 0; i < s; ++i) {
        const Vector gi = rec.U.col(i) / lam_k(i) - X.col(i);
        sum += gi.dot(p.stiffness * gi);
      }
      g.g_sum = sum;
      g.g_ok = sum <= g.mu_error * (1 + options.slack) + mu_floor;
    } else {
      g.g_sum = std::numeric_limits<double>::quiet_NaN();
    }
    report.violations += !g.theta_b_ok + !g.theta_a_ok + !g.g_ok;

    if (g.k > options.skip && g.lambda_error >= 100 * options.tol) {
      fit_k.push_back(g.k);
      fit_v.push_back(g.lambda_error);
    }
    report.records.push_back(g);
  }
  std::tie(report.gamma_hat, report.r_squared) = fit_geometric_rate(fit_k, fit_v);
  report.fit_points = static_cast<int>(fit_k.size());
  report.fit_first_k = fit_k.empty() ? 0 : static_cast<int>(fit_k.front());
  return report;
}

}  // namespace bpjd
