#pragma once

#include <string>
#include <vector>

#include "bpjd/assembly.hpp"
#include "bpjd/solver.hpp"

namespace bpjd {

/// Problems up to this size are referenced with the dense eigensolver; larger
/// ones use shift-invert subspace iteration on a sparse Cholesky factor of K.
inline constexpr Index kDenseReferenceLimit = 600;

struct ReferenceSolution {
  /// lambda_1^h .. lambda_{s+1}^h, ascending.
  Vector lambdas;
  /// M-orthonormal eigenvectors, one column per value.
  Matrix U;
  /// "dense" or "subspace_iteration".
  std::string method;
  /// max_i ||K u_i - lambda_i M u_i|| / (lambda_i ||M u_i||).
  double max_relative_residual = 0.0;
  /// lambda_s^h and lambda_{s+1}^h are separated (relative gap above 1e-8).
  bool gap_ok = true;
  std::string advisory;

  Index s() const { return lambdas.size() - 1; }
};

/// First s + 1 discrete eigenpairs of (K, M). Never throws on a missing gap;
/// gap_ok/advisory report it instead.
ReferenceSolution reference_solve(const FeProblem& p, Index s);

/// Gap between span(U1) and span(U2) in the metric G: the larger of the two
/// directed sines, each computed as the G-norm of the component of one
/// (G-orthonormalized) basis that the other does not capture. For equal
/// dimensions this equals sqrt(1 - sigma_min^2) of the cross-Gram U1^T G U2 but
/// keeps full relative accuracy for small angles. Rank-deficient input throws
/// DegeneracyError.
double subspace_gap(const Matrix& U1, const Matrix& U2, const CsrMatrixd& G);

struct GapRecord {
  int k = 0;
  double theta_b = 0.0;
  double theta_a = 0.0;
  /// sum_i (lambda_i^k - lambda_i^h)
  double lambda_error = 0.0;
  /// sum_i (mu_i^h - mu_i^k), mu = 1/lambda
  double mu_error = 0.0;
  /// Right-hand sides of the three inequalities.
  double theta_b_bound = 0.0;
  double theta_a_bound = 0.0;
  bool theta_b_ok = true;
  bool theta_a_ok = true;
  /// sum_i a(g_i^k, g_i^k); NaN when the g check is off.
  double g_sum = 0.0;
  bool g_ok = true;
};

struct GapReport {
  std::vector<GapRecord> records;
  bool g_evaluated = false;
  int violations = 0;
  /// exp(slope) of the least-squares line through log lambda_error over the
  /// fitted tail; NaN when fewer than 2 points qualify.
  double gamma_hat = 0.0;
  double r_squared = 0.0;
  int fit_points = 0;
  int fit_first_k = 0;

  bool all_ok() const { return violations == 0; }
};

struct BoundOptions {
  /// Relative slack allowed on every inequality.
  double slack = 1e-8;
  /// Evaluate the g bound (one fine solve per pair and iteration).
  bool check_g = false;
  /// Solver tolerance; iterations with lambda_error < 100 tol are not fitted.
  double tol = 1e-10;
  /// Leading iterations excluded from the fit.
  int skip = 2;
};

/// Evaluates the gap and g inequalities at every recorded iteration; the
/// history must have been produced with record_bases.
GapReport check_iteration_bounds(const std::vector<IterationRecord>& history, const ReferenceSolution& ref,
                                 const FeProblem& p, const BoundOptions& options = {});

/// Least-squares fit of log(values) against k; returns {exp(slope), R^2}.
std::pair<double, double> fit_geometric_rate(const std::vector<double>& k, const std::vector<double>& values);

}  // namespace bpjd
