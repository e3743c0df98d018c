#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>

#include "bpjd/errors.hpp"
#include "bpjd/linalg/csr.hpp"
#include "bpjd/types.hpp"

namespace bpjd {

struct CgReport {
  Index iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  /// Stopped because the residual reached the rounding floor of the
  /// undeflated right-hand side before the relative target.
  bool at_roundoff_floor = false;
};

struct CgOptions {
  double tol_rel = 1e-12;
  /// 0 selects 10 * n.
  Index max_it = 0;
  /// Called with the current iterate after every update (before the final
  /// re-projection). Intended for tests that track error norms.
  std::function<void(const Vector&)> on_iterate;
};

/// Span of a basis Y that is orthonormal in the metric M, kept together with
/// MY so both projections are two dense products:
///   Q  x = x - Y (MY)^T x      (onto the M-orthogonal complement of span Y)
///   Q^T f = f - MY Y^T f       (annihilates functionals along MY)
template <typename Scalar>
class DeflationSpace {
 public:
  DeflationSpace(MatrixX<Scalar> basis, const CsrMatrix<Scalar>& metric)
      : basis_(std::move(basis)), metric_basis_(spmm(metric, basis_)) {}

  DeflationSpace(MatrixX<Scalar> basis, MatrixX<Scalar> metric_basis)
      : basis_(std::move(basis)), metric_basis_(std::move(metric_basis)) {
    if (basis_.rows() != metric_basis_.rows() || basis_.cols() != metric_basis_.cols())
      throw DimensionError("deflation basis and its metric image differ in shape");
  }

  const MatrixX<Scalar>& basis() const noexcept { return basis_; }
  const MatrixX<Scalar>& metric_basis() const noexcept { return metric_basis_; }
  Index size() const noexcept { return basis_.cols(); }

  template <typename Derived>
  void project(Eigen::MatrixBase<Derived>& x) const {
    if (basis_.cols() == 0) return;
    const VectorX<Scalar> c = metric_basis_.transpose() * x;
    x -= basis_ * c;
  }

  template <typename Derived>
  void project_dual(Eigen::MatrixBase<Derived>& f) const {
    if (basis_.cols() == 0) return;
    const VectorX<Scalar> c = basis_.transpose() * f;
    f -= metric_basis_ * c;
  }

 private:
  MatrixX<Scalar> basis_;
  MatrixX<Scalar> metric_basis_;
};

/// Conjugate gradients for A x = b with `apply(in, out)` computing out = A in.
///
/// With a deflation space the iteration runs on Q^T A Q, so the operator only
/// has to be positive definite on the M-orthogonal complement of the basis;
/// the returned x is re-projected and M-orthogonal to the basis. When most of
/// b lies along the deflated directions, ||Q^T b|| can be far below ||b|| and
/// the relative target below what rounding allows; the iteration then stops
/// once ||r|| <= 100 eps ||b||. A direction of non-positive curvature raises
/// IndefiniteOperatorError. Running out of iterations is reported, not thrown.
template <typename Scalar, typename Apply>
std::pair<VectorX<Scalar>, CgReport> cg_solve(Apply&& apply, const VectorX<Scalar>& rhs,
                                             const CgOptions& options = {},
                                             const DeflationSpace<Scalar>* deflation = nullptr) {
  const Index n = rhs.size();
  if (deflation != nullptr && deflation->basis().rows() != n)
    throw DimensionError("cg_solve: deflation basis does not match rhs");
  const Index max_it = options.max_it > 0 ? options.max_it : 10 * std::max<Index>(n, 1);

  VectorX<Scalar> x = VectorX<Scalar>::Zero(n);
  VectorX<Scalar> r = rhs;
  const Scalar floor = Scalar(100) * std::numeric_limits<Scalar>::epsilon() * rhs.norm();
  if (deflation) deflation->project_dual(r);

  CgReport report;
  const Scalar rhs_norm = r.norm();
  if (rhs_norm == Scalar(0)) {
    report.converged = true;
    return {x, report};
  }

  VectorX<Scalar> p = r;
  VectorX<Scalar> qp(n), ap(n);
  Scalar rr = r.squaredNorm();
  const Scalar target = Scalar(options.tol_rel) * rhs_norm;

  for (Index it = 1; it <= max_it; ++it) {
    qp = p;
    if (deflation) deflation->project(qp);
    apply(qp, ap);
    if (deflation) deflation->project_dual(ap);
    const Scalar curvature = p.dot(ap);
    if (!(curvature > Scalar(0))) throw IndefiniteOperatorError(static_cast<double>(curvature), it);

    const Scalar alpha = rr / curvature;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    const Scalar rr_next = r.squaredNorm();
    report.iterations = it;
    if (options.on_iterate) options.on_iterate(x);
    if (std::sqrt(rr_next) <= target) {
      rr = rr_next;
      report.converged = true;
      break;
    }
    if (std::sqrt(rr_next) <= floor) {
      rr = rr_next;
      report.at_roundoff_floor = true;
      break;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }

  report.relative_residual = static_cast<double>(std::sqrt(rr) / rhs_norm);
  if (deflation) deflation->project(x);
  return {x, report};
}

}  // namespace bpjd
