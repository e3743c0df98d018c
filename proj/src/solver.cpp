#include "bpjd/solver.hpp"

#include <chrono>
#include <cmath>

#include "bpjd/errors.hpp"
#include "bpjd/linalg/dense_eig.hpp"
#include "bpjd/parallel.hpp"

namespace bpjd {

namespace {

void normalize_signs(Matrix& U) {
  for (Index j = 0; j < U.cols(); ++j) {
    Index imax = 0;
    U.col(j).cwiseAbs().maxCoeff(&imax);
    if (U(imax, j) < 0) U.col(j) *= -1.0;
  }
}

/// sqrt(rho^T M^{-1} rho), the M-norm of the residual's Riesz representative.
double dual_mass_norm(const CsrMatrixd& M, const Vector& rho) {
  CgOptions opt;
  opt.tol_rel = 1e-10;
  auto [x, rep] = cg_solve<double>([&M](const Vector& in, Vector& out) { spmv_into(M, in, out); }, rho, opt);
  return std::sqrt(std::max(0.0, rho.dot(x)));
}

}  // namespace

std::string to_string(SubspacePolicy policy) {
  switch (policy) {
    case SubspacePolicy::fixed_2s: return "fixed_2s";
    case SubspacePolicy::fixed_3s: return "fixed_3s";
    case SubspacePolicy::growing: return "growing";
  }
  return "unknown";
}

SubspacePolicy parse_policy(const std::string& name) {
  if (name == "fixed_2s") return SubspacePolicy::fixed_2s;
  if (name == "fixed_3s") return SubspacePolicy::fixed_3s;
  if (name == "growing") return SubspacePolicy::growing;
  throw ConfigurationError("unknown subspace_policy '" + name + "' (expected fixed_2s, fixed_3s or growing)");
}

void SolverConfig::validate() const {
  if (s < 1) throw ConfigurationError("s must be at least 1");
  if (!(tol > 0)) throw ConfigurationError("tol must be positive");
  if (tau < 0) throw ConfigurationError("tau must be non-negative");
  if (max_outer < 1) throw ConfigurationError("max_outer must be at least 1");
  if (!(overlap_ratio > 0) || !(overlap_ratio < 1)) throw ConfigurationError("overlap_ratio must lie in (0, 1)");
  if (threads < 0) throw ConfigurationError("threads must be non-negative");
}

SolverState initialize(const FeProblem& p, const CsrMatrixd& P_init, const SolverConfig& cfg) {
  cfg.validate();
  if (P_init.rows() != p.n_free) throw DimensionError("initial prolongation does not match the fine problem");
  const auto K0 = galerkin_product(p.stiffness, P_init);
  const auto M0 = galerkin_product(p.mass, P_init);
  if (K0.rows() < cfg.s)
    throw ConfigurationError("initial mesh has " + std::to_string(K0.rows()) + " dofs, fewer than s = " +
                             std::to_string(cfg.s));
  return initialize_from(p, P_init, coarse_eigs(K0, M0, cfg.s).vectors, cfg);
}

SolverState initialize_from(const FeProblem& p, const CsrMatrixd& P_init, const Matrix& init_vectors,
                            const SolverConfig& cfg) {
  cfg.validate();
  if (P_init.rows() != p.n_free || P_init.cols() != init_vectors.rows())
    throw DimensionError("initial vectors do not match the prolongation");
  if (init_vectors.cols() < cfg.s) throw ConfigurationError("fewer initial vectors than s");
  SolverState st;
  st.U = m_orthonormalize(p.mass, spmm(P_init, init_vectors.leftCols(cfg.s)));
  if (st.U.cols() < cfg.s) throw DegeneracyError("initial vectors are linearly dependent");
  st.lambdas.resize(cfg.s);
  for (Index i = 0; i < cfg.s; ++i) st.lambdas(i) = rayleigh_quotient(p, st.U.col(i));
  st.W = st.U;
  st.projected = st.U.transpose() * spmm(p.stiffness, st.U);
  return st;
}

Matrix block_residuals(const FeProblem& p, const SolverState& state) {
  Matrix R = spmm(p.mass, state.U) * state.lambdas.asDiagonal();
  R -= spmm(p.stiffness, state.U);
  return R;
}

TwoLevelPreconditioner::TwoLevelPreconditioner(const FeProblem& p, const Decomposition& d,
                                               const CoarseSpectral* coarse, int threads)
    : d_(d), coarse_(coarse), threads_(threads) {
  if (d.n_fine != p.n_free) throw DimensionError("decomposition does not belong to this problem");
  if (coarse && coarse->P.rows() != p.n_free) throw DimensionError("coarse space does not belong to this problem");
  local_.reserve(d.N);
  for (Index l = 0; l < d.N; ++l) local_.push_back(local_pencil(p, d, l));
}

Vector TwoLevelPreconditioner::apply(double shift, const Vector& rho) const {
  Vector z = coarse_ ? coarse_deflated_solve(*coarse_, shift, rho) : Vector(Vector::Zero(rho.size()));
  for (Index l = 0; l < d_.N; ++l) {
    const LocalShiftedOperator op(local_[l], l, shift);
    auto [x, rep] = op.solve(restrict_to(rho, d_, l));
    extend_add(x, d_, l, z);
  }
  return z;
}

Matrix TwoLevelPreconditioner::apply_block(const Vector& lambdas, const Matrix& rho) const {
  Matrix Z(rho.rows(), rho.cols());
  parallel_for(rho.cols(), threads_, [&](Index i) { Z.col(i) = apply(lambdas(i), rho.col(i)); });
  return Z;
}

Matrix block_correction(const FeProblem& p, const SolverState& state, const Matrix& Z) {
  const Matrix MZ = spmm(p.mass, Z);
  return Z - state.U * (state.U.transpose() * MZ);
}

SolverState rayleigh_ritz(const FeProblem& p, const SolverState& state, const Matrix& T, const SolverConfig& cfg) {
  // W is assembled as [base, extension]: base is already M-orthonormal, so
  // only the new directions are orthogonalized and projected.
  const bool grow = cfg.policy == SubspacePolicy::growing;
  const Matrix& base = grow ? state.W : state.U;
  Matrix candidates = T;
  if (cfg.policy == SubspacePolicy::fixed_3s && state.U_prev.cols() > 0) {
    candidates.resize(T.rows(), state.U_prev.cols() + T.cols());
    candidates << state.U_prev, T;
  }
  const Matrix E = m_orthonormal_extension(p.mass, base, candidates);
  const Index nb = base.cols(), ne = E.cols();
  if (nb + ne < cfg.s)
    throw DegeneracyError("search space has rank " + std::to_string(nb + ne) + " < s = " + std::to_string(cfg.s));

  Matrix W(base.rows(), nb + ne);
  W << base, E;
  const Matrix KE = spmm(p.stiffness, E);
  Matrix A(nb + ne, nb + ne);
  if (grow && state.projected.rows() == nb) {
    A.topLeftCorner(nb, nb) = state.projected;
  } else {
    A.topLeftCorner(nb, nb) = base.transpose() * spmm(p.stiffness, base);
  }
  A.topRightCorner(nb, ne) = base.transpose() * KE;
  A.bottomRightCorner(ne, ne) = E.transpose() * KE;
  A.bottomLeftCorner(ne, nb) = A.topRightCorner(nb, ne).transpose();
  A = (A + A.transpose()) / 2.0;
  const auto e = dense_sym_eig(A);

  SolverState next;
  next.k = state.k + 1;
  next.U = W * e.vectors.leftCols(cfg.s);
  normalize_signs(next.U);
  next.lambdas = e.values.head(cfg.s);
  if (cfg.policy == SubspacePolicy::fixed_3s) next.U_prev = state.U;
  next.W = std::move(W);
  next.projected = std::move(A);
  return next;
}

EigResult solve(const FeProblem& p, const TwoLevelPreconditioner& prec, const SolverConfig& cfg,
                SolverState state) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  EigResult res;
  res.init.lambdas_init = state.lambdas;
  if (const auto* cs = prec.coarse()) {
    res.init.coarse_lambdas = cs->eigvals.head(std::min<Index>(cfg.s, cs->eigvals.size()));
    res.init.below_coarse = true;
    for (Index i = 0; i < res.init.coarse_lambdas.size(); ++i)
      if (!(state.lambdas(i) < res.init.coarse_lambdas(i))) res.init.below_coarse = false;
  }

  for (int it = 1; it <= cfg.max_outer; ++it) {
    const auto t0 = clock::now();
    const Matrix R = block_residuals(p, state);
    IterationRecord rec;
    rec.residual_norms.resize(cfg.s);
    for (Index i = 0; i < cfg.s; ++i) rec.residual_norms(i) = dual_mass_norm(p.mass, R.col(i));

    const Matrix Z = prec.apply_block(state.lambdas, R);
    const Matrix T = block_correction(p, state, Z);
    SolverState next = rayleigh_ritz(p, state, T, cfg);

    rec.k = next.k;
    rec.lambdas = next.lambdas;
    rec.sum_delta = (next.lambdas - state.lambdas).cwiseAbs().sum();
    for (Index i = 0; i < cfg.s; ++i)
      if (next.lambdas(i) > state.lambdas(i) + 1e-12) ++res.monotonicity_violations;
    if (cfg.record_bases) rec.U = next.U;
    rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    res.history.push_back(std::move(rec));

    state = std::move(next);
    res.stop_value = res.history.back().sum_delta;
    if (res.stop_value < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.iterations = state.k;
  res.lambdas = state.lambdas;
  res.U = state.U;
  return res;
}

TwoLevelSetup make_two_level(const DomainSpec& spec, Index coarse_n, int levels, const SolverConfig& cfg) {
  cfg.validate();
  if (levels < 1) throw ConfigurationError("at least one refinement level is needed between coarse and fine mesh");
  if (cfg.tau > levels)
    throw ConfigurationError("tau = " + std::to_string(cfg.tau) + " exceeds the number of refinement levels " +
                             std::to_string(levels));
  TwoLevelSetup s;
  auto coarse = std::make_shared<StructuredMesh>(build_coarse_mesh(spec, coarse_n));
  auto fine = std::make_shared<StructuredMesh>(refine(*coarse, levels));
  s.coarse = coarse;
  s.fine = fine;
  s.problem = assemble(s.fine);
  s.decomposition = build_decomposition(*coarse, *fine, overlap_layers_for_ratio(*coarse, *fine, cfg.overlap_ratio));
  if (cfg.use_coarse) s.coarse_spectral = build_coarse_spectral(s.problem, *coarse, cfg.s);
  const StructuredMesh init = refine(*coarse, cfg.tau);
  s.init_dofs = init.num_free();
  s.init_prolongation = prolongation(init, *fine);
  return s;
}

EigResult solve(const TwoLevelSetup& setup, const SolverConfig& cfg) {
  // With tau = 0 the initial pencil is the coarse one, already solved.
  SolverState state = cfg.tau == 0 && setup.coarse_spectral
                          ? initialize_from(setup.problem, setup.init_prolongation, setup.coarse_spectral->eigvecs, cfg)
                          : initialize(setup.problem, setup.init_prolongation, cfg);
  const TwoLevelPreconditioner prec(setup.problem, setup.decomposition,
                                    setup.coarse_spectral ? &*setup.coarse_spectral : nullptr, cfg.threads);
  EigResult r = solve(setup.problem, prec, cfg, std::move(state));
  r.init.init_dofs = setup.init_dofs;
  return r;
}

}  // namespace bpjd
