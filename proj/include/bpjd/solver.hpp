#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bpjd/assembly.hpp"
#include "bpjd/coarse.hpp"
#include "bpjd/decomposition.hpp"
#include "bpjd/linalg/orthogonalize.hpp"
#include "bpjd/mesh.hpp"

namespace bpjd {

enum class SubspacePolicy {
  /// W^{k+1} = span{U^k, T^{k+1}}: dimension at most 2s.
  fixed_2s,
  /// W^{k+1} = span{U^{k-1}, U^k, T^{k+1}}: dimension at most 3s.
  fixed_3s,
  /// W^{k+1} = span{W^k, T^{k+1}}, the search space never shrinks.
  growing,
};

std::string to_string(SubspacePolicy policy);
SubspacePolicy parse_policy(const std::string& name);

struct SolverConfig {
  Index s = 1;
  /// Stop when sum_i |lambda_i^{k+1} - lambda_i^k| < tol.
  double tol = 1e-10;
  /// The initial eigenproblem is solved on the coarse mesh refined tau times.
  int tau = 1;
  int max_outer = 100;
  SubspacePolicy policy = SubspacePolicy::fixed_2s;
  double overlap_ratio = 0.25;
  /// Include the deflated coarse solve in the preconditioner.
  bool use_coarse = true;
  /// Keep U^k of every iteration in the history (needed by the gap diagnostics).
  bool record_bases = false;
  /// Worker threads for the preconditioner; 0 = hardware concurrency.
  int threads = 1;

  void validate() const;
};

struct IterationRecord {
  int k = 0;
  Vector lambdas;
  double sum_delta = 0.0;
  /// ||M^{-1} rho_i||_M of the residuals entering this iteration.
  Vector residual_norms;
  double wall_ms = 0.0;
  /// Ritz basis after the update (only with record_bases).
  Matrix U;
};

struct SolverState {
  int k = 0;
  Matrix U;
  Vector lambdas;
  /// M-orthonormal basis of the current search space.
  Matrix W;
  /// W^T K W, kept so the growing policy only projects the new directions.
  Matrix projected;
  /// U^{k-1} (fixed_3s only).
  Matrix U_prev;
};

/// Startup information: Ritz values on the initial mesh next to the
/// coarse-space values they are expected (not required) to undercut.
struct InitInfo {
  Vector lambdas_init;
  Vector coarse_lambdas;
  bool below_coarse = true;
  Index init_dofs = 0;
};

struct EigResult {
  Vector lambdas;
  Matrix U;
  int iterations = 0;
  bool converged = false;
  double stop_value = 0.0;
  std::vector<IterationRecord> history;
  InitInfo init;
  /// Components with lambda_i^{k+1} > lambda_i^k + 1e-12; expected to be 0.
  int monotonicity_violations = 0;
};

/// Step 1: eigenpairs of the Galerkin pencil (P^T K P, P^T M P), prolonged and
/// M-orthonormalized. P_init maps the initial coarse space into the fine one.
SolverState initialize(const FeProblem& p, const CsrMatrixd& P_init, const SolverConfig& cfg);
/// Step 1 with the initial eigenvectors already known (columns of init_vectors,
/// coefficients in the space P_init maps from).
SolverState initialize_from(const FeProblem& p, const CsrMatrixd& P_init, const Matrix& init_vectors,
                            const SolverConfig& cfg);

/// rho_i = lambda_i M u_i - K u_i, one column per pair.
Matrix block_residuals(const FeProblem& p, const SolverState& state);

/// Additive two-level Schwarz preconditioner for the shifted correction equation:
///   z = coarse_deflated_solve(shift, rho) + sum_l extend_l (K_l - shift M_l)^{-1} restrict_l rho.
class TwoLevelPreconditioner {
 public:
  /// `coarse` may be null, which drops the coarse term.
  TwoLevelPreconditioner(const FeProblem& p, const Decomposition& d, const CoarseSpectral* coarse,
                         int threads = 1);

  Vector apply(double shift, const Vector& rho) const;
  /// Column i is preconditioned with shift lambdas(i).
  Matrix apply_block(const Vector& lambdas, const Matrix& rho) const;

  const Decomposition& decomposition() const { return d_; }
  const CoarseSpectral* coarse() const { return coarse_; }

 private:
  const Decomposition& d_;
  const CoarseSpectral* coarse_;
  std::vector<LocalPencil> local_;
  int threads_;
};

/// t_i = z_i - U U^T M z_i.
Matrix block_correction(const FeProblem& p, const SolverState& state, const Matrix& Z);

/// Step 3: Ritz pairs of the s smallest values in W^{k+1}.
SolverState rayleigh_ritz(const FeProblem& p, const SolverState& state, const Matrix& T, const SolverConfig& cfg);

/// Steps 2-4 from a given starting state.
EigResult solve(const FeProblem& p, const TwoLevelPreconditioner& prec, const SolverConfig& cfg,
                SolverState state);

/// Everything the method needs for one fine level.
struct TwoLevelSetup {
  std::shared_ptr<const StructuredMesh> coarse;
  std::shared_ptr<const StructuredMesh> fine;
  FeProblem problem;
  Decomposition decomposition;
  std::optional<CoarseSpectral> coarse_spectral;
  CsrMatrixd init_prolongation;
  Index init_dofs = 0;
};

/// Coarse mesh with coarse_n cells per longest axis, refined `levels` times;
/// overlap from cfg.overlap_ratio; initial space on the coarse mesh refined cfg.tau times.
TwoLevelSetup make_two_level(const DomainSpec& spec, Index coarse_n, int levels, const SolverConfig& cfg);

EigResult solve(const TwoLevelSetup& setup, const SolverConfig& cfg);

}  // namespace bpjd
