#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bpjd/diagnostics.hpp"
#include "bpjd/errors.hpp"
#include "bpjd/mesh.hpp"
#include "bpjd/solver.hpp"

namespace bpjd {

/// A config-file problem, reported with the offending line and key.
class ConfigParseError : public ConfigurationError {
 public:
  ConfigParseError(int line, std::string field, const std::string& detail)
      : ConfigurationError((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                           (field.empty() ? std::string() : "field '" + field + "': ") + detail),
        line_(line),
        field_(std::move(field)) {}

  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  int line_;
  std::string field_;
};

/// levels: one coarse mesh, solved at every entry of refine_levels.
/// scalability: one fine mesh (fine_n cells per longest axis), solved for every coarse_n.
enum class RunMode { levels, scalability };

struct RunConfig {
  std::string name = "custom";
  /// box2d | lshape2d | box3d | lshape3d
  std::string domain = "box2d";
  RunMode mode = RunMode::levels;
  std::vector<Index> coarse_n{4};
  std::vector<int> refine_levels{1, 2};
  Index fine_n = 0;
  double overlap_ratio = 0.25;
  Index s = 1;
  double tol = 1e-10;
  int tau = 1;
  int max_outer = 100;
  SubspacePolicy policy = SubspacePolicy::fixed_2s;
  /// Only consumed by randomized tests; runs are deterministic regardless.
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool diagnostics = false;
  int threads = 1;
  /// How a preset departs from the configuration it is modeled on.
  std::string note;

  DomainSpec domain_spec() const;
  SolverConfig solver_config() const;
  /// Throws ConfigParseError naming the field.
  void validate() const;
};

/// Parses the flat `key = value` format. '#' starts a comment anywhere, ';'
/// only at the start of a line; [section] lines are ignored. Keys not given
/// keep their value from `base`.
RunConfig parse_config(const std::string& text, const RunConfig& base = {});
RunConfig load_config(const std::string& path, const RunConfig& base = {});
/// Canonical text form; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& cfg);

std::vector<std::string> preset_names();
/// Throws ConfigurationError for an unknown name.
RunConfig preset(const std::string& name);

struct DecompositionSummary {
  Index N = 0;
  int overlap_layers = 0;
  double H = 0.0;
  double h = 0.0;
  double delta = 0.0;
  int colors = 0;
  Index min_local_dofs = 0;
  Index max_local_dofs = 0;
  double mean_local_dofs = 0.0;
  /// {local dof count, number of subdomains}, ascending in the count.
  std::vector<std::pair<Index, Index>> dof_histogram;
};

DecompositionSummary summarize(const Decomposition& d);

struct RunBlock {
  int level = 0;
  Index coarse_n = 0;
  Index dofs = 0;
  DecompositionSummary decomposition;
  EigResult result;
  /// Filled when diagnostics are on.
  std::optional<ReferenceSolution> reference;
  std::optional<GapReport> gaps;
  double setup_ms = 0.0;
  double solve_ms = 0.0;
  double diagnostics_ms = 0.0;
};

struct RunReport {
  RunConfig config;
  std::vector<RunBlock> blocks;

  bool all_converged() const;
  int monotonicity_violations() const;
};

/// Runs every block of the experiment. Errors are rethrown with the stage
/// (mesh, decomposition, coarse, solve, diagnostics) and block in the message;
/// configuration problems stay ConfigurationError.
RunReport run_experiment(const RunConfig& cfg, const std::function<void(const std::string&)>& log = {});

}  // namespace bpjd
