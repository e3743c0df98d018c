#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "bpjd/assembly.hpp"
#include "bpjd/experiment.hpp"
#include "bpjd/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

void print_summary(const bpjd::RunReport& report) {
  std::cout << "level  coarse_n      N     dofs   it  converged  stop\n";
  for (const auto& b : report.blocks) {
    char line[160];
    std::snprintf(line, sizeof line, "%5d  %8ld  %5ld  %7ld  %3d  %9s  %.4e\n", b.level, static_cast<long>(b.coarse_n),
                  static_cast<long>(b.decomposition.N), static_cast<long>(b.dofs), b.result.iterations,
                  b.result.converged ? "yes" : "no", b.result.stop_value);
    std::cout << line;
    if (b.gaps)
      std::cout << "       bounds: " << b.gaps->violations << " violations, gamma_hat " << b.gaps->gamma_hat
                << " (R^2 " << b.gaps->r_squared << ")\n";
  }
}

void export_finest(const bpjd::RunConfig& cfg, const std::string& mesh_file, const std::string& matrix_dir) {
  const auto spec = cfg.domain_spec();
  const bpjd::Index coarse_n = cfg.mode == bpjd::RunMode::levels ? cfg.coarse_n.front() : cfg.coarse_n.back();
  int levels = 0;
  if (cfg.mode == bpjd::RunMode::levels) {
    levels = cfg.refine_levels.back();
  } else {
    for (bpjd::Index r = cfg.fine_n / coarse_n; r > 1; r >>= 1) ++levels;
  }
  auto fine = std::make_shared<bpjd::StructuredMesh>(bpjd::refine(bpjd::build_coarse_mesh(spec, coarse_n), levels));
  if (!mesh_file.empty()) bpjd::write_text(mesh_file, bpjd::mesh_to_json(*fine).dump() + "\n");
  if (!matrix_dir.empty()) {
    std::filesystem::create_directories(matrix_dir);
    const auto p = bpjd::assemble(fine);
    bpjd::write_matrix_market(p.stiffness, (std::filesystem::path(matrix_dir) / "K.mtx").string());
    bpjd::write_matrix_market(p.mass, (std::filesystem::path(matrix_dir) / "M.mtx").string());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level block preconditioned Jacobi-Davidson eigensolver for the Laplacian"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment from a config file and/or a preset");
  std::string config_path, preset_name, out_dir, mesh_file, matrix_dir;
  int threads = -1;
  bool diagnostics = false, quiet = false;
  run->add_option("config", config_path, "config file (keys override the preset)");
  run->add_option("--preset", preset_name, "built-in preset (see `presets`)");
  run->add_option("--threads", threads, "worker threads for the preconditioner (0 = all cores)");
  run->add_flag("--diagnostics", diagnostics, "reference solve and per-iteration bound checks");
  run->add_option("--out", out_dir, "output directory (default: output_dir from the config)");
  run->add_option("--dump-mesh", mesh_file, "write the finest mesh as JSON");
  run->add_option("--export-matrices", matrix_dir, "write K.mtx and M.mtx of the finest mesh");
  run->add_flag("-q,--quiet", quiet, "no progress output");

  auto* presets = app.add_subcommand("presets", "list the built-in presets");
  auto* validate = app.add_subcommand("validate", "check a config file and print it in normalized form");
  std::string validate_path;
  validate->add_option("config", validate_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (presets->parsed()) {
      for (const auto& name : bpjd::preset_names()) {
        const auto p = bpjd::preset(name);
        std::cout << name << "\n    " << p.note << "\n";
      }
      return kExitOk;
    }
    if (validate->parsed()) {
      std::cout << bpjd::to_config_text(bpjd::load_config(validate_path));
      return kExitOk;
    }

    if (config_path.empty() && preset_name.empty()) {
      std::cerr << "error: give a config file, --preset NAME, or both\n";
      return kExitError;
    }
    bpjd::RunConfig cfg = preset_name.empty() ? bpjd::RunConfig{} : bpjd::preset(preset_name);
    if (!config_path.empty()) cfg = bpjd::load_config(config_path, cfg);
    if (threads >= 0) cfg.threads = threads;
    if (diagnostics) cfg.diagnostics = true;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();

    if (!mesh_file.empty() || !matrix_dir.empty()) export_finest(cfg, mesh_file, matrix_dir);

    auto log = [quiet](const std::string& msg) {
      if (!quiet) std::cerr << msg << "\n";
    };
    const auto report = bpjd::run_experiment(cfg, log);
    bpjd::write_outputs(report, cfg.output_dir);
    if (!quiet) print_summary(report);
    return report.all_converged() ? kExitOk : kExitNotConverged;
  } catch (const bpjd::ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
