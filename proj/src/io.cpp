#include "bpjd/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bpjd {

namespace {

Json vec(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

/// NaN is not representable in JSON.
Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

Json to_json(const RunConfig& c) {
  Json j;
  j["name"] = c.name;
  j["domain"] = c.domain;
  j["mode"] = c.mode == RunMode::levels ? "levels" : "scalability";
  j["coarse_n"] = c.coarse_n;
  if (c.mode == RunMode::levels) j["refine_levels"] = c.refine_levels;
  else j["fine_n"] = c.fine_n;
  j["overlap_ratio"] = c.overlap_ratio;
  j["s"] = c.s;
  j["tol"] = c.tol;
  j["tau"] = c.tau;
  j["max_outer"] = c.max_outer;
  j["subspace_policy"] = to_string(c.policy);
  j["seed"] = c.seed;
  j["diagnostics"] = c.diagnostics;
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

Json to_json(const DecompositionSummary& d) {
  Json j;
  j["N"] = d.N;
  j["overlap_layers"] = d.overlap_layers;
  j["H"] = d.H;
  j["h"] = d.h;
  j["delta"] = d.delta;
  j["colors"] = d.colors;
  j["local_dofs"] = {{"min", d.min_local_dofs}, {"max", d.max_local_dofs}, {"mean", d.mean_local_dofs}};
  Json hist = Json::array();
  for (const auto& [size, count] : d.dof_histogram) hist.push_back({size, count});
  j["dof_histogram"] = hist;
  return j;
}

Json to_json(const ReferenceSolution& r) {
  Json j;
  j["method"] = r.method;
  j["lambdas"] = vec(r.lambdas);
  j["max_relative_residual"] = r.max_relative_residual;
  j["gap_ok"] = r.gap_ok;
  if (!r.advisory.empty()) j["advisory"] = r.advisory;
  return j;
}

Json to_json(const GapReport& g) {
  Json j;
  j["violations"] = g.violations;
  j["g_evaluated"] = g.g_evaluated;
  j["gamma_hat"] = num(g.gamma_hat);
  j["r_squared"] = num(g.r_squared);
  j["fit_points"] = g.fit_points;
  j["fit_first_k"] = g.fit_first_k;
  Json recs = Json::array();
  for (const auto& r : g.records) {
    Json e;
    e["k"] = r.k;
    e["lambda_error"] = r.lambda_error;
    e["mu_error"] = r.mu_error;
    e["theta_b"] = r.theta_b;
    e["theta_b_bound_sq"] = r.theta_b_bound;
    e["theta_a"] = r.theta_a;
    e["theta_a_bound_sq"] = r.theta_a_bound;
    e["g_sum"] = num(r.g_sum);
    e["ok"] = r.theta_b_ok && r.theta_a_ok && r.g_ok;
    recs.push_back(e);
  }
  j["records"] = recs;
  return j;
}

Json report_to_json(const RunReport& report) {
  Json j;
  j["config"] = to_json(report.config);
  Json blocks = Json::array();
  for (const auto& b : report.blocks) {
    Json e;
    e["level"] = b.level;
    e["coarse_n"] = b.coarse_n;
    e["N"] = b.decomposition.N;
    e["dofs"] = b.dofs;
    e["iterations"] = b.result.iterations;
    e["converged"] = b.result.converged;
    e["stop_value"] = b.result.stop_value;
    e["lambdas"] = vec(b.result.lambdas);
    e["monotonicity_violations"] = b.result.monotonicity_violations;
    e["init"] = {{"dofs", b.result.init.init_dofs},
                 {"lambdas", vec(b.result.init.lambdas_init)},
                 {"coarse_lambdas", vec(b.result.init.coarse_lambdas)},
                 {"below_coarse", b.result.init.below_coarse}};
    e["decomposition"] = to_json(b.decomposition);
    if (b.reference) e["reference"] = to_json(*b.reference);
    if (b.gaps) e["gaps"] = to_json(*b.gaps);
    blocks.push_back(e);
  }
  j["blocks"] = blocks;
  Json iterations = Json::array();
  for (const auto& b : report.blocks) iterations.push_back(b.result.iterations);
  j["summary"] = {{"all_converged", report.all_converged()},
                  {"iterations", iterations},
                  {"monotonicity_violations", report.monotonicity_violations()}};
  return j;
}

Json timings_to_json(const RunReport& report) {
  Json blocks = Json::array();
  for (const auto& b : report.blocks)
    blocks.push_back({{"level", b.level},
                      {"coarse_n", b.coarse_n},
                      {"setup_ms", b.setup_ms},
                      {"solve_ms", b.solve_ms},
                      {"diagnostics_ms", b.diagnostics_ms}});
  return {{"blocks", blocks}};
}

std::string lambdas_csv(const RunReport& report) {
  std::string out = "level,coarse_n,N,dofs,i,lambda\n";
  char buf[160];
  for (const auto& b : report.blocks)
    for (Index i = 0; i < b.result.lambdas.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%d,%ld,%ld,%ld,%ld,%.10g\n", b.level, static_cast<long>(b.coarse_n),
                    static_cast<long>(b.decomposition.N), static_cast<long>(b.dofs), static_cast<long>(i + 1),
                    b.result.lambdas(i));
      out += buf;
    }
  return out;
}

std::vector<CsvLambda> parse_lambdas_csv(const std::string& text) {
  std::vector<CsvLambda> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    CsvLambda r;
    long cn = 0, N = 0, dofs = 0;
    if (std::sscanf(line.c_str(), "%d,%ld,%ld,%ld,%d,%lf", &r.level, &cn, &N, &dofs, &r.i, &r.lambda) != 6)
      throw Error("lambdas.csv line " + std::to_string(line_no) + ": malformed row");
    r.coarse_n = cn;
    r.N = N;
    r.dofs = dofs;
    rows.push_back(r);
  }
  return rows;
}

std::string history_jsonl(const RunReport& report) {
  std::string out;
  for (std::size_t bi = 0; bi < report.blocks.size(); ++bi) {
    const auto& b = report.blocks[bi];
    for (const auto& rec : b.result.history) {
      Json j;
      j["block"] = bi;
      j["coarse_n"] = b.coarse_n;
      j["level"] = b.level;
      j["k"] = rec.k;
      j["lambdas"] = vec(rec.lambdas);
      j["sum_delta"] = rec.sum_delta;
      j["residual_norms"] = vec(rec.residual_norms);
      j["wall_ms"] = rec.wall_ms;
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f << text;
  if (!f) throw Error("failed writing '" + path + "'");
}

void write_outputs(const RunReport& report, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  const std::filesystem::path d(dir);
  write_text((d / "report.json").string(), report_to_json(report).dump(2) + "\n");
  write_text((d / "lambdas.csv").string(), lambdas_csv(report));
  write_text((d / "history.jsonl").string(), history_jsonl(report));
  write_text((d / "timings.json").string(), timings_to_json(report).dump(2) + "\n");
}

Json mesh_to_json(const StructuredMesh& m) {
  Json j;
  j["domain"] = m.domain.name();
  j["dim"] = m.dim;
  j["level"] = m.level;
  j["cells"] = {m.cells[0], m.cells[1], m.cells[2]};
  j["mesh_size"] = m.mesh_size;
  Json nodes = Json::array();
  for (Index n = 0; n < m.num_nodes(); ++n) {
    Json p = Json::array();
    for (int a = 0; a < m.dim; ++a) p.push_back(m.nodes(a, n));
    nodes.push_back(p);
  }
  j["nodes"] = nodes;
  Json elems = Json::array();
  for (const auto& e : m.elements) {
    Json v = Json::array();
    for (int k = 0; k < m.vertices_per_element; ++k) v.push_back(e[k]);
    elems.push_back(v);
  }
  j["elements"] = elems;
  Json boundary = Json::array();
  for (char b : m.boundary_node) boundary.push_back(b != 0);
  j["boundary"] = boundary;
  return j;
}

void write_matrix_market(const CsrMatrixd& A, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << "%%MatrixMarket matrix coordinate real general\n";
  f << A.rows() << ' ' << A.cols() << ' ' << A.nnz() << '\n';
  const auto ptr = A.row_ptr();
  const auto idx = A.col_idx();
  const auto val = A.values();
  char buf[64];
  for (Index i = 0; i < A.rows(); ++i)
    for (Index k = ptr[i]; k < ptr[i + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", val[k]);
      f << i + 1 << ' ' << idx[k] + 1 << ' ' << buf << '\n';
    }
  if (!f) throw Error("failed writing '" + path + "'");
}

}  // namespace bpjd
