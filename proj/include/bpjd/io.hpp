#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "bpjd/experiment.hpp"

namespace bpjd {

using Json = nlohmann::ordered_json;

Json to_json(const RunConfig& cfg);
Json to_json(const DecompositionSummary& d);
Json to_json(const ReferenceSolution& ref);
Json to_json(const GapReport& gaps);
/// Everything except wall-clock times, so identical runs give identical bytes.
Json report_to_json(const RunReport& report);
Json timings_to_json(const RunReport& report);

/// One row per eigenvalue per block: level,coarse_n,N,dofs,i,lambda with
/// lambda printed to 10 significant digits.
std::string lambdas_csv(const RunReport& report);

struct CsvLambda {
  int level = 0;
  Index coarse_n = 0;
  Index N = 0;
  Index dofs = 0;
  int i = 0;
  double lambda = 0.0;
};
std::vector<CsvLambda> parse_lambdas_csv(const std::string& text);

/// JSON lines {block, coarse_n, level, k, lambdas, sum_delta, wall_ms}.
std::string history_jsonl(const RunReport& report);

/// Writes report.json, lambdas.csv, history.jsonl and timings.json into dir
/// (created if missing).
void write_outputs(const RunReport& report, const std::string& dir);

/// Nodes, elements and boundary flags.
Json mesh_to_json(const StructuredMesh& mesh);

/// Matrix Market coordinate format (general, real).
void write_matrix_market(const CsrMatrixd& A, const std::string& path);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace bpjd
