#include "bpjd/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace bpjd {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& text, int line, const std::string& key) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigParseError(line, key, "'" + text + "' is not a valid number");
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, int line, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigParseError(line, key, "empty list entry");
    out.push_back(parse_number<T>(item, line, key));
  }
  if (out.empty()) throw ConfigParseError(line, key, "list is empty");
  return out;
}

bool parse_bool(const std::string& text, int line, const std::string& key) {
  if (text == "true" || text == "on" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "off" || text == "0" || text == "no") return false;
  throw ConfigParseError(line, key, "'" + text + "' is not a boolean (true/false)");
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out;
}

bool is_power_of_two(Index x) { return x > 0 && (x & (x - 1)) == 0; }

int log2_exact(Index x) {
  int k = 0;
  while (x > 1) {
    x >>= 1;
    ++k;
  }
  return k;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs `fn`, prefixing any library error with the stage. ConfigurationError
/// keeps its type so callers can still tell user mistakes from failures.
template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigurationError& e) {
    throw ConfigurationError(stage + ": " + e.what());
  } catch (const Error& e) {
    throw Error(stage + ": " + e.what());
  }
}

}  // namespace

DomainSpec RunConfig::domain_spec() const {
  if (domain == "box2d") return DomainSpec::box(2, M_PI);
  if (domain == "box3d") return DomainSpec::box(3, M_PI);
  if (domain == "lshape2d") return DomainSpec::l_shape(2);
  if (domain == "lshape3d") return DomainSpec::l_shape(3);
  throw ConfigParseError(0, "domain", "unknown domain '" + domain + "' (expected box2d, lshape2d, box3d or lshape3d)");
}

SolverConfig RunConfig::solver_config() const {
  SolverConfig c;
  c.s = s;
  c.tol = tol;
  c.tau = tau;
  c.max_outer = max_outer;
  c.policy = policy;
  c.overlap_ratio = overlap_ratio;
  c.record_bases = diagnostics;
  c.threads = threads;
  return c;
}

void RunConfig::validate() const {
  const DomainSpec spec = domain_spec();
  if (!(overlap_ratio > 0.0 && overlap_ratio < 1.0))
    throw ConfigParseError(0, "overlap_ratio", "must lie in (0, 1), got " + format_double(overlap_ratio));
  if (s < 1) throw ConfigParseError(0, "s", "must be at least 1");
  if (!(tol > 0.0)) throw ConfigParseError(0, "tol", "must be positive");
  if (tau < 0) throw ConfigParseError(0, "tau", "must be non-negative");
  if (max_outer < 1) throw ConfigParseError(0, "max_outer", "must be at least 1");
  if (threads < 0) throw ConfigParseError(0, "threads", "must be non-negative");
  if (coarse_n.empty()) throw ConfigParseError(0, "coarse_n", "no value given");
  for (Index n : coarse_n) {
    if (n < 2) throw ConfigParseError(0, "coarse_n", "must be at least 2");
    if (spec.kind == DomainKind::l_shape && n % 2 != 0)
      throw ConfigParseError(0, "coarse_n", "L-shaped domains need an even coarse_n");
  }
  if (mode == RunMode::levels) {
    if (coarse_n.size() != 1) throw ConfigParseError(0, "coarse_n", "levels mode takes a single coarse_n");
    if (refine_levels.empty()) throw ConfigParseError(0, "refine_levels", "no value given");
    for (std::size_t i = 0; i < refine_levels.size(); ++i) {
      if (refine_levels[i] < 1) throw ConfigParseError(0, "refine_levels", "levels must be at least 1");
      if (i > 0 && refine_levels[i] <= refine_levels[i - 1])
        throw ConfigParseError(0, "refine_levels", "levels must be strictly increasing");
    }
    if (tau > refine_levels.front())
      throw ConfigParseError(0, "tau", "exceeds the smallest refinement level " + std::to_string(refine_levels.front()));
  } else {
    if (fine_n < 2) throw ConfigParseError(0, "fine_n", "scalability mode needs fine_n >= 2");
    for (std::size_t i = 0; i < coarse_n.size(); ++i) {
      const Index n = coarse_n[i];
      if (fine_n % n != 0 || !is_power_of_two(fine_n / n) || fine_n == n)
        throw ConfigParseError(0, "coarse_n",
                               std::to_string(n) + " does not reach fine_n = " + std::to_string(fine_n) +
                                   " by uniform refinement");
      if (tau > log2_exact(fine_n / n))
        throw ConfigParseError(0, "tau", "exceeds the refinement depth for coarse_n = " + std::to_string(n));
      if (i > 0 && n <= coarse_n[i - 1]) throw ConfigParseError(0, "coarse_n", "values must be strictly increasing");
    }
  }
}

RunConfig parse_config(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty() || line.front() == ';' || (line.front() == '[' && line.back() == ']')) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigParseError(line_no, "", "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigParseError(line_no, "", "missing key before '='");
    if (seen.count(key)) throw ConfigParseError(line_no, key, "duplicate key (first set on line " +
                                                                  std::to_string(seen[key]) + ")");
    seen[key] = line_no;
    if (value.empty()) throw ConfigParseError(line_no, key, "missing value");

    if (key == "name") cfg.name = value;
    else if (key == "domain") cfg.domain = value;
    else if (key == "mode") {
      if (value == "levels") cfg.mode = RunMode::levels;
      else if (value == "scalability") cfg.mode = RunMode::scalability;
      else throw ConfigParseError(line_no, key, "expected levels or scalability");
    } else if (key == "coarse_n") cfg.coarse_n = parse_list<Index>(value, line_no, key);
    else if (key == "refine_levels") cfg.refine_levels = parse_list<int>(value, line_no, key);
    else if (key == "fine_n") cfg.fine_n = parse_number<Index>(value, line_no, key);
    else if (key == "overlap_ratio") cfg.overlap_ratio = parse_number<double>(value, line_no, key);
    else if (key == "s") cfg.s = parse_number<Index>(value, line_no, key);
    else if (key == "tol") cfg.tol = parse_number<double>(value, line_no, key);
    else if (key == "tau") cfg.tau = parse_number<int>(value, line_no, key);
    else if (key == "max_outer") cfg.max_outer = parse_number<int>(value, line_no, key);
    else if (key == "subspace_policy") {
      try {
        cfg.policy = parse_policy(value);
      } catch (const ConfigurationError& e) {
        throw ConfigParseError(line_no, key, e.what());
      }
    } else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, line_no, key);
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "diagnostics") cfg.diagnostics = parse_bool(value, line_no, key);
    else if (key == "threads") cfg.threads = parse_number<int>(value, line_no, key);
    else if (key == "note") cfg.note = value;
    else throw ConfigParseError(line_no, key, "unknown key");
  }
  try {
    cfg.validate();
  } catch (const ConfigParseError& e) {
    const auto it = seen.find(e.field());
    if (it == seen.end()) throw;
    // Re-issue with the line the offending key was set on.
    std::string detail = e.what();
    const std::string prefix = "field '" + e.field() + "': ";
    if (detail.rfind(prefix, 0) == 0) detail.erase(0, prefix.size());
    throw ConfigParseError(it->second, e.field(), detail);
  }
  return cfg;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
  std::ifstream f(path);
  if (!f) throw ConfigParseError(0, "", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), base);
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream o;
  o << "name = " << c.name << "\n";
  o << "domain = " << c.domain << "\n";
  o << "mode = " << (c.mode == RunMode::levels ? "levels" : "scalability") << "\n";
  o << "coarse_n = " << join(c.coarse_n) << "\n";
  if (c.mode == RunMode::levels) o << "refine_levels = " << join(c.refine_levels) << "\n";
  else o << "fine_n = " << c.fine_n << "\n";
  o << "overlap_ratio = " << format_double(c.overlap_ratio) << "\n";
  o << "s = " << c.s << "\n";
  o << "tol = " << format_double(c.tol) << "\n";
  o << "tau = " << c.tau << "\n";
  o << "max_outer = " << c.max_outer << "\n";
  o << "subspace_policy = " << to_string(c.policy) << "\n";
  o << "seed = " << c.seed << "\n";
  o << "output_dir = " << c.output_dir << "\n";
  o << "diagnostics = " << (c.diagnostics ? "true" : "false") << "\n";
  o << "threads = " << c.threads << "\n";
  if (!c.note.empty()) o << "note = " << c.note << "\n";
  return o.str();
}

namespace {

RunConfig make_preset(std::string name, std::string domain, RunMode mode, std::vector<Index> coarse,
                      std::vector<int> levels, Index fine_n, double ratio, Index s, int tau, std::string note) {
  RunConfig c;
  c.name = std::move(name);
  c.domain = std::move(domain);
  c.mode = mode;
  c.coarse_n = std::move(coarse);
  c.refine_levels = std::move(levels);
  c.fine_n = fine_n;
  c.overlap_ratio = ratio;
  c.s = s;
  c.tau = tau;
  c.policy = SubspacePolicy::fixed_3s;
  c.output_dir = "out/" + c.name;
  c.note = std::move(note);
  return c;
}

const std::vector<RunConfig>& registry() {
  using M = RunMode;
  static const std::vector<RunConfig> presets = {
      make_preset("table1-desk", "box2d", M::levels, {8}, {2, 3, 4}, 0, 0.25, 19, 1,
                  "N=128 instead of 512 and 961-16129 dofs; coarse_n=8 because s=19 needs more than 19 coarse dofs"),
      make_preset("table2-desk", "box2d", M::scalability, {4, 8, 16}, {}, 64, 0.25, 6, 0,
                  "N=32/128/512 instead of 512/2048/8192 on 3969 dofs; s=6 because coarse_n=4 has only 9 coarse "
                  "dofs; tau=0 keeps the initial dense problem small"),
      make_preset("table3-desk", "lshape2d", M::levels, {8}, {2, 3, 4}, 0, 0.25, 20, 1,
                  "N=96 instead of 384 and 705-12033 dofs"),
      make_preset("table4-desk", "lshape2d", M::scalability, {8, 16, 32}, {}, 128, 0.25, 20, 0,
                  "N=96/384/1536 instead of 384/1536/6144 on 12033 dofs; tau=0"),
      make_preset("table5-desk", "box3d", M::levels, {8}, {1, 2}, 0, 0.5, 20, 0,
                  "N=512 at full scale, 3375 and 29791 dofs; coarse_n=4 is infeasible for s=20 because "
                  "lambda_20 exceeds the local Dirichlet floor; tau=0"),
      make_preset("table6-desk", "box3d", M::scalability, {4, 8}, {}, 16, 0.5, 7, 0,
                  "N=64/512 instead of 512/4096 on 3375 dofs; s=7 (the 9-cluster closes at 7) because s=20 is "
                  "infeasible at N=64; tau=0"),
      make_preset("table7-desk", "lshape3d", M::levels, {16}, {1}, 0, 0.5, 20, 0,
                  "N=1536 at full scale, first level only (10575 dofs); tau=0"),
      make_preset("table8-desk", "lshape3d", M::scalability, {8, 16}, {}, 32, 0.5, 20, 0,
                  "N=192/1536 instead of 1536/12288 on 10575 dofs; tau=0"),
      make_preset("smoke", "box2d", M::levels, {4}, {1, 2}, 0, 0.5, 3, 0, "small sanity run"),
  };
  return presets;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : registry()) names.push_back(p.name);
  return names;
}

RunConfig preset(const std::string& name) {
  for (const auto& p : registry())
    if (p.name == name) return p;
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigurationError("unknown preset '" + name + "' (known: " + known + ")");
}

DecompositionSummary summarize(const Decomposition& d) {
  DecompositionSummary s;
  s.N = d.N;
  s.overlap_layers = d.overlap_layers;
  s.H = d.H;
  s.h = d.h;
  s.delta = d.delta;
  s.colors = d.num_colors;
  std::map<Index, Index> hist;
  double total = 0;
  s.min_local_dofs = d.N > 0 ? std::numeric_limits<Index>::max() : 0;
  for (const auto& dofs : d.local_dofs) {
    const Index n = static_cast<Index>(dofs.size());
    s.min_local_dofs = std::min(s.min_local_dofs, n);
    s.max_local_dofs = std::max(s.max_local_dofs, n);
    total += n;
    ++hist[n];
  }
  s.mean_local_dofs = d.N > 0 ? total / d.N : 0.0;
  s.dof_histogram.assign(hist.begin(), hist.end());
  return s;
}

bool RunReport::all_converged() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const RunBlock& b) { return b.result.converged; });
}

int RunReport::monotonicity_violations() const {
  int total = 0;
  for (const auto& b : blocks) total += b.result.monotonicity_violations;
  return total;
}

RunReport run_experiment(const RunConfig& cfg, const std::function<void(const std::string&)>& log) {
  staged("config", [&] { cfg.validate(); });
  const DomainSpec spec = cfg.domain_spec();
  const SolverConfig scfg = cfg.solver_config();
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };

  struct Job {
    Index coarse_n;
    int level;
  };
  std::vector<Job> jobs;
  if (cfg.mode == RunMode::levels) {
    for (int L : cfg.refine_levels) jobs.push_back({cfg.coarse_n.front(), L});
  } else {
    for (Index n : cfg.coarse_n) jobs.push_back({n, log2_exact(cfg.fine_n / n)});
  }

  RunReport report;
  report.config = cfg;
  for (const auto& job : jobs) {
    const std::string where = " [coarse_n=" + std::to_string(job.coarse_n) + ", level=" + std::to_string(job.level) + "]";
    RunBlock block;
    block.level = job.level;
    block.coarse_n = job.coarse_n;
    auto t0 = std::chrono::steady_clock::now();

    auto [coarse, fine, init] = staged("mesh" + where, [&] {
      auto c = std::make_shared<StructuredMesh>(build_coarse_mesh(spec, job.coarse_n));
      auto f = std::make_shared<StructuredMesh>(refine(*c, job.level));
      return std::make_tuple(c, f, refine(*c, cfg.tau));
    });
    const FeProblem problem = staged("assembly" + where, [&] { return assemble(fine); });
    block.dofs = problem.n_free;
    const Decomposition d = staged("decomposition" + where, [&] {
      return build_decomposition(*coarse, *fine, overlap_layers_for_ratio(*coarse, *fine, cfg.overlap_ratio));
    });
    block.decomposition = summarize(d);
    const CoarseSpectral cs = staged("coarse" + where, [&] { return build_coarse_spectral(problem, *coarse, cfg.s); });
    const CsrMatrixd P_init = staged("initialization" + where, [&] { return prolongation(init, *fine); });
    block.setup_ms = ms_since(t0);
    say("setup" + where + ": " + std::to_string(block.dofs) + " dofs, N = " + std::to_string(d.N));

    t0 = std::chrono::steady_clock::now();
    block.result = staged("solve" + where, [&] {
      SolverState state = cfg.tau == 0 ? initialize_from(problem, P_init, cs.eigvecs, scfg)
                                        : initialize(problem, P_init, scfg);
      const TwoLevelPreconditioner prec(problem, d, &cs, cfg.threads);
      EigResult r = solve(problem, prec, scfg, std::move(state));
      r.init.init_dofs = init.num_free();
      return r;
    });
    block.solve_ms = ms_since(t0);
    say("solve" + where + ": " + std::to_string(block.result.iterations) + " iterations, " +
        (block.result.converged ? "converged" : "NOT converged"));

    if (cfg.diagnostics) {
      t0 = std::chrono::steady_clock::now();
      staged("diagnostics" + where, [&] {
        block.reference = reference_solve(problem, cfg.s);
        if (block.reference->gap_ok) {
          BoundOptions opt;
          opt.check_g = true;
          opt.tol = cfg.tol;
          block.gaps = check_iteration_bounds(block.result.history, *block.reference, problem, opt);
        } else {
          say("diagnostics" + where + ": " + block.reference->advisory);
        }
      });
      block.diagnostics_ms = ms_since(t0);
      // The per-iteration bases were only needed for the bounds.
      for (auto& rec : block.result.history) rec.U.resize(0, 0);
    }
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace bpjd
