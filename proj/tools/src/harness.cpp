#include "monoreg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <iterator>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "monoreg/errors.hpp"

namespace monoreg::cli {
namespace {

using nlohmann::json;

std::string num(double x) { return fmt::format("{:.17g}", x); }

void reject_unknown(const json& obj, std::string_view where,
                    std::initializer_list<std::string_view> known) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw SpecError(fmt::format("unknown key \"{}\" in {}", key, where));
    }
  }
}

const json& require_object(const json& parent, const char* key) {
  if (!parent.contains(key)) throw SpecError(fmt::format("missing \"{}\"", key));
  const json& v = parent.at(key);
  if (!v.is_object()) throw SpecError(fmt::format("\"{}\" must be an object", key));
  return v;
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  return obj.at(key).get<T>();
}

Vector to_vector(const json& arr) {
  if (!arr.is_array()) throw SpecError("expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

Matrix to_matrix(const json& rows) {
  if (!rows.is_array() || rows.empty()) throw SpecError("\"A\" must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector row = to_vector(rows[static_cast<std::size_t>(i)]);
    if (row.size() != n) throw SpecError("\"A\" must be square");
    m.row(i) = row.transpose();
  }
  return m;
}

std::size_t positive_size(const json& obj, const char* key, std::size_t fallback) {
  const long v = get_or<long>(obj, key, static_cast<long>(fallback));
  if (v < 1) throw SpecError(fmt::format("\"{}\" must be >= 1", key));
  return static_cast<std::size_t>(v);
}

Vector source_vector(const json& record, std::size_t n, SourceShape fallback, double amplitude) {
  amplitude = get_or(record, "amplitude", amplitude);
  if (!record.contains("y")) return make_source(fallback, n, amplitude);
  const json& y = record.at("y");
  if (y.is_array()) {
    Vector v = to_vector(y);
    if (static_cast<std::size_t>(v.size()) != n) {
      throw SpecError(fmt::format("\"y\" has {} entries, expected {}", v.size(), n));
    }
    return v;
  }
  const auto shape = y.get<std::string>();
  if (shape == "ones") return make_source(SourceShape::Ones, n, amplitude);
  if (shape == "harmonic") return make_source(SourceShape::Harmonic, n, amplitude);
  if (shape == "sine") return make_source(SourceShape::Sine, n, amplitude);
  throw SpecError(fmt::format("unknown y shape \"{}\"", shape));
}

std::unique_ptr<Problem> build_problem_unchecked(const json& r) {
  const auto kind = r.at("kind").get<std::string>();
  if (kind == "diagonal") {
    reject_unknown(r, "diagonal problem",
                   {"kind", "n", "decay", "rate", "eigenvalues", "y", "amplitude",
                    "known_solution"});
    if (r.contains("eigenvalues")) {
      const Vector eig = to_vector(r.at("eigenvalues"));
      if (eig.size() == 0) throw SpecError("\"eigenvalues\" must be non-empty");
      return std::make_unique<DiagonalProblem>(
          eig, source_vector(r, static_cast<std::size_t>(eig.size()), SourceShape::Ones, 1.0));
    }
    const std::size_t n = positive_size(r, "n", 50);
    const auto decay = get_or<std::string>(r, "decay", "poly");
    Decay d;
    if (decay == "poly") {
      d = PolyDecay{get_or(r, "rate", 2.0)};
    } else if (decay == "exp") {
      d = ExpDecay{get_or(r, "rate", 0.5)};
    } else {
      throw SpecError(fmt::format("unknown decay \"{}\"", decay));
    }
    return std::make_unique<DiagonalProblem>(
        build_diagonal(n, d, source_vector(r, n, SourceShape::Ones, 1.0)));
  }
  if (kind == "fredholm") {
    reject_unknown(r, "fredholm problem", {"kind", "n", "known_solution"});
    return std::make_unique<FredholmProblem>(build_fredholm(positive_size(r, "n", 100)));
  }
  if (kind == "cubic") {
    reject_unknown(r, "cubic problem", {"kind", "n", "A", "y", "amplitude", "known_solution"});
    std::optional<Matrix> a;
    std::size_t n = 0;
    if (r.contains("A")) {
      a = to_matrix(r.at("A"));
      n = static_cast<std::size_t>(a->rows());
    } else {
      n = positive_size(r, "n", 20);
    }
    return std::make_unique<CubicProblem>(
        build_cubic(n, a, source_vector(r, n, SourceShape::Sine, 0.5)));
  }
  if (kind == "rank_one") {
    reject_unknown(r, "rank_one problem", {"kind", "dim", "known_solution"});
    return std::make_unique<RankOneProblem>(build_rank_one(positive_size(r, "dim", 2)));
  }
  throw SpecError(fmt::format("unknown problem kind \"{}\"", kind));
}

DiscrepancyConfig parse_discrepancy(const json& d) {
  reject_unknown(d, "discrepancy",
                 {"C", "gamma", "C1", "C2", "theta", "eps", "mode", "a_init",
                  "max_bracket_steps", "exact_tol", "audit", "audit_pairs"});
  DiscrepancyConfig cfg;
  cfg.C = get_or(d, "C", cfg.C);
  cfg.gamma = get_or(d, "gamma", cfg.gamma);
  cfg.C1 = get_or(d, "C1", cfg.C1);
  cfg.C2 = get_or(d, "C2", cfg.C2);
  cfg.theta = get_or(d, "theta", cfg.theta);
  cfg.eps = get_or(d, "eps", cfg.eps);
  cfg.a_init = get_or(d, "a_init", cfg.a_init);
  cfg.max_bracket_steps = get_or(d, "max_bracket_steps", cfg.max_bracket_steps);
  cfg.exact_tol = get_or(d, "exact_tol", cfg.exact_tol);
  cfg.audit_monotonicity = get_or(d, "audit", cfg.audit_monotonicity);
  cfg.audit_pairs = get_or(d, "audit_pairs", cfg.audit_pairs);
  const auto mode = get_or<std::string>(d, "mode", "band");
  if (mode == "band") {
    cfg.mode = DiscrepancyMode::Band;
  } else if (mode == "exact") {
    cfg.mode = DiscrepancyMode::Exact;
  } else {
    throw SpecError(fmt::format("unknown discrepancy mode \"{}\"", mode));
  }
  return cfg;
}

IterationConfig parse_solver(const json& s) {
  reject_unknown(s, "solver",
                 {"tol_min", "max_iter", "R", "method", "lambda", "stagnation_window",
                  "max_retries", "lipschitz_samples"});
  IterationConfig cfg;
  cfg.tol_min = get_or(s, "tol_min", cfg.tol_min);
  cfg.max_iter = get_or(s, "max_iter", cfg.max_iter);
  cfg.R = get_or(s, "R", cfg.R);
  cfg.stagnation_window = get_or(s, "stagnation_window", cfg.stagnation_window);
  cfg.max_retries = get_or(s, "max_retries", cfg.max_retries);
  cfg.lipschitz_samples = get_or(s, "lipschitz_samples", cfg.lipschitz_samples);
  if (s.contains("lambda")) cfg.lambda_override = s.at("lambda").get<double>();
  const auto method = get_or<std::string>(s, "method", "auto");
  if (method == "auto") {
    cfg.method = InnerMethod::Auto;
  } else if (method == "fixed_point") {
    cfg.method = InnerMethod::FixedPoint;
  } else if (method == "cg") {
    cfg.method = InnerMethod::ConjugateGradient;
  } else {
    throw SpecError(fmt::format("unknown solver method \"{}\"", method));
  }
  return cfg;
}

std::vector<double> parse_grid(const json& g) {
  std::vector<double> grid;
  if (g.is_array()) {
    for (const json& x : g) grid.push_back(x.get<double>());
  } else if (g.is_object()) {
    reject_unknown(g, "a_grid", {"min", "max", "points"});
    const double lo = g.at("min").get<double>();
    const double hi = g.at("max").get<double>();
    const int points = g.at("points").get<int>();
    if (!(lo > 0.0) || !(hi >= lo) || points < 1) {
      throw SpecError("a_grid needs 0 < min <= max and points >= 1");
    }
    for (int k = 0; k < points; ++k) {
      const double t = points == 1 ? 0.0 : static_cast<double>(k) / (points - 1);
      grid.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
    }
    grid.front() = lo;
    grid.back() = hi;
  } else {
    throw SpecError("a_grid must be an array or {min, max, points}");
  }
  for (double a : grid) {
    if (!(a > 0.0) || !std::isfinite(a)) throw SpecError(fmt::format("a_grid entry {} <= 0", a));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

void require_positive_deltas(const RunSpec& spec) {
  for (double d : spec.deltas) {
    if (!(d > 0.0)) throw SpecError("solve and sweep need delta > 0");
  }
}

}  // namespace

std::unique_ptr<Problem> build_problem(const json& record) {
  if (!record.is_object() || !record.contains("kind")) {
    throw SpecError("problem record needs a \"kind\"");
  }
  try {
    std::unique_ptr<Problem> p = build_problem_unchecked(record);
    if (!get_or(record, "known_solution", true)) p->hide_solution();
    return p;
  } catch (const json::exception& e) {
    throw SpecError(std::string("problem: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SpecError(std::string("problem: ") + e.what());
  }
}

RunSpec parse_spec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SpecError("spec must be a JSON object");
  try {
    reject_unknown(doc, "spec",
                   {"problem", "delta", "discrepancy", "solver", "seed", "a_grid", "oracle"});
    RunSpec spec;
    spec.problem = require_object(doc, "problem");
    build_problem(spec.problem);

    if (!doc.contains("delta")) throw SpecError("missing \"delta\"");
    const json& d = doc.at("delta");
    if (d.is_array()) {
      if (d.empty()) throw SpecError("\"delta\" list is empty");
      for (const json& x : d) spec.deltas.push_back(x.get<double>());
    } else {
      spec.deltas.push_back(d.get<double>());
    }
    for (double x : spec.deltas) {
      if (!(x >= 0.0) || !std::isfinite(x)) throw SpecError("delta must be finite and >= 0");
    }

    if (doc.contains("discrepancy")) spec.cfg = parse_discrepancy(require_object(doc, "discrepancy"));
    if (doc.contains("solver")) spec.solver = parse_solver(require_object(doc, "solver"));
    if (doc.contains("seed")) {
      const json& s = doc.at("seed");
      if (!s.is_number_unsigned()) throw SpecError("\"seed\" must be a non-negative integer");
      spec.seed = s.get<std::uint64_t>();
    }
    spec.solver.seed = spec.seed;
    if (doc.contains("a_grid")) spec.a_grid = parse_grid(doc.at("a_grid"));
    spec.use_oracle = get_or(doc, "oracle", true);

    spec.solver.validate();
    for (double x : spec.deltas) {
      if (x > 0.0) spec.cfg.validate(x);
    }
    return spec;
  } catch (const json::exception& e) {
    throw SpecError(std::string("spec: ") + e.what());
  } catch (const ConfigError& e) {
    throw SpecError(e.what());
  }
}

RunSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError(fmt::format("cannot read spec file {}", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str());
}

bool success(DiscrepancyStatus status) {
  return status == DiscrepancyStatus::Converged ||
         status == DiscrepancyStatus::ZeroWithinDiscrepancy;
}

SolveRecord solve_one(const Problem& problem, const RunSpec& spec, double delta) {
  const NoisyProblem np = problem.noisy(delta, spec.seed);
  SolveRecord rec;
  rec.delta = delta;
  rec.result = solve_discrepancy(np.op, np.f_delta, delta, spec.cfg, spec.solver);
  if (problem.y()) rec.error = (rec.result.v_delta - *problem.y()).norm();
  return rec;
}

nlohmann::json to_json(const SolveRecord& rec) {
  const DiscrepancyResult& r = rec.result;
  json out;
  out["delta"] = rec.delta;
  out["status"] = std::string(to_string(r.status));
  out["alpha"] = std::isfinite(r.alpha) ? json(r.alpha) : json(nullptr);
  out["phi_value"] = r.phi_value;
  out["psi"] = r.v_delta.norm();
  out["residual"] = r.residual;
  out["total_inner_iters"] = r.total_inner_iters;
  out["error"] = rec.error ? json(*rec.error) : json(nullptr);
  out["bracket"] =
      r.bracket ? json{{"low", r.bracket->low}, {"up", r.bracket->up}} : json(nullptr);
  out["trials"] = r.trials.size();
  out["v_delta"] = std::vector<double>(r.v_delta.begin(), r.v_delta.end());
  return out;
}

std::string to_csv_row(const SolveRecord& rec) {
  const DiscrepancyResult& r = rec.result;
  return fmt::format("{},{},{},{},{},{}", num(rec.delta), num(r.alpha), num(r.phi_value),
                     num(r.v_delta.norm()),
                     num(rec.error.value_or(std::numeric_limits<double>::quiet_NaN())),
                     r.total_inner_iters);
}

Output cmd_solve(const RunSpec& spec) {
  if (spec.deltas.size() != 1) throw SpecError("solve needs a single delta");
  require_positive_deltas(spec);
  const auto problem = build_problem(spec.problem);
  const SolveRecord rec = solve_one(*problem, spec, spec.deltas.front());
  return Output{to_json(rec).dump(2) + "\n",
                success(rec.result.status) ? kExitOk : kExitNotConverged};
}

Output cmd_sweep(const RunSpec& spec) {
  require_positive_deltas(spec);
  const auto problem = build_problem(spec.problem);
  if (!problem->y()) throw SpecError("sweep needs a problem with known solution y");
  std::vector<double> deltas = spec.deltas;
  std::sort(deltas.begin(), deltas.end(), std::greater<>());
  deltas.erase(std::unique(deltas.begin(), deltas.end()), deltas.end());

  std::vector<std::future<SolveRecord>> rows;
  rows.reserve(deltas.size());
  for (double d : deltas) {
    rows.push_back(std::async(std::launch::async,
                              [&problem, &spec, d] { return solve_one(*problem, spec, d); }));
  }
  Output out;
  out.text = std::string(kSweepHeader) + "\n";
  for (auto& row : rows) {
    const SolveRecord rec = row.get();
    out.text += to_csv_row(rec) + "\n";
    if (!success(rec.result.status)) out.exit_code = kExitNotConverged;
  }
  return out;
}

Output cmd_phi_curve(const RunSpec& spec) {
  const auto problem = build_problem(spec.problem);
  const NoisyProblem np = problem->noisy(spec.deltas.front(), spec.seed);
  IterationConfig solver = spec.solver;
  solver.delta = 0.0;

  Output out;
  out.text = std::string(kPhiCurveHeader) + "\n";
  double prev_phi = 0.0;
  double prev_psi = 0.0;
  bool first = true;
  for (double a : spec.a_grid) {
    double phi = 0.0;
    double psi = 0.0;
    if (spec.use_oracle) {
      const Vector v = problem->oracle_solution(a, np.f_delta);
      phi = (np.op(v) - np.f_delta).norm();
      psi = v.norm();
    } else {
      const PhiPsi r = phi_psi(np.op, np.f_delta, a, solver);
      phi = r.phi;
      psi = r.psi;
    }
    const bool violation = !first && (phi <= prev_phi || psi >= prev_psi);
    out.text += fmt::format("{},{},{},{}\n", num(a), num(phi), num(psi), violation ? 1 : 0);
    prev_phi = phi;
    prev_psi = psi;
    first = false;
  }
  return out;
}

bool verify_result(const RunSpec& spec, const nlohmann::json& result) {
  try {
    const auto problem = build_problem(spec.problem);
    const double delta = result.at("delta").get<double>();
    const NoisyProblem np = problem->noisy(delta, spec.seed);
    const Vector v = to_vector(result.at("v_delta"));
    if (static_cast<std::size_t>(v.size()) != problem->dim()) return false;
    const auto status = result.at("status").get<std::string>();
    if (status == to_string(DiscrepancyStatus::ZeroWithinDiscrepancy)) {
      return v.isZero(0.0) && precondition_check(np.op, np.f_delta, delta, spec.cfg) ==
                                  Precondition::ZeroWithinDiscrepancy;
    }
    if (result.at("alpha").is_null()) return false;
    return satisfies_stopping_conditions(np.op, np.f_delta, delta, spec.cfg, spec.solver,
                                         result.at("alpha").get<double>(), v);
  } catch (const json::exception&) {
    return false;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrepancy-principle solver for monotone ill-posed equations", "monoreg"};
  app.require_subcommand(1);
  std::string spec_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"solve", "sweep", "phi-curve"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--spec", spec_path, "JSON run specification")->required();
    sub->add_option("--out", out_path, "write the result here instead of stdout");
    sub->add_option("--seed", seed, "noise seed, overrides the spec");
  }
  app.get_subcommand("solve")->description("choose a by the discrepancy principle, emit JSON");
  app.get_subcommand("sweep")->description("solve over the delta list, emit CSV");
  app.get_subcommand("phi-curve")->description("phi and psi over an a grid, emit CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "monoreg: " << e.what() << "\n";
    return kExitSpec;
  }

  try {
    RunSpec spec = load_spec(spec_path);
    if (seed) {
      spec.seed = *seed;
      spec.solver.seed = *seed;
    }
    Output result;
    if (app.got_subcommand("solve")) {
      result = cmd_solve(spec);
    } else if (app.got_subcommand("sweep")) {
      result = cmd_sweep(spec);
    } else {
      result = cmd_phi_curve(spec);
    }
    if (out_path.empty()) {
      out << result.text;
    } else {
      std::ofstream file(out_path, std::ios::binary);
      if (!file) {
        err << "monoreg: cannot write " << out_path << "\n";
        return kExitNotConverged;
      }
      file << result.text;
    }
    return result.exit_code;
  } catch (const SpecError& e) {
    err << "monoreg: " << e.what() << "\n";
    return kExitSpec;
  } catch (const std::invalid_argument& e) {
    err << "monoreg: " << e.what() << "\n";
    return kExitSpec;
  } catch (const SolverError& e) {
    err << "monoreg: solver error: " << e.what() << "\n";
    return kExitSolver;
  }
}

}  // namespace monoreg::cli
