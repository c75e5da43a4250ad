#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <locale>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "rpqn/bench/problems.hpp"
#include "rpqn/bench/profile.hpp"
#include "rpqn/driver.hpp"
#include "rpqn/spg.hpp"

namespace rpqn::bench {

using json = nlohmann::json;

inline constexpr double kLowAccuracy = 1e-3;
inline constexpr double kHighAccuracy = 1e-5;

inline double accuracy_tolerance(const std::string& level) {
  if (level == "low") return kLowAccuracy;
  if (level == "high") return kHighAccuracy;
  try {
    std::size_t used = 0;
    const double v = std::stod(level, &used);
    if (used == level.size() && v > 0.0) return v;
  } catch (const std::exception&) {
  }
  throw ArgumentError("unknown accuracy level '" + level + "' (expected low, high or a positive number)");
}

/// Parsed solver identifier: rpqn-{lbfgs|lsr1|lkm|none} or spg, with an
/// optional "-nm" suffix for the nonmonotone merit (η = 1/10).
struct SolverSpec {
  bool spg = false;
  UpdateKind update = UpdateKind::lbfgs;
  bool nonmonotone = false;

  static SolverSpec parse(const std::string& id) {
    SolverSpec s;
    std::string base = id;
    const std::string suffix = "-nm";
    if (base.size() > suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
      s.nonmonotone = true;
      base.resize(base.size() - suffix.size());
    }
    if (base == "spg") {
      s.spg = true;
    } else if (base.rfind("rpqn-", 0) == 0) {
      s.update = parse_update_kind(base.substr(5));
    } else {
      throw ArgumentError("unknown solver id '" + id + "'");
    }
    return s;
  }
};

inline constexpr double kNonmonotoneEta = 0.1;

/// Reports label the spg baseline as a stand-in of our own making.
inline constexpr const char* kSpgNote =
    "spg / spg-nm: spectral proximal-gradient stand-in with BB1 steps and the same merit rule, "
    "not an external reference implementation";

inline SolverTrace run_solver(const GeneratedProblem& g, const std::string& solver_id, double tol, double time_limit,
                              long max_iter = 1000000) {
  const SolverSpec spec = SolverSpec::parse(solver_id);
  const double eta = spec.nonmonotone ? kNonmonotoneEta : 1.0;
  if (spec.spg) {
    SpgConfig cfg;
    cfg.tol = tol;
    cfg.eta_nm = eta;
    cfg.max_time = time_limit;
    cfg.max_iter = max_iter;
    return spg_run(g.problem, cfg, g.x0);
  }
  SolverConfig cfg;
  cfg.update = spec.update;
  cfg.tol = tol;
  cfg.eta_nm = eta;
  cfg.max_time = time_limit;
  cfg.max_iter = max_iter;
  return run(g.problem, cfg, g.x0);
}

// ---------------------------------------------------------------------------
// Suite configuration (JSON).
//
// {
//   "time_limit": 300,
//   "accuracies": ["low", "high"],
//   "solvers": ["rpqn-lbfgs", "rpqn-lsr1", "rpqn-lkm", "spg"],
//   "globalization": ["monotone", "nonmonotone"],
//   "instances": [
//     {"family": "logistic", "seeds": [1, 2], "n_f": 500, "n_s": 5000, "s": 10,
//      "c_lambda": 0.01, "reg": "l1"},
//     {"family": "student-t", "seeds": [1], "m": 256, "c_lambda": 0.1, "d": 2, "reg": "capped-l1"},
//     {"family": "obstacle", "seeds": [1], "N": 128, "mu_al": 0.1}
//   ]
// }

struct InstanceSpec {
  std::string family;
  std::vector<std::uint64_t> seeds;
  json params = json::object();
};

struct SuiteConfig {
  double time_limit = 300.0;
  long max_iter = 1000000;
  std::vector<std::string> accuracies{"low", "high"};
  std::vector<std::string> solvers;  // full ids, globalization already applied
  std::vector<InstanceSpec> instances;
};

inline GeneratedProblem generate(const std::string& family, std::uint64_t seed, const json& params) {
  if (family == "logistic") {
    LogisticParams p;
    p.n_f = params.value("n_f", p.n_f);
    p.n_s = params.value("n_s", p.n_s);
    p.s = params.value("s", p.s);
    p.c_lambda = params.value("c_lambda", p.c_lambda);
    p.reg = parse_reg_kind(params.value("reg", std::string("l1")));
    return gen_logistic(seed, p);
  }
  if (family == "student-t") {
    StudentTParams p;
    p.m = params.value("m", p.m);
    p.c_lambda = params.value("c_lambda", p.c_lambda);
    p.dynamic_range = params.value("d", p.dynamic_range);
    p.reg = parse_reg_kind(params.value("reg", std::string("l1")));
    return gen_student_t(seed, p);
  }
  if (family == "obstacle") {
    ObstacleParams p;
    p.N = params.value("N", p.N);
    p.mu_al = params.value("mu_al", p.mu_al);
    return gen_obstacle(seed, p);
  }
  throw ArgumentError("unknown problem family '" + family + "'");
}

inline SuiteConfig parse_suite_config(const json& j) {
  SuiteConfig cfg;
  if (!j.is_object()) throw ArgumentError("suite config: top level must be an object");
  cfg.time_limit = j.value("time_limit", cfg.time_limit);
  cfg.max_iter = j.value("max_iter", cfg.max_iter);
  if (!(cfg.time_limit > 0.0)) throw ArgumentError("suite config: time_limit must be positive");
  if (j.contains("accuracies")) cfg.accuracies = j.at("accuracies").get<std::vector<std::string>>();
  for (const auto& a : cfg.accuracies) (void)accuracy_tolerance(a);

  std::vector<std::string> globalization{"nonmonotone"};
  if (j.contains("globalization")) globalization = j.at("globalization").get<std::vector<std::string>>();
  const auto base_solvers = j.value("solvers", std::vector<std::string>{});
  for (const auto& s : base_solvers) {
    for (const auto& g : globalization) {
      if (g != "monotone" && g != "nonmonotone") throw ArgumentError("suite config: unknown globalization '" + g + "'");
      const std::string id = g == "nonmonotone" ? s + "-nm" : s;
      (void)SolverSpec::parse(id);
      cfg.solvers.push_back(id);
    }
  }

  if (j.contains("instances")) {
    for (const auto& item : j.at("instances")) {
      InstanceSpec spec;
      spec.family = item.at("family").get<std::string>();
      spec.seeds = item.value("seeds", std::vector<std::uint64_t>{});
      spec.params = item;
      spec.params.erase("family");
      spec.params.erase("seeds");
      // validate eagerly so config errors surface before any run
      if (spec.family != "logistic" && spec.family != "student-t" && spec.family != "obstacle")
        throw ArgumentError("suite config: unknown family '" + spec.family + "'");
      cfg.instances.push_back(std::move(spec));
    }
  }
  return cfg;
}

inline SuiteConfig load_suite_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open suite config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ArgumentError("suite config '" + path.string() + "': " + e.what());
  }
  return parse_suite_config(j);
}

// ---------------------------------------------------------------------------
// Records CSV: family,params,seed,solver,accuracy,wall_time_s,iters,final_residual,reason,final_F

inline const char* kRecordsHeader = "family,params,seed,solver,accuracy,wall_time_s,iters,final_residual,reason,final_F";

inline std::string format_record(const BenchRecord& r) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << r.family << ',' << r.params << ',' << r.seed << ',' << r.solver << ',' << r.accuracy << ','
     << std::setprecision(9) << r.wall_time_s << ',' << r.iters << ',' << std::setprecision(17) << r.final_residual
     << ',' << r.reason << ',' << r.final_F;
  return os.str();
}

inline double parse_number(const std::string& s) {
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  is >> v;
  if (is.fail()) throw ArgumentError("records: bad number '" + s + "'");
  return v;
}

inline BenchRecord parse_record(const std::string& line) {
  std::vector<std::string> cols;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cols.push_back(cell);
  if (cols.size() != 10) throw ArgumentError("records: expected 10 columns, got " + std::to_string(cols.size()));
  BenchRecord r;
  r.family = cols[0];
  r.params = cols[1];
  r.seed = std::stoull(cols[2]);
  r.solver = cols[3];
  r.accuracy = cols[4];
  r.wall_time_s = parse_number(cols[5]);
  r.iters = std::stol(cols[6]);
  r.final_residual = parse_number(cols[7]);
  r.reason = cols[8];
  r.final_F = parse_number(cols[9]);
  return r;
}

inline std::vector<BenchRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open records '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) throw ArgumentError("records: missing or wrong header");
  std::vector<BenchRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

inline BenchRecord run_cell(const GeneratedProblem& g, const std::string& solver, const std::string& accuracy,
                            double time_limit, long max_iter = 1000000) {
  BenchRecord rec;
  rec.family = g.family;
  rec.params = g.params;
  rec.seed = g.seed;
  rec.solver = solver;
  rec.accuracy = accuracy;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const SolverTrace trace = run_solver(g, solver, accuracy_tolerance(accuracy), time_limit, max_iter);
    rec.iters = static_cast<long>(trace.iterations.size());
    rec.final_residual = trace.final_residual;
    rec.reason = to_string(trace.reason);
    rec.final_F = trace.F_final;
    rec.gradient_evaluations = trace.gradient_evaluations;
  } catch (const std::exception&) {
    rec.reason = "error";
    rec.final_residual = std::numeric_limits<double>::infinity();
    rec.final_F = std::numeric_limits<double>::quiet_NaN();
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

/// Runs every (instance × solver × accuracy) cell sequentially. When
/// records_path is non-empty the CSV is written incrementally.
inline std::vector<BenchRecord> run_suite(const SuiteConfig& cfg, const std::filesystem::path& records_path = {},
                                          const std::function<void(const BenchRecord&)>& on_record = {}) {
  std::ofstream out;
  if (!records_path.empty()) {
    out.open(records_path);
    if (!out) throw Error("cannot write records to '" + records_path.string() + "'");
    out << kRecordsHeader << '\n' << std::flush;
  }
  std::vector<BenchRecord> records;
  for (const auto& inst : cfg.instances) {
    for (std::uint64_t seed : inst.seeds) {
      const GeneratedProblem g = generate(inst.family, seed, inst.params);
      for (const auto& solver : cfg.solvers) {
        for (const auto& acc : cfg.accuracies) {
          BenchRecord rec = run_cell(g, solver, acc, cfg.time_limit, cfg.max_iter);
          if (out.is_open()) out << format_record(rec) << '\n' << std::flush;
          if (on_record) on_record(rec);
          records.push_back(std::move(rec));
        }
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Reports.

struct MedianRow {
  std::string family;
  std::string accuracy;
  std::string solver;
  double median_time = 0.0;
  int runs = 0;
  int failures = 0;
  bool best = false;
};

inline std::vector<MedianRow> median_table(const std::vector<BenchRecord>& records) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> cells;
  std::map<std::tuple<std::string, std::string, std::string>, int> failures;
  for (const auto& r : records) {
    const auto key = std::make_tuple(r.family, r.accuracy, r.solver);
    cells[key].push_back(r.solved() ? r.wall_time_s : std::numeric_limits<double>::infinity());
    failures[key] += r.solved() ? 0 : 1;
  }
  std::vector<MedianRow> rows;
  for (const auto& [key, times] : cells) {
    rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), median(times),
                    static_cast<int>(times.size()), failures[key], false});
  }
  // best marker: minimal median per (family, accuracy) column
  std::map<std::pair<std::string, std::string>, std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto col = std::make_pair(rows[i].family, rows[i].accuracy);
    auto it = best.find(col);
    if (it == best.end() || rows[i].median_time < rows[it->second].median_time) best[col] = i;
  }
  for (const auto& [col, i] : best)
    if (std::isfinite(rows[i].median_time)) rows[i].best = true;
  return rows;
}

inline std::string choose_baseline(const std::vector<BenchRecord>& records) {
  std::set<std::string> solvers;
  for (const auto& r : records) solvers.insert(r.solver);
  for (const char* preferred : {"spg-nm", "spg"})
    if (solvers.count(preferred)) return preferred;
  return solvers.empty() ? std::string() : *solvers.begin();
}

inline void write_profile_csv(std::ostream& os, const std::vector<ProfileCurve>& curves, const std::string& baseline,
                              const std::string& prefix_cols = {}) {
  os.imbue(std::locale::classic());
  for (const auto& c : curves)
    for (const auto& p : c.points)
      os << prefix_cols << c.solver << ',' << baseline << ',' << std::setprecision(17) << p.kappa << ','
         << p.rho << '\n';
}

/// Writes medians.csv, profiles.csv and summary.json into dir.
inline void emit_reports(const std::vector<BenchRecord>& records, const std::filesystem::path& dir,
                         std::string baseline = {}) {
  if (records.empty()) throw ArgumentError("emit_reports: no records");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (baseline.empty()) baseline = choose_baseline(records);

  const auto rows = median_table(records);
  {
    std::ofstream os(dir / "medians.csv");
    if (!os) throw Error("cannot write '" + (dir / "medians.csv").string() + "'");
    os.imbue(std::locale::classic());
    os << "family,accuracy,solver,median_wall_time_s,runs,failures,best\n";
    for (const auto& r : rows)
      os << r.family << ',' << r.accuracy << ',' << r.solver << ',' << std::setprecision(9) << r.median_time << ','
         << r.runs << ',' << r.failures << ',' << (r.best ? 1 : 0) << '\n';
  }
  {
    std::ofstream os(dir / "profiles.csv");
    if (!os) throw Error("cannot write '" + (dir / "profiles.csv").string() + "'");
    os << "family,accuracy,solver,baseline,kappa,rho\n";
    std::map<std::pair<std::string, std::string>, std::vector<BenchRecord>> groups;
    for (const auto& r : records) groups[{r.family, r.accuracy}].push_back(r);
    for (const auto& [key, group] : groups) {
      bool has_baseline = false;
      for (const auto& r : group) has_baseline = has_baseline || r.solver == baseline;
      if (!has_baseline) continue;
      write_profile_csv(os, relative_profile(group, baseline), baseline, key.first + "," + key.second + ",");
    }
  }
  {
    json summary;
    summary["baseline"] = baseline;
    summary["spg_note"] = kSpgNote;
    summary["records"] = records.size();
    json cells = json::array();
    for (const auto& r : rows) {
      if (!r.best) continue;
      cells.push_back({{"family", r.family},
                       {"accuracy", r.accuracy},
                       {"best_solver", r.solver},
                       {"median_wall_time_s", r.median_time}});
    }
    summary["best"] = cells;
    json table = json::array();
    for (const auto& r : rows)
      table.push_back({{"family", r.family},
                       {"accuracy", r.accuracy},
                       {"solver", r.solver},
                       {"median_wall_time_s", std::isfinite(r.median_time) ? json(r.median_time) : json(nullptr)},
                       {"runs", r.runs},
                       {"failures", r.failures}});
    summary["medians"] = table;
    std::ofstream os(dir / "summary.json");
    if (!os) throw Error("cannot write '" + (dir / "summary.json").string() + "'");
    os << summary.dump(2) << '\n';
  }
}

}  // namespace rpqn::bench
