// Command-line front end for the benchmark harness.
//
//   bench run     --config suite.json --out results/
//   bench profile --records results/records.csv --baseline spg-nm [--out profile.csv]
//   bench gen     --family logistic --seed 3 [--n_f 500 ...]
//   bench solve   --family obstacle --seed 1 --solver rpqn-lbfgs-nm [--accuracy high]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rpqn/bench/suite.hpp"

namespace {

using rpqn::bench::json;

struct FamilyOptions {
  std::string family;
  std::uint64_t seed = 1;
  int n_f = 500;
  int n_s = 5000;
  int s = 10;
  int m = 256;
  int d = 2;
  int N = 128;
  double c_lambda = 0.1;
  double mu_al = 0.1;
  std::string reg = "l1";

  json params() const {
    if (family == "logistic") return {{"n_f", n_f}, {"n_s", n_s}, {"s", s}, {"c_lambda", c_lambda}, {"reg", reg}};
    if (family == "student-t") return {{"m", m}, {"d", d}, {"c_lambda", c_lambda}, {"reg", reg}};
    return {{"N", N}, {"mu_al", mu_al}};
  }
};

void add_family_options(CLI::App* cmd, FamilyOptions& o) {
  cmd->add_option("--family", o.family, "Problem family")
      ->required()
      ->check(CLI::IsMember({"logistic", "student-t", "obstacle"}));
  cmd->add_option("--seed", o.seed, "Instance seed")->required();
  cmd->add_option("--n_f", o.n_f, "logistic: features")->check(CLI::PositiveNumber);
  cmd->add_option("--n_s", o.n_s, "logistic: samples")->check(CLI::PositiveNumber);
  cmd->add_option("--s", o.s, "logistic: nonzeros per sample")->check(CLI::PositiveNumber);
  cmd->add_option("--m", o.m, "student-t: measurements")->check(CLI::PositiveNumber);
  cmd->add_option("--d", o.d, "student-t: dynamic range")->check(CLI::NonNegativeNumber);
  cmd->add_option("--N", o.N, "obstacle: grid size")->check(CLI::Range(2, 1 << 20));
  cmd->add_option("--c_lambda", o.c_lambda, "regularization factor")->check(CLI::Range(1e-300, 1.0));
  cmd->add_option("--mu_al", o.mu_al, "obstacle: penalty parameter")->check(CLI::PositiveNumber);
  cmd->add_option("--reg", o.reg, "l1 or capped-l1")->check(CLI::IsMember({"l1", "capped-l1"}));
}

int cmd_run(const std::string& config, const std::filesystem::path& out) {
  const auto cfg = rpqn::bench::load_suite_config(config);
  std::filesystem::create_directories(out);
  const auto records = rpqn::bench::run_suite(cfg, out / "records.csv", [](const rpqn::bench::BenchRecord& r) {
    std::cerr << r.family << ' ' << r.params << " seed=" << r.seed << ' ' << r.solver << ' ' << r.accuracy << " -> "
              << r.reason << " in " << r.wall_time_s << " s, " << r.iters << " iterations\n";
  });
  if (!records.empty()) rpqn::bench::emit_reports(records, out);
  std::cout << records.size() << " records written to " << (out / "records.csv").string() << '\n';
  return 0;
}

int cmd_profile(const std::string& records_path, const std::string& baseline, const std::string& out) {
  const auto records = rpqn::bench::read_records(records_path);
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw rpqn::Error("cannot write '" + out + "'");
    os = &file;
  }
  *os << "solver,baseline,kappa,rho\n";
  rpqn::bench::write_profile_csv(*os, rpqn::bench::relative_profile(records, baseline), baseline);
  return 0;
}

int cmd_gen(const FamilyOptions& o) {
  const auto g = rpqn::bench::generate(o.family, o.seed, o.params());
  json meta{{"family", g.family}, {"params", g.params}, {"seed", g.seed}, {"dimension", g.problem.dimension()},
            {"regularizer", g.problem.regularizer->name()}};
  const auto f0 = rpqn::eval_smooth(g.problem, g.x0);
  meta["F_x0"] = rpqn::eval_objective(g.problem, g.x0).as_double();
  meta["grad_x0_norm"] = f0.gradient.norm();
  for (const auto& [k, v] : g.info) meta["info"][k] = v;
  std::cout << meta.dump(2) << '\n';
  return 0;
}

int cmd_solve(const FamilyOptions& o, const std::string& solver, const std::string& accuracy, double time_limit,
              bool verbose) {
  const auto g = rpqn::bench::generate(o.family, o.seed, o.params());
  const auto trace =
      rpqn::bench::run_solver(g, solver, rpqn::bench::accuracy_tolerance(accuracy), time_limit);
  if (verbose) {
    std::cout << "k,F,merit,mu,step_norm,residual,status,inner\n";
    for (const auto& r : trace.iterations)
      std::cout << r.k << ',' << r.F << ',' << r.merit << ',' << r.mu << ',' << r.step_norm << ',' << r.residual
                << ',' << rpqn::to_string(r.status) << ',' << r.inner_iterations << '\n';
  }
  json out{{"solver", solver},
           {"reason", rpqn::to_string(trace.reason)},
           {"iterations", trace.iterations.size()},
           {"successful", trace.successful_iterations},
           {"gradient_evaluations", trace.gradient_evaluations},
           {"F_initial", trace.F_initial},
           {"F_final", trace.F_final},
           {"final_residual", trace.final_residual},
           {"wall_time_s", trace.wall_time}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark harness for the regularized proximal quasi-Newton solvers"};
  app.require_subcommand(1);

  std::string config, out_dir = "bench-out";
  auto* run = app.add_subcommand("run", "Run a benchmark suite");
  run->add_option("--config", config, "Suite config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory");

  std::string records, baseline, profile_out;
  auto* profile = app.add_subcommand("profile", "Relative profiles from a records CSV");
  profile->add_option("--records", records, "Records CSV")->required()->check(CLI::ExistingFile);
  profile->add_option("--baseline", baseline, "Baseline solver id")->required();
  profile->add_option("--out", profile_out, "Output CSV (default: stdout)");

  FamilyOptions gen_opts;
  auto* gen = app.add_subcommand("gen", "Generate an instance and print its metadata");
  add_family_options(gen, gen_opts);

  FamilyOptions solve_opts;
  std::string solver = "rpqn-lbfgs-nm", accuracy = "high";
  double time_limit = 300.0;
  bool verbose = false;
  auto* solve = app.add_subcommand("solve", "Solve one generated instance");
  add_family_options(solve, solve_opts);
  solve->add_option("--solver", solver, "Solver id, e.g. rpqn-lsr1-nm or spg");
  solve->add_option("--accuracy", accuracy, "low, high, or a tolerance");
  solve->add_option("--time-limit", time_limit, "Seconds")->check(CLI::PositiveNumber);
  solve->add_flag("--trace", verbose, "Print the iteration trace as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out_dir);
    if (*profile) return cmd_profile(records, baseline, profile_out);
    if (*gen) return cmd_gen(gen_opts);
    if (*solve) return cmd_solve(solve_opts, solver, accuracy, time_limit, verbose);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
