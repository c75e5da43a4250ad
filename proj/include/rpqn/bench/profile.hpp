#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rpqn/problem.hpp"

namespace rpqn::bench {

/// One solver run as stored in the records CSV.
struct BenchRecord {
  std::string family;
  std::string params;
  std::uint64_t seed = 0;
  std::string solver;
  std::string accuracy;
  double wall_time_s = 0.0;
  long iters = 0;
  double final_residual = 0.0;
  std::string reason;  // residual | time | max-iter | oracle-failure | error
  double final_F = 0.0;

  // in-memory only, not part of the CSV schema
  long gradient_evaluations = 0;

  bool solved() const { return reason == "residual"; }
  std::string problem_key() const { return family + "|" + params + "|" + std::to_string(seed) + "|" + accuracy; }
};

struct ProfilePoint {
  double kappa = 0.0;
  double rho = 0.0;
};

struct ProfileCurve {
  std::string solver;
  std::vector<ProfilePoint> points;
};

/// κ = 2^{i/4} for i = −24..24, then κ = ∞.
inline std::vector<double> default_kappa_grid() {
  std::vector<double> grid;
  for (int i = -24; i <= 24; ++i) grid.push_back(std::exp2(i / 4.0));
  grid.push_back(std::numeric_limits<double>::infinity());
  return grid;
}

/// Whether τ_s ≤ κ·τ_base. Failures carry τ = ∞; at κ = ∞ the limit of the
/// finite-κ test is used so that ρ(∞) counts problems solved by s or failed by
/// the baseline.
inline bool within_factor(double tau_s, double tau_base, double kappa) {
  if (std::isinf(kappa)) return std::isfinite(tau_s) || std::isinf(tau_base);
  if (std::isinf(tau_base)) return true;
  return tau_s <= kappa * tau_base;
}

inline double profile_fraction(const std::vector<double>& tau_s, const std::vector<double>& tau_base, double kappa) {
  if (tau_s.size() != tau_base.size()) throw ShapeError("profile_fraction: size mismatch");
  if (tau_s.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t p = 0; p < tau_s.size(); ++p) hits += within_factor(tau_s[p], tau_base[p], kappa) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(tau_s.size());
}

/// ρ_{s,base}(κ) = |{p : τ_{s,p} ≤ κ τ_{base,p}}| / |P| for every solver in the
/// records. Missing (solver, problem) cells count as failures.
inline std::vector<ProfileCurve> relative_profile(const std::vector<BenchRecord>& records, const std::string& baseline,
                                                  const std::vector<double>& kappas = default_kappa_grid()) {
  std::set<std::string> solvers;
  std::set<std::string> problems;
  std::map<std::pair<std::string, std::string>, double> tau;
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& r : records) {
    solvers.insert(r.solver);
    problems.insert(r.problem_key());
    tau[{r.solver, r.problem_key()}] = r.solved() ? r.wall_time_s : inf;
  }
  if (!solvers.count(baseline)) throw ArgumentError("relative_profile: baseline solver '" + baseline + "' has no records");

  auto times_of = [&](const std::string& s) {
    std::vector<double> out;
    out.reserve(problems.size());
    for (const auto& p : problems) {
      auto it = tau.find({s, p});
      out.push_back(it == tau.end() ? inf : it->second);
    }
    return out;
  };
  const std::vector<double> base = times_of(baseline);

  std::vector<ProfileCurve> curves;
  for (const auto& s : solvers) {
    ProfileCurve c{s, {}};
    const std::vector<double> ts = times_of(s);
    for (double k : kappas) c.points.push_back({k, profile_fraction(ts, base, k)});
    curves.push_back(std::move(c));
  }
  return curves;
}

/// Median with failures as +∞; even counts average the middle pair.
inline double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  const double a = values[n / 2 - 1];
  const double b = values[n / 2];
  if (std::isinf(a) || std::isinf(b)) return std::numeric_limits<double>::infinity();
  return 0.5 * (a + b);
}

}  // namespace rpqn::bench
