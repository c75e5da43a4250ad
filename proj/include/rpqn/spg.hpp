#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>

#include "rpqn/driver.hpp"
#include "rpqn/problem.hpp"

namespace rpqn {

/// Proximal gradient with Barzilai–Borwein (BB1) stepsizes and halving
/// backtracking on the same merit as the quasi-Newton driver.
struct SpgConfig {
  double step_min = 1e-10;
  double step_max = 1e10;
  double step0 = 1.0;
  double c1 = 1e-4;
  double eta_nm = 1.0;
  double tol = 1e-5;
  double max_time = 300.0;
  long max_iter = 1000000;

  void validate() const {
    if (!(0.0 < step_min && step_min < step_max)) throw ArgumentError("SpgConfig: need 0 < step_min < step_max");
    if (!(step0 >= step_min && step0 <= step_max)) throw ArgumentError("SpgConfig: step0 outside bounds");
    if (!(c1 > 0.0 && c1 < 1.0)) throw ArgumentError("SpgConfig: c1 must lie in (0, 1)");
    if (!(eta_nm > 0.0 && eta_nm <= 1.0)) throw ArgumentError("SpgConfig: eta_nm must lie in (0, 1]");
    if (!(tol > 0.0)) throw ArgumentError("SpgConfig: tol must be positive");
    if (!(max_time > 0.0) || max_iter < 0) throw ArgumentError("SpgConfig: invalid limits");
  }
};

/// Records reuse IterationRecord; the mu column holds 1/stepsize.
inline SolverTrace spg_run(const CompositeProblem& problem, const SpgConfig& cfg, const Vector& x0) {
  cfg.validate();
  const Index n = problem.dimension();
  if (x0.size() != n) throw ShapeError("spg_run: starting point has wrong length");
  const Regularizer& reg = *problem.regularizer;
  const ExtendedReal phi0 = reg.value(x0);
  if (phi0.is_infinite()) throw ArgumentError("spg_run: starting point is outside the domain of the regularizer");

  const auto t0 = std::chrono::steady_clock::now();
  SolverTrace trace;
  trace.x_final = x0;

  SmoothValue fx;
  try {
    fx = eval_smooth(problem, x0);
  } catch (const OracleFailure& e) {
    trace.reason = TerminationReason::oracle_failure;
    trace.message = e.what();
    trace.wall_time = detail::seconds_since(t0);
    return trace;
  }
  trace.gradient_evaluations = 1;

  Vector x = x0;
  double F = fx.value + phi0.value();
  double merit = F;
  double step = cfg.step0;
  trace.F_initial = F;
  trace.F_final = F;

  for (long k = 0;; ++k) {
    if (k >= cfg.max_iter) {
      trace.reason = TerminationReason::max_iter;
      break;
    }
    if (detail::seconds_since(t0) > cfg.max_time) {
      trace.reason = TerminationReason::time;
      break;
    }

    IterationRecord rec;
    rec.k = k;
    rec.mu = 1.0 / step;

    const Vector x_new = reg.prox(x - step * fx.gradient, 1.0 / step);
    const Vector d = x_new - x;
    const double dd = d.squaredNorm();
    rec.step_norm = std::sqrt(dd);

    auto finish_record = [&](StepOutcome status) {
      rec.status = status;
      rec.F = F;
      rec.merit = merit;
      rec.mu_next = 1.0 / step;
      trace.iterations.push_back(rec);
    };

    if (dd == 0.0) {
      rec.residual = 0.0;
      trace.final_residual = 0.0;
      finish_record(StepOutcome::successful);
      trace.reason = TerminationReason::residual;
      break;
    }

    const ExtendedReal phi_new = reg.value(x_new);
    SmoothValue f_new;
    try {
      f_new = eval_smooth(problem, x_new);
    } catch (const OracleFailure& e) {
      trace.reason = TerminationReason::oracle_failure;
      trace.message = e.what();
      finish_record(StepOutcome::unsuccessful);
      break;
    }
    ++trace.gradient_evaluations;

    const ExtendedReal F_new = ExtendedReal(f_new.value) + phi_new;
    const double required = cfg.c1 / (2.0 * step) * dd;
    rec.pred = required;
    rec.ared = merit - F_new.as_double();
    if (F_new.is_infinite() || !(F_new.value() <= merit - required)) {
      step = std::max(0.5 * step, cfg.step_min);
      finish_record(StepOutcome::unsuccessful);
      continue;
    }

    const double r = std::sqrt(dd) / step;
    rec.residual = r;
    const Vector dg = f_new.gradient - fx.gradient;
    const double curvature = d.dot(dg);
    if (curvature > 0.0) step = std::clamp(dd / curvature, cfg.step_min, cfg.step_max);

    x = x_new;
    fx = std::move(f_new);
    F = F_new.value();
    merit = update_merit(merit, F, cfg.eta_nm);
    ++trace.successful_iterations;
    trace.final_residual = r;
    finish_record(StepOutcome::successful);

    if (r <= cfg.tol) {
      trace.reason = TerminationReason::residual;
      break;
    }
  }

  trace.x_final = x;
  trace.F_final = F;
  trace.wall_time = detail::seconds_since(t0);
  return trace;
}

}  // namespace rpqn
