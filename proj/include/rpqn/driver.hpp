#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rpqn/problem.hpp"
#include "rpqn/quasi_newton.hpp"
#include "rpqn/subproblem.hpp"

namespace rpqn {

enum class StepOutcome { highly_successful, successful, unsuccessful, not_found };
enum class TerminationReason { residual, time, max_iter, oracle_failure };

inline std::string to_string(StepOutcome s) {
  switch (s) {
    case StepOutcome::highly_successful: return "highly-successful";
    case StepOutcome::successful: return "successful";
    case StepOutcome::unsuccessful: return "unsuccessful";
    case StepOutcome::not_found: return "not-found";
  }
  return "?";
}

inline std::string to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::residual: return "residual";
    case TerminationReason::time: return "time";
    case TerminationReason::max_iter: return "max-iter";
    case TerminationReason::oracle_failure: return "oracle-failure";
  }
  return "?";
}

inline bool is_success(StepOutcome s) {
  return s == StepOutcome::highly_successful || s == StepOutcome::successful;
}

/// One outer iteration. F and merit are taken after the iteration; mu is the
/// value used to build G in it.
struct IterationRecord {
  long k = 0;
  double F = 0.0;
  double merit = 0.0;
  double mu = 0.0;
  double mu_next = 0.0;
  double step_norm = 0.0;
  double residual = std::numeric_limits<double>::quiet_NaN();
  double pred = std::numeric_limits<double>::quiet_NaN();
  double ared = std::numeric_limits<double>::quiet_NaN();
  StepOutcome status = StepOutcome::unsuccessful;
  int inner_iterations = 0;
  std::uint64_t buffer_before = 0;
  std::uint64_t buffer_after = 0;
};

struct SolverConfig {
  double c1 = 1e-4;
  double c2 = 0.9;
  double sigma1 = 0.5;
  double sigma2 = 4.0;
  double mu_min = 1e-8;
  double mu_max = 1e8;
  double mu0 = 1.0;
  int memory = 10;
  UpdateKind update = UpdateKind::lbfgs;
  double eta_nm = 1.0;  // 1 is monotone
  double tol = 1e-5;
  double inner_tol = kInnerTolerance;
  int inner_max_iter = kInnerMaxIterations;
  double max_time = 300.0;
  long max_iter = 1000000;
  // called after every outer iteration with its record and the current point
  std::function<void(const IterationRecord&, const Vector&)> observer;

  void validate() const {
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw ArgumentError("SolverConfig: need 0 < c1 < c2 < 1");
    if (!(0.0 < sigma1 && sigma1 < 1.0 && sigma2 > 1.0)) throw ArgumentError("SolverConfig: need 0 < sigma1 < 1 < sigma2");
    if (!(0.0 < mu_min && mu_min <= mu0 && mu0 <= mu_max)) throw ArgumentError("SolverConfig: need 0 < mu_min <= mu0 <= mu_max");
    if (!(eta_nm > 0.0 && eta_nm <= 1.0)) throw ArgumentError("SolverConfig: eta_nm must lie in (0, 1]");
    if (!(tol > 0.0) || !(inner_tol > 0.0)) throw ArgumentError("SolverConfig: tolerances must be positive");
    if (memory < 0) throw ArgumentError("SolverConfig: negative memory");
    if (!(max_time > 0.0) || max_iter < 0) throw ArgumentError("SolverConfig: invalid limits");
  }
};

struct SolverTrace {
  std::vector<IterationRecord> iterations;
  Vector x_final;
  double F_initial = 0.0;
  double F_final = 0.0;
  double final_residual = std::numeric_limits<double>::infinity();
  TerminationReason reason = TerminationReason::max_iter;
  long gradient_evaluations = 0;
  long successful_iterations = 0;
  double wall_time = 0.0;
  std::string message;
};

/// pred = F(x) − q(x̂) with q = q̂ − (μ/2)‖x̂ − x‖²; ared = Φ − F(x̂).
struct AredPred {
  double ared;
  double pred;
};

inline AredPred compute_ared_pred(const IterateState& state, const SubproblemResult& sub, double F_hat) {
  const double phi_x = state.F_value - state.f_value;
  const double pred = phi_x - sub.model_value + 0.5 * state.mu * sub.d.squaredNorm();
  return {state.merit - F_hat, pred};
}

inline StepOutcome classify_step(double ared, double pred, double c1, double c2) {
  if (!(pred > 0.0) || !(ared >= c1 * pred)) return StepOutcome::unsuccessful;
  if (ared >= c2 * pred) return StepOutcome::highly_successful;
  return StepOutcome::successful;
}

inline double update_mu(double mu, StepOutcome outcome, const SolverConfig& cfg) {
  switch (outcome) {
    case StepOutcome::highly_successful: return std::clamp(cfg.sigma1 * mu, cfg.mu_min, cfg.mu_max);
    case StepOutcome::successful: return std::clamp(mu, cfg.mu_min, cfg.mu_max);
    case StepOutcome::unsuccessful:
    case StepOutcome::not_found: return cfg.sigma2 * mu;
  }
  return mu;
}

inline double update_merit(double merit, double F_new, double eta_nm) {
  if (eta_nm == 1.0) return F_new;
  // the max only absorbs rounding when merit and F_new nearly coincide
  return std::max(F_new, eta_nm * F_new + (1.0 - eta_nm) * merit);
}

inline double residual(double mu, const Vector& d) { return mu * d.norm(); }

namespace detail {

/// Rebuilds the compact model from scratch, dropping the oldest pair on
/// failure until the build succeeds.
inline CompactForm rebuild_model(UpdateKind kind, PairBuffer& buffer, Index n) {
  if (kind == UpdateKind::none) return build_compact(kind, buffer, 1.0, n);
  for (;;) {
    try {
      return build_compact(kind, buffer, init_scale(buffer), n);
    } catch (const RebuildFailure&) {
      buffer.drop_oldest();
    }
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Regularized proximal quasi-Newton method.
inline SolverTrace run(const CompositeProblem& problem, const SolverConfig& cfg, const Vector& x0) {
  cfg.validate();
  const Index n = problem.dimension();
  if (x0.size() != n) throw ShapeError("run: starting point has wrong length");
  const Regularizer& reg = *problem.regularizer;
  const ExtendedReal phi0 = reg.value(x0);
  if (phi0.is_infinite()) throw ArgumentError("run: starting point is outside the domain of the regularizer");

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

  IterateState st;
  st.x = x0;
  st.f_value = fx.value;
  st.gradient = std::move(fx.gradient);
  st.F_value = fx.value + phi0.value();
  st.merit = st.F_value;
  st.mu = cfg.mu0;
  trace.F_initial = st.F_value;
  trace.F_final = st.F_value;

  PairBuffer buffer(cfg.memory);
  CompactForm model = detail::rebuild_model(cfg.update, buffer, n);

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
    st.iteration = k;
    rec.mu = st.mu;
    rec.buffer_before = buffer.fingerprint();

    const SignedLowRankMetric G = split_signed_lowrank(model, st.mu);
    const SubproblemResult sub = solve_subproblem(st.x, st.gradient, G, reg, cfg.inner_tol, cfg.inner_max_iter);
    rec.inner_iterations = sub.inner_iterations;

    auto finish_record = [&](StepOutcome status) {
      rec.status = status;
      rec.F = st.F_value;
      rec.merit = st.merit;
      rec.mu_next = st.mu;
      rec.buffer_after = buffer.fingerprint();
      trace.iterations.push_back(rec);
      if (cfg.observer) cfg.observer(rec, st.x);
    };

    if (!sub.solved()) {
      st.mu = update_mu(st.mu, StepOutcome::not_found, cfg);
      finish_record(StepOutcome::not_found);
      continue;
    }

    const double dnorm = sub.d.norm();
    rec.step_norm = dnorm;
    if (dnorm == 0.0) {
      // x is stationary for the model
      rec.residual = 0.0;
      rec.pred = 0.0;
      rec.ared = st.merit - st.F_value;
      trace.final_residual = 0.0;
      finish_record(StepOutcome::successful);
      trace.reason = TerminationReason::residual;
      break;
    }

    SmoothValue f_hat;
    try {
      f_hat = eval_smooth(problem, sub.x_hat);
    } catch (const OracleFailure& e) {
      trace.reason = TerminationReason::oracle_failure;
      trace.message = e.what();
      finish_record(StepOutcome::unsuccessful);
      break;
    }
    ++trace.gradient_evaluations;

    const double F_hat = f_hat.value + sub.phi_x_hat;
    const AredPred ap = compute_ared_pred(st, sub, F_hat);
    rec.ared = ap.ared;
    rec.pred = ap.pred;
    const StepOutcome outcome = classify_step(ap.ared, ap.pred, cfg.c1, cfg.c2);

    if (!is_success(outcome)) {
      st.mu = update_mu(st.mu, outcome, cfg);
      finish_record(outcome);
      continue;
    }

    if (cfg.update != UpdateKind::none) buffer.push(sub.d, f_hat.gradient - st.gradient, cfg.update);
    const double r = residual(st.mu, sub.d);
    rec.residual = r;
    st.mu = update_mu(st.mu, outcome, cfg);
    st.x = sub.x_hat;
    st.f_value = f_hat.value;
    st.gradient = std::move(f_hat.gradient);
    st.F_value = F_hat;
    st.merit = update_merit(st.merit, F_hat, cfg.eta_nm);
    model = detail::rebuild_model(cfg.update, buffer, n);
    ++trace.successful_iterations;
    trace.final_residual = r;
    finish_record(outcome);

    if (r <= cfg.tol) {
      trace.reason = TerminationReason::residual;
      break;
    }
  }

  trace.x_final = st.x;
  trace.F_final = st.F_value;
  trace.wall_time = detail::seconds_since(t0);
  return trace;
}

}  // namespace rpqn
