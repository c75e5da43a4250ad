#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "rpqn/bench/problems.hpp"
#include "rpqn/driver.hpp"

using namespace rpqn;

namespace {

CompositeProblem lasso_identity(const Vector& b, double lambda) {
  SmoothOracle f;
  f.dimension = b.size();
  f.eval = [b](const Vector& x) { return SmoothValue{0.5 * (x - b).squaredNorm(), x - b}; };
  return CompositeProblem(f, std::make_shared<L1Reg>(b.size(), lambda), "lasso");
}

CompositeProblem half_norm(Index n) {
  SmoothOracle f;
  f.dimension = n;
  f.eval = [](const Vector& x) { return SmoothValue{0.5 * x.squaredNorm(), x}; };
  return CompositeProblem(f, std::make_shared<ZeroReg>(n), "half-norm");
}

const UpdateKind kAllKinds[] = {UpdateKind::lbfgs, UpdateKind::lsr1, UpdateKind::lkm, UpdateKind::none};

}  // namespace

TEST(ClassifyStep, Examples) {
  EXPECT_EQ(classify_step(1.0, 1.0, 1e-4, 0.9), StepOutcome::highly_successful);
  EXPECT_EQ(classify_step(0.0, 1.0, 1e-4, 0.9), StepOutcome::unsuccessful);
  EXPECT_EQ(classify_step(0.5, 1.0, 1e-4, 0.9), StepOutcome::successful);
  EXPECT_EQ(classify_step(1.0, 0.0, 1e-4, 0.9), StepOutcome::unsuccessful);
  EXPECT_EQ(classify_step(1.0, -1.0, 1e-4, 0.9), StepOutcome::unsuccessful);
}

TEST(UpdateMu, Examples) {
  SolverConfig cfg;
  EXPECT_EQ(update_mu(1.0, StepOutcome::highly_successful, cfg), 0.5);
  EXPECT_EQ(update_mu(1.0, StepOutcome::unsuccessful, cfg), 4.0);
  EXPECT_EQ(update_mu(1.0, StepOutcome::not_found, cfg), 4.0);
  EXPECT_EQ(update_mu(cfg.mu_min, StepOutcome::highly_successful, cfg), cfg.mu_min);
  EXPECT_EQ(update_mu(3.0, StepOutcome::successful, cfg), 3.0);
  EXPECT_EQ(update_mu(4e8, StepOutcome::unsuccessful, cfg), 1.6e9);  // no upper clamp on failure
}

TEST(UpdateMerit, Examples) {
  EXPECT_EQ(update_merit(10.0, 3.0, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(update_merit(10.0, 0.0, 0.1), 9.0);
  EXPECT_EQ(update_merit(2.5, 2.5, 0.1), 2.5);
  oracle::Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double F = oracle::uniform(rng, -1e3, 1e3);
    const double phi = F + std::abs(oracle::uniform(rng, 0.0, 1e-12));
    EXPECT_GE(update_merit(phi, F, 0.1), F);
  }
}

TEST(Residual, Examples) {
  Vector d(2);
  d << 0.3, 0.4;
  EXPECT_DOUBLE_EQ(residual(2.0, d), 1.0);
  EXPECT_EQ(residual(2.0, Vector::Zero(2)), 0.0);
  EXPECT_DOUBLE_EQ(residual(6.0, d), 3.0 * residual(2.0, d));
}

TEST(ComputeAredPred, ZeroStepAndExactModel) {
  IterateState st;
  st.x = Vector::Ones(2);
  st.f_value = 1.0;
  st.F_value = 1.0;
  st.merit = 1.0;
  st.mu = 0.5;
  SubproblemResult zero;
  zero.d = Vector::Zero(2);
  zero.model_value = 0.0;  // φ = 0 at x̂ = x
  const AredPred ap = compute_ared_pred(st, zero, 1.0);
  EXPECT_EQ(ap.pred, 0.0);
  EXPECT_EQ(ap.ared, 0.0);

  // f = ½xᵀAx with B = A exact: ared = pred
  Matrix A(2, 2);
  A << 3.0, 1.0, 1.0, 2.0;
  const Vector x = Vector::Ones(2);
  const Vector g = A * x;
  Vector d(2);
  d << -0.2, 0.1;
  st.x = x;
  st.f_value = 0.5 * x.dot(A * x);
  st.F_value = st.f_value;
  st.merit = st.F_value;
  SubproblemResult sub;
  sub.d = d;
  sub.model_value = g.dot(d) + 0.5 * d.dot(A * d) + 0.5 * st.mu * d.squaredNorm();
  const Vector xh = x + d;
  const AredPred exact = compute_ared_pred(st, sub, 0.5 * xh.dot(A * xh));
  EXPECT_NEAR(exact.ared, exact.pred, 1e-15);
}

TEST(Run, StronglyConvexSmooth) {
  for (UpdateKind kind : kAllKinds) {
    SolverConfig cfg;
    cfg.update = kind;
    cfg.tol = 1e-3;
    const SolverTrace t = run(half_norm(10), cfg, Vector::Ones(10));
    EXPECT_EQ(t.reason, TerminationReason::residual) << to_string(kind);
    EXPECT_LE(t.x_final.norm(), 1e-3) << to_string(kind);
  }
}

TEST(Run, ClosedFormLasso) {
  oracle::Rng rng(5);
  const Vector b = oracle::randn(rng, 40, 2.0);
  const double lambda = 0.7;
  const Vector expected = oracle::soft(b, lambda);
  for (UpdateKind kind : kAllKinds) {
    for (double eta : {1.0, 0.1}) {
      SolverConfig cfg;
      cfg.update = kind;
      cfg.eta_nm = eta;
      const SolverTrace t = run(lasso_identity(b, lambda), cfg, Vector::Zero(40));
      EXPECT_EQ(t.reason, TerminationReason::residual);
      EXPECT_LE((t.x_final - expected).lpNorm<Eigen::Infinity>(), 1e-4) << to_string(kind) << " eta " << eta;
    }
  }
}

TEST(Run, InfeasibleStartIsRejected) {
  const auto g = bench::gen_obstacle(1, {8, 0.1});
  EXPECT_THROW(run(g.problem, SolverConfig{}, Vector::Ones(24)), ArgumentError);
  EXPECT_THROW(run(g.problem, SolverConfig{}, Vector::Zero(5)), ShapeError);
  SolverConfig bad;
  bad.c1 = 0.95;
  EXPECT_THROW(run(g.problem, bad, g.x0), ArgumentError);
}

TEST(Run, StopsOnIterationAndTimeLimits) {
  const auto g = bench::gen_obstacle(2, {32, 0.01});
  SolverConfig cfg;
  cfg.max_iter = 3;
  const SolverTrace t = run(g.problem, cfg, g.x0);
  EXPECT_EQ(t.reason, TerminationReason::max_iter);
  EXPECT_EQ(t.iterations.size(), 3u);
  cfg.max_iter = 1000000;
  cfg.max_time = 1e-9;
  cfg.tol = 1e-300;
  EXPECT_EQ(run(g.problem, cfg, g.x0).reason, TerminationReason::time);
}

TEST(Run, OracleFailureIsRecorded) {
  SmoothOracle f;
  f.dimension = 1;
  // finite at the start, non-finite once x exceeds 0.5
  f.eval = [](const Vector& x) {
    const double v = x[0] > 0.5 ? std::nan("") : -x[0];
    return SmoothValue{v, Vector::Constant(1, -1.0)};
  };
  CompositeProblem p(f, std::make_shared<ZeroReg>(1), "blowup");
  const SolverTrace t = run(p, SolverConfig{}, Vector::Zero(1));
  EXPECT_EQ(t.reason, TerminationReason::oracle_failure);
  EXPECT_FALSE(t.message.empty());
}

TEST(Run, ObstacleInstanceTerminatesByResidual) {
  const auto g = bench::gen_obstacle(1, {128, 0.1});
  SolverConfig cfg;
  cfg.update = UpdateKind::lbfgs;
  cfg.eta_nm = 0.1;
  cfg.max_time = 30.0;
  const SolverTrace t = run(g.problem, cfg, g.x0);
  EXPECT_EQ(t.reason, TerminationReason::residual);
  EXPECT_LE(t.final_residual, 1e-5);
  EXPECT_TRUE(ObstacleSetReg::contains(t.x_final));
}

TEST(Run, InvariantsOnSmallLogistic) {
  bench::LogisticParams p;
  p.n_f = 60;
  p.n_s = 300;
  p.s = 5;
  p.c_lambda = 0.05;
  const auto g = bench::gen_logistic(4, p);
  for (UpdateKind kind : kAllKinds) {
    for (double eta : {1.0, 0.1}) {
      SolverConfig cfg;
      cfg.update = kind;
      cfg.eta_nm = eta;
      const SolverTrace t = run(g.problem, cfg, g.x0);
      EXPECT_EQ(t.reason, TerminationReason::residual);
      double prev_F = t.F_initial;
      for (const auto& r : t.iterations) {
        EXPECT_GE(r.mu, cfg.mu_min);
        EXPECT_GE(r.mu_next, cfg.mu_min);
        EXPECT_GE(r.merit, r.F);
        if (eta == 1.0) {
          EXPECT_LE(r.F, prev_F);
        }
        prev_F = r.F;
        if (r.status != StepOutcome::not_found) {
          EXPECT_GE(r.pred, 0.5 * r.mu * r.step_norm * r.step_norm - 1e-10);
        }
        if (!is_success(r.status)) {
          EXPECT_EQ(r.buffer_before, r.buffer_after);
        }
        if (is_success(r.status) && r.step_norm > 0.0) {
          EXPECT_GE(r.ared, 0.5 * cfg.c1 * cfg.mu_min * r.step_norm * r.step_norm - 1e-12);
        }
      }
      // one oracle call at x₀ plus one per evaluated candidate
      const long evaluated = std::count_if(t.iterations.begin(), t.iterations.end(), [](const IterationRecord& r) {
        return r.status != StepOutcome::not_found && r.step_norm > 0.0;
      });
      EXPECT_EQ(t.gradient_evaluations, 1 + evaluated);
    }
  }
}

TEST(Run, ZeroMemoryMatchesPlainIteration) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    oracle::Rng rng(seed);
    const Matrix A = oracle::randn_matrix(rng, 30, 20);
    const Vector b = oracle::randn(rng, 30);
    const double lambda = 0.5;
    SmoothOracle f;
    f.dimension = 20;
    f.eval = [A, b](const Vector& x) {
      const Vector r = A * x - b;
      return SmoothValue{0.5 * r.squaredNorm(), A.transpose() * r};
    };
    CompositeProblem p(f, std::make_shared<L1Reg>(20, lambda), "lasso");
    std::vector<Vector> iterates;
    SolverConfig cfg;
    cfg.update = UpdateKind::none;
    cfg.max_iter = 50;
    cfg.tol = 1e-300;
    cfg.observer = [&](const IterationRecord&, const Vector& x) { iterates.push_back(x); };
    run(p, cfg, Vector::Zero(20));

    oracle::PlainPgConfig pc;
    pc.tol = cfg.tol;
    const auto ref = oracle::plain_regularized_pg(
        [&](const Vector& x) { return f.eval(x).value; }, [&](const Vector& x) { return f.eval(x).gradient; },
        [&](const Vector& x) { return lambda * x.lpNorm<1>(); },
        [&](const Vector& y, double t) { return oracle::soft(y, lambda / t); }, Vector::Zero(20), pc);
    ASSERT_EQ(iterates.size(), ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_LE((iterates[k] - ref[k]).norm(), 1e-10) << k;
  }
}
