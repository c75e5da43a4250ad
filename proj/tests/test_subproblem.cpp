#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "rpqn/regularizers.hpp"
#include "rpqn/subproblem.hpp"

using namespace rpqn;

namespace {

struct Instance {
  SignedLowRankMetric G;
  Vector x, g;
};

// δI + U₁U₁ᵀ − U₂U₂ᵀ with ‖U₂‖² ≤ δ/2, so G ⪰ (δ/2)I
Instance random_instance(oracle::Rng& rng, Index n, int r1, int r2) {
  const double delta = oracle::uniform(rng, 0.5, 2.0);
  const Matrix U1 = oracle::randn_matrix(rng, n, r1, 0.5);
  Matrix U2 = oracle::randn_matrix(rng, n, r2);
  if (r2 > 0) U2 *= std::sqrt(0.5 * delta) / U2.norm();
  return {SignedLowRankMetric::make(delta, U1, U2), oracle::randn(rng, n), oracle::randn(rng, n)};
}

}  // namespace

TEST(XiResidual, EmptyFactors) {
  const L1Reg reg(4, 0.5);
  const SignedLowRankMetric G = make_identity_metric(4, 2.0);
  Vector y(4);
  y << 1.0, -3.0, 0.1, 2.0;
  const ProxContext ctx = make_prox_context(G, reg, y);
  EXPECT_EQ(xi_residual(ctx, Vector(0)).size(), 0);
  EXPECT_EQ(reconstruct_point(ctx, Vector(0)), l1_prox_scaled(y, 0.5, 2.0));
}

TEST(XiResidual, ZeroRegularizerVanishesAtZero) {
  oracle::Rng rng(1);
  const Instance inst = random_instance(rng, 8, 2, 1);
  const ZeroReg reg(8);
  const ProxContext ctx = make_prox_context(inst.G, reg, inst.x);
  EXPECT_LE(xi_residual(ctx, Vector::Zero(3)).norm(), 1e-14);
  // affine in α with the stated blocks
  const Vector a = oracle::randn(rng, 3);
  const Vector xi = xi_residual(ctx, a);
  const Matrix& U1 = inst.G.U1();
  const Matrix& U2 = inst.G.U2();
  const Vector h0u1a = ctx.h0_inv_u1 * a.head(2);
  const Vector h1u2a = ctx.h1_inv_u2 * a.tail(1);
  EXPECT_LE((xi.head(2) - (U1.transpose() * h0u1a + a.head(2))).norm(), 1e-12);
  EXPECT_LE((xi.tail(1) - (U2.transpose() * (h0u1a - h1u2a) + a.tail(1))).norm(), 1e-12);
}

TEST(ProxContext, CachedSolvesAreConsistent) {
  oracle::Rng rng(2);
  const Instance inst = random_instance(rng, 12, 3, 2);
  const ZeroReg reg(12);
  const ProxContext ctx = make_prox_context(inst.G, reg, inst.x);
  const Matrix H1 = inst.G.diag() * Matrix::Identity(12, 12) + inst.G.U1() * inst.G.U1().transpose();
  EXPECT_LE((H1 * ctx.h1_inv_u2 - inst.G.U2()).norm(), 1e-10);
}

TEST(XiJacobian, SpecialCases) {
  oracle::Rng rng(3);
  const Instance inst = random_instance(rng, 6, 2, 0);
  // Γ = I (zero regularizer), no U₂: J = I + U₁ᵀU₁/δ
  const ZeroReg zero(6);
  const ProxContext c0 = make_prox_context(inst.G, zero, inst.x);
  const Matrix expect = Matrix::Identity(2, 2) + inst.G.U1().transpose() * inst.G.U1() / inst.G.diag();
  EXPECT_LE((xi_jacobian(c0, Vector::Zero(2)) - expect).norm(), 1e-12);
  // Γ = 0: huge λ thresholds everything
  const L1Reg big(6, 1e6);
  const ProxContext c1 = make_prox_context(inst.G, big, inst.x);
  EXPECT_EQ(xi_jacobian(c1, Vector::Zero(2)), Matrix::Identity(2, 2));
}

TEST(XiJacobian, MatchesFiniteDifferencesAwayFromKinks) {
  oracle::Rng rng(4);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng, 10, 2, 2);
    const L1Reg reg(10, 0.3);
    const ProxContext ctx = make_prox_context(inst.G, reg, inst.x);
    const Vector a = oracle::randn(rng, 4, 0.3);
    // skip points where a coordinate of w sits within 1e-4 of a kink
    const Vector w = ctx.anchor + ctx.h1_inv_u2 * a.tail(2) - ctx.h0_inv_u1 * a.head(2);
    if (((w.array().abs() - 0.3 / inst.G.diag()).abs() < 1e-4).any()) continue;
    const Matrix fd = oracle::fd_jacobian([&](const Vector& z) { return xi_residual(ctx, z); }, a);
    EXPECT_LE((fd - xi_jacobian(ctx, a)).lpNorm<Eigen::Infinity>(), 1e-5);
    ++checked;
  }
  EXPECT_GT(checked, 40);
}

TEST(SemismoothNewton, AffineMapOneStep) {
  Vector target(3);
  target << 1.0, -2.0, 0.5;
  const NewtonResult r = semismooth_newton_generic([&](const Vector& a) -> Vector { return a - target; },
                                                   [](const Vector&) -> Matrix { return Matrix::Identity(3, 3); },
                                                   Vector::Zero(3), 1e-12, 10);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LE((r.alpha - target).norm(), 1e-15);
}

TEST(SemismoothNewton, EmptySystem) {
  const L1Reg reg(3, 1.0);
  const SignedLowRankMetric G = make_identity_metric(3, 1.0);
  const ProxContext ctx = make_prox_context(G, reg, Vector::Ones(3));
  const NewtonResult r = semismooth_newton(ctx, Vector(0));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.alpha.size(), 0);
}

TEST(SemismoothNewton, ConvexL1SeedSweep) {
  // n = 50 with memory 5 (rank up to 10); records the worst iteration count
  int worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    oracle::Rng rng(seed);
    const auto pairs = oracle::random_pairs(rng, 50, 5, true);
    PairBuffer b(5);
    for (const auto& p : pairs) b.push(p.d, p.y, UpdateKind::lbfgs);
    const SignedLowRankMetric G = split_signed_lowrank(build_lbfgs(b, init_scale(b)), 0.1);
    const L1Reg reg(50, 0.5);
    const Vector x = oracle::randn(rng, 50), g = oracle::randn(rng, 50);
    const ProxContext ctx = make_prox_context(G, reg, x - G.apply_inverse(g));
    const NewtonResult r = semismooth_newton(ctx, Vector::Zero(ctx.reduced_size()));
    ASSERT_TRUE(r.converged) << "seed " << seed;
    EXPECT_LE(r.residual_inf, 1e-9);
    worst = std::max(worst, r.iterations);
  }
  EXPECT_LE(worst, 25);
  RecordProperty("worst_newton_iterations", worst);
}

TEST(SolveSubproblem, IdentityMetricIsProximalGradientStep) {
  oracle::Rng rng(6);
  const Vector x = oracle::randn(rng, 9), g = oracle::randn(rng, 9);
  const L1Reg reg(9, 0.4);
  const SubproblemResult r = solve_subproblem(x, g, make_identity_metric(9, 2.5), reg);
  ASSERT_TRUE(r.solved());
  EXPECT_LE((r.x_hat - l1_prox_scaled(x - g / 2.5, 0.4, 2.5)).norm(), 1e-15);
}

TEST(SolveSubproblem, SmoothCaseIsNewtonStep) {
  oracle::Rng rng(7);
  const Instance inst = random_instance(rng, 15, 3, 2);
  const ZeroReg reg(15);
  const SubproblemResult r = solve_subproblem(inst.x, inst.g, inst.G, reg);
  ASSERT_TRUE(r.solved());
  const Vector expected = inst.x - inst.G.dense().ldlt().solve(inst.g);
  EXPECT_LE((r.x_hat - expected).norm(), 1e-9 * (1.0 + expected.norm()));
}

TEST(SolveSubproblem, MatchesProximalGradientOracle) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    oracle::Rng rng(seed);
    const Instance inst = random_instance(rng, 30, 3, 2);
    const double lambda = oracle::uniform(rng, 0.05, 1.0);
    const L1Reg reg(30, lambda);
    const SubproblemResult r = solve_subproblem(inst.x, inst.g, inst.G, reg);
    ASSERT_TRUE(r.solved());
    const auto ref = oracle::pg_l1_model(inst.G.dense(), inst.g, inst.x, lambda);
    EXPECT_LE((r.x_hat - ref.z).norm(), 1e-6) << "seed " << seed;
    // pred ≥ (μ/2)‖d‖² reduces to q̂(x̂) ≤ q̂(x) for the full metric
    EXPECT_LE(r.model_value, reg.value(inst.x).value() + 1e-12);
  }
}

TEST(SolveSubproblem, ZeroStepMeansStationary) {
  // x already optimal for the ℓ₁ model: |gᵢ| ≤ λ on the zero coordinates
  Vector x = Vector::Zero(5), g(5);
  g << 0.1, -0.2, 0.3, 0.0, -0.05;
  const L1Reg reg(5, 0.5);
  const SubproblemResult r = solve_subproblem(x, g, make_identity_metric(5, 1.0), reg);
  ASSERT_TRUE(r.solved());
  EXPECT_EQ(r.d.norm(), 0.0);
  EXPECT_TRUE((g.array().abs() <= 0.5).all());
}

TEST(SolveSubproblem, DeterministicReplay) {
  oracle::Rng rng(8);
  const Instance inst = random_instance(rng, 20, 2, 2);
  const CappedL1Reg reg(20, 0.3);
  const SubproblemResult a = solve_subproblem(inst.x, inst.g, inst.G, reg);
  const SubproblemResult b = solve_subproblem(inst.x, inst.g, inst.G, reg);
  ASSERT_EQ(a.status, b.status);
  if (a.solved()) {
    EXPECT_EQ(a.x_hat, b.x_hat);
  }
}

TEST(SolveSubproblem, UncertifiedMetricIsNotFound) {
  const Vector u = Vector::Ones(3);
  const SignedLowRankMetric G = SignedLowRankMetric::make(1.0, Matrix(3, 0), u);
  const SubproblemResult r = solve_subproblem(Vector::Zero(3), Vector::Ones(3), G, ZeroReg(3));
  EXPECT_FALSE(r.solved());
  EXPECT_THROW(solve_subproblem(Vector::Zero(2), Vector::Ones(3), G, ZeroReg(3)), ShapeError);
}
