#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "rpqn/problem.hpp"
#include "rpqn/quasi_newton.hpp"

namespace rpqn {

inline constexpr double kInnerTolerance = 1e-9;
inline constexpr int kInnerMaxIterations = 100;
inline constexpr int kInnerHalvings = 30;

/// Data of the reduced prox system for G = H₀ + U₁U₁ᵀ − U₂U₂ᵀ with H₀ = δI
/// and H₁ = H₀ + U₁U₁ᵀ.
struct ProxContext {
  const SignedLowRankMetric* metric = nullptr;
  const Regularizer* regularizer = nullptr;
  Vector anchor;
  Matrix h0_inv_u1;  // H₀⁻¹U₁
  Matrix h1_inv_u2;  // H₁⁻¹U₂

  Index r1() const { return h0_inv_u1.cols(); }
  Index r2() const { return h1_inv_u2.cols(); }
  Index reduced_size() const { return r1() + r2(); }
  double scale() const { return metric->diag(); }
};

inline ProxContext make_prox_context(const SignedLowRankMetric& metric, const Regularizer& reg, Vector anchor) {
  if (anchor.size() != metric.dimension()) throw ShapeError("make_prox_context: anchor length mismatch");
  ProxContext ctx;
  ctx.metric = &metric;
  ctx.regularizer = &reg;
  ctx.anchor = std::move(anchor);
  const double delta = metric.diag();
  const Matrix& U1 = metric.U1();
  const Matrix& U2 = metric.U2();
  ctx.h0_inv_u1 = U1 / delta;
  if (U2.cols() == 0) {
    ctx.h1_inv_u2 = Matrix(U2.rows(), 0);
  } else if (U1.cols() == 0) {
    ctx.h1_inv_u2 = U2 / delta;
  } else {
    // (δI + U₁U₁ᵀ)⁻¹ = (I − U₁(δI + U₁ᵀU₁)⁻¹U₁ᵀ)/δ
    Matrix small = U1.transpose() * U1;
    small.diagonal().array() += delta;
    const Matrix coupling = small.llt().solve(U1.transpose() * U2);
    ctx.h1_inv_u2 = (U2 - U1 * coupling) / delta;
  }
  return ctx;
}

namespace detail {

struct XiEval {
  Vector w;    // prox argument
  Vector p;    // prox_φ^{H₀}(w)
  Vector xi;
};

inline XiEval xi_eval(const ProxContext& ctx, const Vector& alpha) {
  const Index r1 = ctx.r1();
  const Index r2 = ctx.r2();
  if (alpha.size() != r1 + r2) throw ShapeError("xi_residual: alpha has wrong length");
  const auto a1 = alpha.head(r1);
  const auto a2 = alpha.tail(r2);
  XiEval e;
  const Vector shifted = ctx.anchor + ctx.h1_inv_u2 * a2;
  e.w = shifted - ctx.h0_inv_u1 * a1;
  e.p = ctx.regularizer->prox(e.w, ctx.scale());
  e.xi.resize(r1 + r2);
  e.xi.head(r1) = ctx.metric->U1().transpose() * (shifted - e.p) + a1;
  e.xi.tail(r2) = ctx.metric->U2().transpose() * (ctx.anchor - e.p) + a2;
  return e;
}

inline Matrix xi_jacobian_at(const ProxContext& ctx, const Vector& w) {
  const Index r1 = ctx.r1();
  const Index r2 = ctx.r2();
  const Vector gamma = ctx.regularizer->prox_derivative(w, ctx.scale());
  const Vector keep = Vector::Ones(gamma.size()) - gamma;
  const Matrix& U1 = ctx.metric->U1();
  const Matrix& U2 = ctx.metric->U2();
  Matrix J = Matrix::Identity(r1 + r2, r1 + r2);
  if (r1 > 0) J.topLeftCorner(r1, r1).noalias() += U1.transpose() * gamma.asDiagonal() * ctx.h0_inv_u1;
  if (r1 > 0 && r2 > 0) {
    J.topRightCorner(r1, r2).noalias() = U1.transpose() * keep.asDiagonal() * ctx.h1_inv_u2;
    J.bottomLeftCorner(r2, r1).noalias() = U2.transpose() * gamma.asDiagonal() * ctx.h0_inv_u1;
  }
  if (r2 > 0) J.bottomRightCorner(r2, r2).noalias() -= U2.transpose() * gamma.asDiagonal() * ctx.h1_inv_u2;
  return J;
}

}  // namespace detail

inline Vector xi_residual(const ProxContext& ctx, const Vector& alpha) { return detail::xi_eval(ctx, alpha).xi; }

/// Generalized Jacobian of Ξ built from the diagonal prox derivative Γ at w(α).
inline Matrix xi_jacobian(const ProxContext& ctx, const Vector& alpha) {
  return detail::xi_jacobian_at(ctx, detail::xi_eval(ctx, alpha).w);
}

/// Point recovered from a root: prox_φ^{H₀}(y + H₁⁻¹U₂α₂ − H₀⁻¹U₁α₁).
inline Vector reconstruct_point(const ProxContext& ctx, const Vector& alpha) { return detail::xi_eval(ctx, alpha).p; }

struct NewtonResult {
  Vector alpha;
  double residual_inf = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped semismooth Newton on a generic map F with generalized Jacobian JF.
/// Backtracks by halving until ‖F‖ decreases; otherwise takes the full step.
template <typename Residual, typename Jacobian>
NewtonResult semismooth_newton_generic(Residual&& residual, Jacobian&& jacobian, Vector alpha, double tol,
                                       int max_iter) {
  if (!(tol > 0.0)) throw ArgumentError("semismooth_newton: tolerance must be positive");
  NewtonResult out;
  Vector F = residual(alpha);
  double norm = F.norm();
  for (int it = 0;; ++it) {
    out.iterations = it;
    out.residual_inf = F.size() > 0 ? F.lpNorm<Eigen::Infinity>() : 0.0;
    if (out.residual_inf <= tol) {
      out.converged = true;
      break;
    }
    if (it >= max_iter || !F.allFinite()) break;

    const Matrix J = jacobian(alpha);
    Eigen::FullPivLU<Matrix> lu(J);
    Vector step;
    bool singular = !lu.isInvertible();
    if (!singular) {
      step = lu.solve(F);
    } else {
      step = J.completeOrthogonalDecomposition().solve(F);
    }
    if (!step.allFinite()) break;

    double t = 1.0;
    bool decreased = false;
    Vector trial;
    Vector F_trial;
    for (int h = 0; h <= kInnerHalvings; ++h) {
      trial = alpha - t * step;
      F_trial = residual(trial);
      if (F_trial.allFinite() && F_trial.norm() < norm) {
        decreased = true;
        break;
      }
      t *= 0.5;
    }
    if (!decreased) {
      if (singular) break;
      trial = alpha - step;
      F_trial = residual(trial);
    }
    alpha = std::move(trial);
    F = std::move(F_trial);
    norm = F.norm();
  }
  out.alpha = std::move(alpha);
  return out;
}

inline NewtonResult semismooth_newton(const ProxContext& ctx, const Vector& alpha0, double tol = kInnerTolerance,
                                      int max_iter = kInnerMaxIterations) {
  return semismooth_newton_generic([&ctx](const Vector& a) { return xi_residual(ctx, a); },
                                   [&ctx](const Vector& a) { return xi_jacobian(ctx, a); }, alpha0, tol, max_iter);
}

enum class SubproblemStatus { solved, not_found };

struct SubproblemResult {
  Vector x_hat;
  Vector d;
  double model_value = 0.0;  // q̂(x̂) − f(x) = ⟨∇f, d⟩ + ½ dᵀGd + φ(x̂)
  double dGd = 0.0;
  double phi_x_hat = 0.0;
  double xi_residual = 0.0;
  int inner_iterations = 0;
  SubproblemStatus status = SubproblemStatus::not_found;

  bool solved() const { return status == SubproblemStatus::solved; }
};

/// x̂ ∈ prox_φ^G(x − G⁻¹∇f(x)) through the reduced Ξ system. Failures of the
/// inner solve come back as not_found.
inline SubproblemResult solve_subproblem(const Vector& x, const Vector& grad, const SignedLowRankMetric& G,
                                         const Regularizer& reg, double tol = kInnerTolerance,
                                         int max_iter = kInnerMaxIterations) {
  SubproblemResult res;
  if (x.size() != grad.size() || x.size() != G.dimension()) throw ShapeError("solve_subproblem: shape mismatch");
  if (!G.certified()) return res;

  Vector anchor;
  try {
    anchor = x - G.apply_inverse(grad);
  } catch (const NumericalFailure&) {
    return res;
  }
  const ProxContext ctx = make_prox_context(G, reg, std::move(anchor));
  const NewtonResult nr = semismooth_newton(ctx, Vector::Zero(ctx.reduced_size()), tol, max_iter);
  res.inner_iterations = nr.iterations;
  res.xi_residual = nr.residual_inf;
  if (!nr.converged) return res;

  res.x_hat = reconstruct_point(ctx, nr.alpha);
  res.d = res.x_hat - x;
  const ExtendedReal phi_hat = reg.value(res.x_hat);
  const ExtendedReal phi_x = reg.value(x);
  if (phi_hat.is_infinite() || phi_x.is_infinite()) return res;
  res.phi_x_hat = phi_hat.value();
  res.dGd = res.d.dot(G.apply(res.d));
  const double lin = grad.dot(res.d);
  res.model_value = lin + 0.5 * res.dGd + res.phi_x_hat;
  if (!std::isfinite(res.model_value)) return res;

  // x̂ must not be worse than x on q̂; otherwise the root is spurious
  const double slack = 1e-12 * (1.0 + std::abs(phi_x.value()) + std::abs(lin));
  if (res.model_value > phi_x.value() + slack) return res;
  res.status = SubproblemStatus::solved;
  return res;
}

}  // namespace rpqn
