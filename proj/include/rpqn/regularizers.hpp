#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "rpqn/problem.hpp"

namespace rpqn {

namespace detail {

inline void require_positive_scale(double scale, const char* where) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw InvalidScaleError(std::string(where) + ": prox scale must be positive and finite");
}

inline double soft_threshold(double y, double threshold) {
  const double a = std::abs(y) - threshold;
  return a > 0.0 ? std::copysign(a, y) : 0.0;
}

// Scalar capped-l1 prox. Returns (t, slope) where slope is the chosen element
// of the generalized derivative.
struct CappedPick {
  double t;
  double slope;
};

inline CappedPick capped_l1_scalar(double y, double weight, double scale) {
  if (weight == 0.0) return {y, 1.0};
  auto cost = [&](double t) {
    const double d = t - y;
    return weight * std::min(std::abs(t), 1.0) + 0.5 * scale * d * d;
  };

  const double soft = soft_threshold(y, weight / scale);
  const double inner = std::clamp(soft, -1.0, 1.0);
  const double inner_slope = (soft != 0.0 && std::abs(soft) < 1.0) ? 1.0 : 0.0;

  std::array<CappedPick, 3> candidates{{
      {inner, inner_slope},
      {std::copysign(1.0, y), 0.0},
      {y, 1.0},
  }};
  const bool outer_feasible = std::abs(y) >= 1.0;

  CappedPick best = candidates[0];
  double best_cost = cost(best.t);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (i == 2 && !outer_feasible) continue;
    const double c = cost(candidates[i].t);
    const bool better = c < best_cost || (c == best_cost && std::abs(candidates[i].t) < std::abs(best.t));
    if (better) {
      best = candidates[i];
      best_cost = c;
    }
  }
  return best;
}

inline void check_mask(const Vector& mask, Index n, const char* where) {
  if (mask.size() != n) throw ShapeError(std::string(where) + ": mask length mismatch");
}

}  // namespace detail

/// Soft-thresholding: argmin λ‖mask ⊙ x‖₁ + (τ/2)‖x − y‖².
inline Vector l1_prox_scaled(const Vector& y, double lambda, double scale, const Vector& mask) {
  detail::require_positive_scale(scale, "l1_prox_scaled");
  detail::check_mask(mask, y.size(), "l1_prox_scaled");
  Vector out(y.size());
  for (Index i = 0; i < y.size(); ++i) out[i] = detail::soft_threshold(y[i], mask[i] * lambda / scale);
  return out;
}

inline Vector l1_prox_scaled(const Vector& y, double lambda, double scale) {
  return l1_prox_scaled(y, lambda, scale, Vector::Ones(y.size()));
}

/// Componentwise global minimizer of λ·min(|t|, 1) + (τ/2)(t − y)².
/// Ties go to the candidate with smaller |t|.
inline Vector capped_l1_prox_scaled(const Vector& y, double lambda, double scale, const Vector& mask) {
  detail::require_positive_scale(scale, "capped_l1_prox_scaled");
  detail::check_mask(mask, y.size(), "capped_l1_prox_scaled");
  Vector out(y.size());
  for (Index i = 0; i < y.size(); ++i) out[i] = detail::capped_l1_scalar(y[i], mask[i] * lambda, scale).t;
  return out;
}

inline Vector capped_l1_prox_scaled(const Vector& y, double lambda, double scale) {
  return capped_l1_prox_scaled(y, lambda, scale, Vector::Ones(y.size()));
}

/// Projection onto X = {(u,v,z) : u ≥ 0, v ≥ 0, z ≥ 0, vᵀz = 0}.
inline Vector obstacle_project(const Vector& p) {
  if (p.size() % 3 != 0) throw ShapeError("obstacle_project: length must be a multiple of 3");
  const Index n = p.size() / 3;
  Vector out(p.size());
  for (Index i = 0; i < n; ++i) out[i] = std::max(p[i], 0.0);
  for (Index i = 0; i < n; ++i) {
    const double v = p[n + i];
    const double z = p[2 * n + i];
    const double vp = std::max(v, 0.0);
    const double zp = std::max(z, 0.0);
    // squared distance to (vp, 0) versus (0, zp)
    const double dist_v = (v - vp) * (v - vp) + z * z;
    const double dist_z = v * v + (z - zp) * (z - zp);
    if (dist_v <= dist_z) {
      out[n + i] = vp;
      out[2 * n + i] = 0.0;
    } else {
      out[n + i] = 0.0;
      out[2 * n + i] = zp;
    }
  }
  return out;
}

/// φ ≡ 0.
class ZeroReg final : public Regularizer {
 public:
  explicit ZeroReg(Index n) : n_(n) {}

  Index dimension() const override { return n_; }
  ExtendedReal value(const Vector&) const override { return 0.0; }
  Vector prox(const Vector& y, double scale) const override {
    detail::require_positive_scale(scale, "ZeroReg::prox");
    return y;
  }
  Vector prox_derivative(const Vector& y, double scale) const override {
    detail::require_positive_scale(scale, "ZeroReg::prox_derivative");
    return Vector::Ones(y.size());
  }
  std::string name() const override { return "zero"; }

 private:
  Index n_;
};

/// λ‖mask ⊙ x‖₁. A zero mask entry leaves that coordinate unpenalized.
class L1Reg final : public Regularizer {
 public:
  L1Reg(Index n, double lambda) : L1Reg(lambda, Vector::Ones(n)) {}
  L1Reg(double lambda, Vector mask) : lambda_(lambda), mask_(std::move(mask)) {
    if (!(lambda_ >= 0.0)) throw ArgumentError("L1Reg: lambda must be nonnegative");
  }

  double lambda() const { return lambda_; }
  const Vector& mask() const { return mask_; }

  Index dimension() const override { return mask_.size(); }
  ExtendedReal value(const Vector& x) const override {
    return lambda_ * mask_.cwiseProduct(x).lpNorm<1>();
  }
  Vector prox(const Vector& y, double scale) const override {
    return l1_prox_scaled(y, lambda_, scale, mask_);
  }
  Vector prox_derivative(const Vector& y, double scale) const override {
    detail::require_positive_scale(scale, "L1Reg::prox_derivative");
    detail::check_mask(mask_, y.size(), "L1Reg::prox_derivative");
    Vector out(y.size());
    for (Index i = 0; i < y.size(); ++i) {
      const double threshold = mask_[i] * lambda_ / scale;
      out[i] = (threshold == 0.0 || std::abs(y[i]) > threshold) ? 1.0 : 0.0;
    }
    return out;
  }
  std::string name() const override { return "l1"; }

 private:
  double lambda_;
  Vector mask_;
};

/// λ Σ maskᵢ·min(|xᵢ|, 1).
class CappedL1Reg final : public Regularizer {
 public:
  CappedL1Reg(Index n, double lambda) : CappedL1Reg(lambda, Vector::Ones(n)) {}
  CappedL1Reg(double lambda, Vector mask) : lambda_(lambda), mask_(std::move(mask)) {
    if (!(lambda_ >= 0.0)) throw ArgumentError("CappedL1Reg: lambda must be nonnegative");
  }

  double lambda() const { return lambda_; }

  Index dimension() const override { return mask_.size(); }
  ExtendedReal value(const Vector& x) const override {
    double s = 0.0;
    for (Index i = 0; i < x.size(); ++i) s += mask_[i] * std::min(std::abs(x[i]), 1.0);
    return lambda_ * s;
  }
  Vector prox(const Vector& y, double scale) const override {
    return capped_l1_prox_scaled(y, lambda_, scale, mask_);
  }
  Vector prox_derivative(const Vector& y, double scale) const override {
    detail::require_positive_scale(scale, "CappedL1Reg::prox_derivative");
    detail::check_mask(mask_, y.size(), "CappedL1Reg::prox_derivative");
    Vector out(y.size());
    for (Index i = 0; i < y.size(); ++i) out[i] = detail::capped_l1_scalar(y[i], mask_[i] * lambda_, scale).slope;
    return out;
  }
  std::string name() const override { return "capped-l1"; }

 private:
  double lambda_;
  Vector mask_;
};

/// Indicator of the complementarity set X ⊂ R^{3N}. The prox is the
/// projection and does not depend on the scale.
class ObstacleSetReg final : public Regularizer {
 public:
  explicit ObstacleSetReg(Index block) : block_(block) {
    if (block_ <= 0) throw ArgumentError("ObstacleSetReg: block size must be positive");
  }

  Index block() const { return block_; }

  static bool contains(const Vector& x) {
    const Index n = x.size() / 3;
    for (Index i = 0; i < x.size(); ++i)
      if (x[i] < 0.0) return false;
    for (Index i = 0; i < n; ++i)
      if (x[n + i] != 0.0 && x[2 * n + i] != 0.0) return false;
    return true;
  }

  Index dimension() const override { return 3 * block_; }
  ExtendedReal value(const Vector& x) const override {
    if (x.size() != 3 * block_) throw ShapeError("ObstacleSetReg::value: wrong length");
    return contains(x) ? ExtendedReal(0.0) : ExtendedReal::infinity();
  }
  Vector prox(const Vector& y, double scale) const override {
    detail::require_positive_scale(scale, "ObstacleSetReg::prox");
    return obstacle_project(y);
  }
  Vector prox_derivative(const Vector& y, double scale) const override {
    detail::require_positive_scale(scale, "ObstacleSetReg::prox_derivative");
    const Vector p = obstacle_project(y);
    Vector out(y.size());
    // a coordinate survives when the projection leaves it untouched
    for (Index i = 0; i < y.size(); ++i) out[i] = (p[i] == y[i] && p[i] != 0.0) ? 1.0 : 0.0;
    return out;
  }
  std::string name() const override { return "obstacle-set"; }

 private:
  Index block_;
};

/// Free-function form of the generalized prox derivative.
inline Vector prox_derivative(const Regularizer& reg, const Vector& y, double scale) {
  return reg.prox_derivative(y, scale);
}

}  // namespace rpqn
