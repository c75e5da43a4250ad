#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rpqn/problem.hpp"

namespace rpqn {

enum class UpdateKind { none, lbfgs, lsr1, lkm };

inline std::string to_string(UpdateKind kind) {
  switch (kind) {
    case UpdateKind::none: return "none";
    case UpdateKind::lbfgs: return "lbfgs";
    case UpdateKind::lsr1: return "lsr1";
    case UpdateKind::lkm: return "lkm";
  }
  return "?";
}

inline UpdateKind parse_update_kind(const std::string& s) {
  if (s == "none") return UpdateKind::none;
  if (s == "lbfgs") return UpdateKind::lbfgs;
  if (s == "lsr1") return UpdateKind::lsr1;
  if (s == "lkm") return UpdateKind::lkm;
  throw ArgumentError("unknown update kind '" + s + "'");
}

enum class PushResult { accepted, skipped };

inline constexpr double kCurvatureEps = 1e-8;
inline constexpr double kSr1SkipTol = 1e-8;
inline constexpr double kKleinmichelDenominatorTol = 1e-12;
inline constexpr double kMiddleRcondFloor = 1e-14;
inline constexpr double kEigenDropTol = 1e-12;
inline constexpr double kCertifyMargin = 1e-12;
inline constexpr Index kDenseBound = 500;

/// Ring buffer of the m most recent (step, gradient-difference) pairs.
class PairBuffer {
 public:
  explicit PairBuffer(int capacity = 10, double curvature_eps = kCurvatureEps)
      : capacity_(capacity), curvature_eps_(curvature_eps) {
    if (capacity_ < 0) throw ArgumentError("PairBuffer: negative capacity");
  }

  /// BFGS and Kleinmichel pairs need ⟨d,y⟩ ≥ ε‖d‖²; SR1 pairs are always
  /// stored and filtered at build time.
  PushResult push(const Vector& d, const Vector& y, UpdateKind kind) {
    if (d.size() != y.size()) throw ShapeError("PairBuffer::push: step and gradient difference lengths differ");
    if (!pairs_.empty() && d.size() != pairs_.front().first.size())
      throw ShapeError("PairBuffer::push: pair dimension differs from stored pairs");
    const double dd = d.squaredNorm();
    if (!(dd > 0.0)) throw ArgumentError("PairBuffer::push: zero step");
    if (kind == UpdateKind::none || capacity_ == 0) {
      ++skipped_;
      return PushResult::skipped;
    }
    if (kind != UpdateKind::lsr1 && !(d.dot(y) >= curvature_eps_ * dd)) {
      ++skipped_;
      return PushResult::skipped;
    }
    if (static_cast<int>(pairs_.size()) == capacity_) pairs_.pop_front();
    pairs_.emplace_back(d, y);
    ++accepted_;
    return PushResult::accepted;
  }

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(pairs_.size()); }
  bool empty() const { return pairs_.empty(); }
  long accepted() const { return accepted_; }
  long skipped() const { return skipped_; }

  /// Pairs are indexed oldest first.
  const Vector& step(int i) const { return pairs_.at(static_cast<std::size_t>(i)).first; }
  const Vector& grad_diff(int i) const { return pairs_.at(static_cast<std::size_t>(i)).second; }

  void drop_oldest() {
    if (!pairs_.empty()) pairs_.pop_front();
  }
  void clear() { pairs_.clear(); }

  /// FNV-1a over the stored bytes.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t len) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
      }
    };
    const std::size_t count = pairs_.size();
    mix(&count, sizeof(count));
    for (const auto& [d, y] : pairs_) {
      mix(d.data(), sizeof(double) * static_cast<std::size_t>(d.size()));
      mix(y.data(), sizeof(double) * static_cast<std::size_t>(y.size()));
    }
    return h;
  }

 private:
  int capacity_;
  double curvature_eps_;
  std::deque<std::pair<Vector, Vector>> pairs_;
  long accepted_ = 0;
  long skipped_ = 0;
};

inline PushResult push_pair(PairBuffer& buffer, const Vector& d, const Vector& y, UpdateKind kind) {
  return buffer.push(d, y, kind);
}

/// Liu–Nocedal scaling ⟨y,y⟩/⟨d,y⟩ of the newest pair; 1 when empty or degenerate.
inline double init_scale(const PairBuffer& buffer) {
  if (buffer.empty()) return 1.0;
  const Vector& d = buffer.step(buffer.size() - 1);
  const Vector& y = buffer.grad_diff(buffer.size() - 1);
  const double q = y.squaredNorm() / d.dot(y);
  return (std::isfinite(q) && q > 0.0) ? q : 1.0;
}

/// B = base·I + Q M⁻¹ Qᵀ.
struct CompactForm {
  Index dimension = 0;
  double base = 1.0;
  Matrix Q;
  Matrix M;

  Index rank() const { return Q.cols(); }

  Vector apply(const Vector& v) const {
    if (v.size() != dimension) throw ShapeError("CompactForm::apply: wrong vector length");
    Vector out = base * v;
    if (Q.cols() > 0) out.noalias() += Q * M.partialPivLu().solve(Q.transpose() * v);
    return out;
  }
};

namespace detail {

inline void require_pairs_dimension(const PairBuffer& buffer, Index n) {
  for (int i = 0; i < buffer.size(); ++i)
    if (buffer.step(i).size() != n) throw ShapeError("compact build: pair dimension mismatch");
}

inline Index buffer_dimension(const PairBuffer& buffer, Index fallback) {
  return buffer.empty() ? fallback : buffer.step(0).size();
}

inline void require_invertible(const Matrix& M, const char* where) {
  if (M.rows() == 0) return;
  Eigen::PartialPivLU<Matrix> lu(M);
  const double rc = lu.rcond();
  if (!(rc > kMiddleRcondFloor) || !M.allFinite())
    throw RebuildFailure(std::string(where) + ": middle matrix is numerically singular");
}

}  // namespace detail

/// Byrd–Nocedal–Schnabel compact L-BFGS:
/// B = γI − [γS, Y] [[γSᵀS, L], [Lᵀ, −D]]⁻¹ [γS, Y]ᵀ.
inline CompactForm build_lbfgs(const PairBuffer& buffer, double gamma, Index n = 0) {
  if (!(gamma > 0.0)) throw ArgumentError("build_lbfgs: base scale must be positive");
  n = detail::buffer_dimension(buffer, n);
  detail::require_pairs_dimension(buffer, n);
  const int k = buffer.size();
  CompactForm c{n, gamma, Matrix(n, 2 * k), Matrix(2 * k, 2 * k)};
  if (k == 0) return c;

  Matrix S(n, k), Y(n, k);
  for (int j = 0; j < k; ++j) {
    S.col(j) = buffer.step(j);
    Y.col(j) = buffer.grad_diff(j);
  }
  const Matrix SY = S.transpose() * Y;
  Matrix L = Matrix::Zero(k, k);
  L.triangularView<Eigen::StrictlyLower>() = SY;
  Matrix middle(2 * k, 2 * k);
  middle.topLeftCorner(k, k) = gamma * (S.transpose() * S);
  middle.topRightCorner(k, k) = L;
  middle.bottomLeftCorner(k, k) = L.transpose();
  middle.bottomRightCorner(k, k) = -Matrix(SY.diagonal().asDiagonal());

  c.Q.leftCols(k) = gamma * S;
  c.Q.rightCols(k) = Y;
  c.M = -middle;
  detail::require_invertible(c.M, "build_lbfgs");
  return c;
}

/// Compact L-SR1 B = γI + (Y − γS)(D + L + Lᵀ − γSᵀS)⁻¹(Y − γS)ᵀ over the pairs
/// that survive the denominator guard |⟨d, y − B_j d⟩| > 1e-8‖d‖‖y − B_j d‖.
inline CompactForm build_lsr1(const PairBuffer& buffer, double gamma, Index n = 0) {
  if (!(gamma > 0.0)) throw ArgumentError("build_lsr1: base scale must be positive");
  n = detail::buffer_dimension(buffer, n);
  detail::require_pairs_dimension(buffer, n);

  std::vector<int> kept;
  kept.reserve(static_cast<std::size_t>(buffer.size()));
  CompactForm partial{n, gamma, Matrix(n, 0), Matrix(0, 0)};

  auto assemble = [&](const std::vector<int>& idx) {
    const Index k = static_cast<Index>(idx.size());
    Matrix S(n, k), Y(n, k);
    for (Index j = 0; j < k; ++j) {
      S.col(j) = buffer.step(idx[static_cast<std::size_t>(j)]);
      Y.col(j) = buffer.grad_diff(idx[static_cast<std::size_t>(j)]);
    }
    const Matrix SY = S.transpose() * Y;
    Matrix L = Matrix::Zero(k, k);
    L.triangularView<Eigen::StrictlyLower>() = SY;
    CompactForm c{n, gamma, Y - gamma * S, Matrix()};
    c.M = Matrix(SY.diagonal().asDiagonal()) + L + L.transpose() - gamma * (S.transpose() * S);
    return c;
  };

  for (int j = 0; j < buffer.size(); ++j) {
    const Vector& d = buffer.step(j);
    const Vector r = buffer.grad_diff(j) - partial.apply(d);
    const double denom = d.dot(r);
    if (std::abs(denom) <= kSr1SkipTol * d.norm() * r.norm()) continue;
    kept.push_back(j);
    partial = assemble(kept);
  }
  detail::require_invertible(partial.M, "build_lsr1");
  return partial;
}

/// Compact limited-memory Kleinmichel matrix built stage by stage. At stage j
/// the partial operator gives H_j d, γ_j = ⟨y,d⟩ / (2⟨d, H_j d⟩), and
/// qʲ = yʲ − γ̄_{j+1}·base·dʲ uses the cumulative scaling of that stage.
inline CompactForm build_lkm(const PairBuffer& buffer, double base, Index n = 0) {
  if (!(base > 0.0)) throw ArgumentError("build_lkm: base scale must be positive");
  n = detail::buffer_dimension(buffer, n);
  detail::require_pairs_dimension(buffer, n);
  const int k = buffer.size();

  CompactForm c{n, base, Matrix(n, 0), Matrix(0, 0)};
  double gbar = 1.0;
  for (int j = 0; j < k; ++j) {
    const Vector& d = buffer.step(j);
    const Vector& y = buffer.grad_diff(j);
    c.base = gbar * base;
    const Vector Hd = c.apply(d);
    const double dHd = d.dot(Hd);
    const double yd = y.dot(d);
    if (!(dHd > 0.0) || !(yd > 0.0)) throw RebuildFailure("build_lkm: nonpositive curvature at stage " + std::to_string(j));
    const double gamma = yd / (2.0 * dHd);
    const double denom = yd - gamma * dHd;
    if (!(std::abs(denom) > kKleinmichelDenominatorTol * (std::abs(yd) + gamma * std::abs(dHd))))
      throw RebuildFailure("build_lkm: vanishing update denominator at stage " + std::to_string(j));

    const double gbar_next = gbar * gamma;
    const Vector q = y - (gbar_next * base) * d;
    const Index s = c.Q.cols();
    const Vector Qtd = c.Q.transpose() * d;

    Matrix M(s + 1, s + 1);
    M.topLeftCorner(s, s) = c.M / gamma;
    M.topRightCorner(s, 1) = Qtd;
    M.bottomLeftCorner(1, s) = Qtd.transpose();
    M(s, s) = q.dot(d);
    c.M = std::move(M);

    Matrix Q(n, s + 1);
    Q.leftCols(s) = c.Q;
    Q.col(s) = q;
    c.Q = std::move(Q);
    gbar = gbar_next;
  }
  c.base = gbar * base;
  detail::require_invertible(c.M, "build_lkm");
  return c;
}

inline CompactForm build_compact(UpdateKind kind, const PairBuffer& buffer, double scale, Index n) {
  switch (kind) {
    case UpdateKind::lbfgs: return build_lbfgs(buffer, scale, n);
    case UpdateKind::lsr1: return build_lsr1(buffer, scale, n);
    case UpdateKind::lkm: return build_lkm(buffer, scale, n);
    case UpdateKind::none: break;
  }
  return CompactForm{n, scale, Matrix(n, 0), Matrix(0, 0)};
}

/// Explicit γI + Q M⁻¹ Qᵀ, for tests and small problems.
inline Matrix materialize_dense(const CompactForm& c, Index bound = kDenseBound) {
  if (c.dimension > bound) throw SizeGuardError("materialize_dense: dimension above bound");
  Matrix B = c.base * Matrix::Identity(c.dimension, c.dimension);
  if (c.Q.cols() > 0) B.noalias() += c.Q * c.M.partialPivLu().solve(c.Q.transpose());
  return 0.5 * (B + B.transpose());
}

/// G = δI + U₁U₁ᵀ − U₂U₂ᵀ together with the data needed for Woodbury solves.
class SignedLowRankMetric {
 public:
  SignedLowRankMetric() = default;

  /// Certifies positive definiteness through the reduced matrix
  /// I + C^{1/2} J C^{1/2} / δ with C = UᵀU, J = diag(I, −I).
  static SignedLowRankMetric make(double diag, Matrix U1, Matrix U2) {
    if (U1.rows() != U2.rows()) throw ShapeError("SignedLowRankMetric: factor row counts differ");
    SignedLowRankMetric g;
    g.diag_ = diag;
    g.U1_ = std::move(U1);
    g.U2_ = std::move(U2);
    const Index r1 = g.U1_.cols();
    const Index r2 = g.U2_.cols();
    const Index r = r1 + r2;
    g.U_.resize(g.U1_.rows(), r);
    g.U_.leftCols(r1) = g.U1_;
    g.U_.rightCols(r2) = g.U2_;
    g.sign_ = Vector::Ones(r);
    g.sign_.tail(r2).setConstant(-1.0);

    if (!(diag > 0.0) || !std::isfinite(diag)) {
      g.certified_ = false;
      g.min_reduced_eig_ = -1.0;
      return g;
    }
    if (r == 0) {
      g.certified_ = true;
      g.min_reduced_eig_ = 1.0;
      return g;
    }
    const Matrix C = g.U_.transpose() * g.U_;
    Eigen::SelfAdjointEigenSolver<Matrix> ce(C);
    const Vector s = ce.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix root = ce.eigenvectors() * s.asDiagonal() * ce.eigenvectors().transpose();
    Matrix reduced = root * g.sign_.asDiagonal() * root / diag;
    reduced.diagonal().array() += 1.0;
    Eigen::SelfAdjointEigenSolver<Matrix> re(0.5 * (reduced + reduced.transpose()), Eigen::EigenvaluesOnly);
    g.min_reduced_eig_ = re.eigenvalues().minCoeff();
    g.certified_ = g.min_reduced_eig_ > kCertifyMargin;

    if (g.certified_) {
      // Woodbury core K = J + UᵀU/δ, kept as an explicit inverse (r ≤ 2m)
      Matrix K = C / diag;
      K.diagonal() += g.sign_;
      Eigen::PartialPivLU<Matrix> lu(K);
      if (!(lu.rcond() > kMiddleRcondFloor)) {
        g.certified_ = false;
      } else {
        g.core_inverse_ = lu.inverse();
      }
    }
    return g;
  }

  Index dimension() const { return U_.rows(); }
  double diag() const { return diag_; }
  const Matrix& U1() const { return U1_; }
  const Matrix& U2() const { return U2_; }
  Index r1() const { return U1_.cols(); }
  Index r2() const { return U2_.cols(); }
  bool certified() const { return certified_; }
  double min_reduced_eigenvalue() const { return min_reduced_eig_; }

  Vector apply(const Vector& v) const {
    if (v.size() != dimension()) throw ShapeError("apply_metric: wrong vector length");
    Vector out = diag_ * v;
    if (U_.cols() > 0) out.noalias() += U_ * sign_.cwiseProduct(U_.transpose() * v);
    return out;
  }

  /// G⁻¹v = v/δ − U K⁻¹ Uᵀ v / δ².
  Vector apply_inverse(const Vector& v) const {
    if (v.size() != dimension()) throw ShapeError("apply_inverse: wrong vector length");
    if (!certified_) throw NumericalFailure("apply_inverse: metric is not certified positive definite");
    Vector out = v / diag_;
    if (U_.cols() > 0) out.noalias() -= U_ * (core_inverse_ * (U_.transpose() * v)) / (diag_ * diag_);
    return out;
  }

  Matrix dense() const {
    Matrix G = diag_ * Matrix::Identity(dimension(), dimension());
    G.noalias() += U1_ * U1_.transpose();
    G.noalias() -= U2_ * U2_.transpose();
    return G;
  }

 private:
  double diag_ = 1.0;
  Matrix U1_, U2_, U_;
  Vector sign_;
  Matrix core_inverse_;
  bool certified_ = false;
  double min_reduced_eig_ = 0.0;
};

inline SignedLowRankMetric make_identity_metric(Index n, double diag) {
  return SignedLowRankMetric::make(diag, Matrix(n, 0), Matrix(n, 0));
}

/// Rewrites B + μI = (γ + μ)I + U₁U₁ᵀ − U₂U₂ᵀ via Q = ZR and R M⁻¹ Rᵀ = VΛVᵀ.
/// Indefinite results come back uncertified rather than as an error.
inline SignedLowRankMetric split_signed_lowrank(const CompactForm& c, double mu) {
  if (!(mu > 0.0)) throw ArgumentError("split_signed_lowrank: mu must be positive");
  const Index n = c.dimension;
  const Index s = c.Q.cols();
  if (s == 0) return make_identity_metric(n, c.base + mu);

  const Index k = std::min(n, s);
  Eigen::HouseholderQR<Matrix> qr(c.Q);
  const Matrix Z = qr.householderQ() * Matrix::Identity(n, k);
  const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const Matrix W = c.M.partialPivLu().solve(R.transpose());
  Matrix K = R * W;
  K = 0.5 * (K + K.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(K);
  const Vector& lam = es.eigenvalues();
  const double cutoff = kEigenDropTol * lam.cwiseAbs().maxCoeff();

  std::vector<Index> pos, neg;
  for (Index i = 0; i < lam.size(); ++i) {
    if (lam[i] > cutoff) pos.push_back(i);
    else if (lam[i] < -cutoff) neg.push_back(i);
  }
  Matrix U1(n, static_cast<Index>(pos.size()));
  Matrix U2(n, static_cast<Index>(neg.size()));
  for (std::size_t i = 0; i < pos.size(); ++i)
    U1.col(static_cast<Index>(i)) = Z * es.eigenvectors().col(pos[i]) * std::sqrt(lam[pos[i]]);
  for (std::size_t i = 0; i < neg.size(); ++i)
    U2.col(static_cast<Index>(i)) = Z * es.eigenvectors().col(neg[i]) * std::sqrt(-lam[neg[i]]);
  return SignedLowRankMetric::make(c.base + mu, std::move(U1), std::move(U2));
}

inline Vector apply_metric(const SignedLowRankMetric& g, const Vector& v) { return g.apply(v); }
inline Vector apply_inverse(const SignedLowRankMetric& g, const Vector& v) { return g.apply_inverse(v); }

}  // namespace rpqn
