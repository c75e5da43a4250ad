#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace rpqn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Error family. Every module throws one of these; "not found" outcomes of the
// subproblem are results, not exceptions.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct InvalidScaleError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct RebuildFailure : Error {
  using Error::Error;
};
struct SizeGuardError : Error {
  using Error::Error;
};
struct NumericalFailure : Error {
  using Error::Error;
};

class OracleFailure : public Error {
 public:
  OracleFailure(const std::string& what, Vector point)
      : Error(what), point_(std::move(point)) {}
  const Vector& point() const { return point_; }

 private:
  Vector point_;
};

/// A value in R ∪ {+∞}. Arithmetic never forms inf - inf.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;
  constexpr ExtendedReal(double v) : value_(v) {}  // NOLINT: implicit from finite reals

  static constexpr ExtendedReal infinity() {
    ExtendedReal r;
    r.infinite_ = true;
    return r;
  }

  constexpr bool is_finite() const { return !infinite_; }
  constexpr bool is_infinite() const { return infinite_; }

  double value() const {
    if (infinite_) throw Error("ExtendedReal: value() on +inf");
    return value_;
  }

  /// Finite value or IEEE +inf, for printing and for comparisons only.
  constexpr double as_double() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr ExtendedReal operator+(ExtendedReal a, ExtendedReal b) {
    if (a.infinite_ || b.infinite_) return infinity();
    return ExtendedReal(a.value_ + b.value_);
  }
  friend constexpr bool operator==(ExtendedReal a, ExtendedReal b) {
    if (a.infinite_ || b.infinite_) return a.infinite_ == b.infinite_;
    return a.value_ == b.value_;
  }
  friend constexpr bool operator<(ExtendedReal a, ExtendedReal b) {
    if (a.infinite_) return false;
    if (b.infinite_) return true;
    return a.value_ < b.value_;
  }
  friend constexpr bool operator<=(ExtendedReal a, ExtendedReal b) { return a < b || a == b; }

 private:
  double value_ = 0.0;
  bool infinite_ = false;
};

struct SmoothValue {
  double value = 0.0;
  Vector gradient;
};

/// Smooth part f. One call returns value and gradient together.
struct SmoothOracle {
  Index dimension = 0;
  std::function<SmoothValue(const Vector&)> eval;
};

/// Nonsmooth part φ: value, prox of φ + (τ/2)‖· − y‖², and a diagonal element
/// of the generalized derivative of that prox.
class Regularizer {
 public:
  virtual ~Regularizer() = default;

  virtual Index dimension() const = 0;
  virtual ExtendedReal value(const Vector& x) const = 0;
  virtual Vector prox(const Vector& y, double scale) const = 0;
  virtual Vector prox_derivative(const Vector& y, double scale) const = 0;
  virtual std::string name() const = 0;
};

struct CompositeProblem {
  SmoothOracle smooth;
  std::shared_ptr<const Regularizer> regularizer;
  std::string name;

  CompositeProblem() = default;
  CompositeProblem(SmoothOracle f, std::shared_ptr<const Regularizer> phi, std::string id)
      : smooth(std::move(f)), regularizer(std::move(phi)), name(std::move(id)) {
    if (!regularizer) throw ArgumentError("CompositeProblem: null regularizer");
    if (!smooth.eval) throw ArgumentError("CompositeProblem: empty smooth oracle");
    if (smooth.dimension <= 0 || smooth.dimension != regularizer->dimension()) {
      std::ostringstream os;
      os << "CompositeProblem '" << name << "': smooth dimension " << smooth.dimension
         << " does not match regularizer dimension " << regularizer->dimension();
      throw ShapeError(os.str());
    }
  }

  Index dimension() const { return smooth.dimension; }
};

namespace detail {

inline std::string describe_point(const Vector& x) {
  std::ostringstream os;
  os << "[n=" << x.size();
  const Index shown = std::min<Index>(x.size(), 4);
  for (Index i = 0; i < shown; ++i) os << (i == 0 ? "; " : ", ") << x[i];
  if (shown < x.size()) os << ", ...";
  os << "]";
  return os.str();
}

}  // namespace detail

/// Evaluates f at x and validates the result; throws OracleFailure on
/// non-finite output.
inline SmoothValue eval_smooth(const CompositeProblem& problem, const Vector& x) {
  if (x.size() != problem.dimension()) throw ShapeError("eval_smooth: point has wrong length");
  SmoothValue out = problem.smooth.eval(x);
  if (out.gradient.size() != x.size())
    throw OracleFailure("smooth oracle returned gradient of wrong length at " + detail::describe_point(x), x);
  if (!std::isfinite(out.value))
    throw OracleFailure("smooth oracle returned non-finite value at " + detail::describe_point(x), x);
  if (!out.gradient.allFinite())
    throw OracleFailure("smooth oracle returned non-finite gradient at " + detail::describe_point(x), x);
  return out;
}

/// F(x) = f(x) + φ(x); +∞ exactly when φ(x) = +∞.
inline ExtendedReal eval_objective(const CompositeProblem& problem, const Vector& x) {
  const SmoothValue f = eval_smooth(problem, x);
  return ExtendedReal(f.value) + problem.regularizer->value(x);
}

struct IterateState {
  Vector x;
  double f_value = 0.0;
  Vector gradient;
  double F_value = 0.0;
  double mu = 1.0;
  double merit = 0.0;
  long iteration = 0;
};

}  // namespace rpqn
