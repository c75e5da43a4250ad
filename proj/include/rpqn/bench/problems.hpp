#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <locale>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rpqn/problem.hpp"
#include "rpqn/regularizers.hpp"

namespace rpqn::bench {

enum class RegKind { l1, capped_l1 };

inline std::string to_string(RegKind k) { return k == RegKind::l1 ? "l1" : "capped-l1"; }

inline RegKind parse_reg_kind(const std::string& s) {
  if (s == "l1") return RegKind::l1;
  if (s == "capped-l1" || s == "capped_l1" || s == "capped") return RegKind::capped_l1;
  throw ArgumentError("unknown regularizer kind '" + s + "'");
}

/// A generated instance: problem, start point, and descriptive metadata.
struct GeneratedProblem {
  CompositeProblem problem;
  Vector x0;
  std::string family;
  std::string params;  // "key=value;key=value", no commas
  std::uint64_t seed = 0;
  std::map<std::string, double> info;
};

namespace detail {

using Rng = std::mt19937_64;

/// k distinct indices from {0..n-1}, sorted.
inline std::vector<int> sample_without_replacement(Rng& rng, int n, int k) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << v;
  return os.str();
}

inline std::shared_ptr<const Regularizer> make_sparsity_reg(RegKind kind, double lambda, Vector mask) {
  if (kind == RegKind::l1) return std::make_shared<L1Reg>(lambda, std::move(mask));
  return std::make_shared<CappedL1Reg>(lambda, std::move(mask));
}

// log(1 + exp(t)) without overflow
inline double log1pexp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sparse logistic regression over x = (y, v), bias v unpenalized.

struct LogisticParams {
  int n_f = 500;
  int n_s = 5000;
  int s = 10;
  double c_lambda = 0.1;
  RegKind reg = RegKind::l1;

  std::string describe() const {
    return "n_f=" + std::to_string(n_f) + ";n_s=" + std::to_string(n_s) + ";s=" + std::to_string(s) +
           ";c_lambda=" + detail::fmt_double(c_lambda) + ";reg=" + to_string(reg);
  }
};

struct LogisticData {
  Eigen::SparseMatrix<double, Eigen::RowMajor> A;  // n_s × n_f
  Vector labels;                                   // ±1
  Vector y_true;
  double v_true = 0.0;
  int n_plus = 0;
  int n_minus = 0;
  double lambda_max = 0.0;
};

/// λ_max = (1/n_s)‖(n⁻/n_s)Σ_{b=1} aᵢ − (n⁺/n_s)Σ_{b=−1} aᵢ‖₂, the norm of the
/// y-gradient at y = 0 with the bias at its optimum log(n⁺/n⁻).
inline double logistic_lambda_max(const LogisticData& data) {
  const double ns = static_cast<double>(data.labels.size());
  Vector weights(data.labels.size());
  for (Index i = 0; i < weights.size(); ++i)
    weights[i] = data.labels[i] > 0 ? data.n_minus / ns : -data.n_plus / ns;
  return (data.A.transpose() * weights).norm() / ns;
}

inline LogisticData make_logistic_data(const LogisticParams& p, std::uint64_t seed) {
  if (p.n_f <= 0 || p.n_s <= 0 || p.s <= 0 || p.s > p.n_f)
    throw ArgumentError("gen_logistic: need positive n_f, n_s and 0 < s <= n_f");
  if (!(p.c_lambda > 0.0 && p.c_lambda <= 1.0)) throw ArgumentError("gen_logistic: c_lambda must lie in (0, 1]");

  detail::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, std::sqrt(0.1));

  LogisticData data;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(p.n_s) * static_cast<std::size_t>(p.s));
  for (int i = 0; i < p.n_s; ++i)
    for (int j : detail::sample_without_replacement(rng, p.n_f, p.s)) triplets.emplace_back(i, j, normal(rng));
  data.A.resize(p.n_s, p.n_f);
  data.A.setFromTriplets(triplets.begin(), triplets.end());
  data.A.makeCompressed();

  data.y_true = Vector::Zero(p.n_f);
  for (int j : detail::sample_without_replacement(rng, p.n_f, std::min(10 * p.s, p.n_f))) data.y_true[j] = normal(rng);
  data.v_true = normal(rng);

  const Vector margin = data.A * data.y_true;
  data.labels.resize(p.n_s);
  for (int i = 0; i < p.n_s; ++i) {
    const double t = margin[i] + data.v_true + noise(rng);
    data.labels[i] = t >= 0.0 ? 1.0 : -1.0;
    (data.labels[i] > 0 ? data.n_plus : data.n_minus) += 1;
  }
  data.lambda_max = logistic_lambda_max(data);
  return data;
}

inline SmoothOracle logistic_oracle(std::shared_ptr<const LogisticData> data) {
  const Index n_f = data->A.cols();
  SmoothOracle f;
  f.dimension = n_f + 1;
  f.eval = [data = std::move(data), n_f](const Vector& x) {
    const double ns = static_cast<double>(data->labels.size());
    const Vector z = (data->A * x.head(n_f)).array() + x[n_f];
    double value = 0.0;
    Vector w(z.size());
    for (Index i = 0; i < z.size(); ++i) {
      const double t = -data->labels[i] * z[i];
      value += detail::log1pexp(t);
      w[i] = -data->labels[i] * detail::sigmoid(t);
    }
    SmoothValue out;
    out.value = value / ns;
    out.gradient.resize(n_f + 1);
    out.gradient.head(n_f) = data->A.transpose() * w / ns;
    out.gradient[n_f] = w.sum() / ns;
    return out;
  };
  return f;
}

inline GeneratedProblem gen_logistic(std::uint64_t seed, const LogisticParams& p) {
  auto data = std::make_shared<const LogisticData>(make_logistic_data(p, seed));
  const double lambda = p.c_lambda * data->lambda_max;
  Vector mask = Vector::Ones(p.n_f + 1);
  mask[p.n_f] = 0.0;
  GeneratedProblem g;
  g.family = "logistic";
  g.params = p.describe();
  g.seed = seed;
  g.info = {{"lambda", lambda},
            {"lambda_max", data->lambda_max},
            {"n_plus", data->n_plus},
            {"n_minus", data->n_minus},
            {"dimension", p.n_f + 1}};
  g.problem = CompositeProblem(logistic_oracle(data), detail::make_sparsity_reg(p.reg, lambda, std::move(mask)),
                               "logistic[" + g.params + ";seed=" + std::to_string(seed) + "]");
  g.x0 = Vector::Zero(p.n_f + 1);
  return g;
}

// ---------------------------------------------------------------------------
// Student's t regression with subsampled orthonormal DCT-II measurements.

struct StudentTParams {
  int m = 256;
  double c_lambda = 0.1;
  int dynamic_range = 2;
  RegKind reg = RegKind::l1;
  double nu = 0.25;

  std::string describe() const {
    return "m=" + std::to_string(m) + ";c_lambda=" + detail::fmt_double(c_lambda) +
           ";d=" + std::to_string(dynamic_range) + ";reg=" + to_string(reg);
  }
};

struct StudentTData {
  Matrix A;  // m × n, rows of the orthonormal DCT-II matrix
  Vector b;
  Vector x_true;
  std::vector<int> rows;
  double nu = 0.25;
};

/// Row k of the n × n orthonormal DCT-II matrix.
inline Vector dct2_row(int k, int n) {
  const double c = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
  Vector row(n);
  for (int j = 0; j < n; ++j) row[j] = c * std::cos(M_PI * (2.0 * j + 1.0) * k / (2.0 * n));
  return row;
}

inline StudentTData make_student_t_data(const StudentTParams& p, std::uint64_t seed) {
  if (p.m <= 0) throw ArgumentError("gen_student_t: m must be positive");
  if (!(p.c_lambda > 0.0 && p.c_lambda <= 1.0)) throw ArgumentError("gen_student_t: c_lambda must lie in (0, 1]");
  if (p.dynamic_range < 0) throw ArgumentError("gen_student_t: dynamic range must be nonnegative");
  if (!(p.nu > 0.0)) throw ArgumentError("gen_student_t: nu must be positive");
  const int n = 8 * p.m;
  const int s = n / 40;

  detail::Rng rng(seed);
  StudentTData data;
  data.nu = p.nu;
  data.rows = detail::sample_without_replacement(rng, n, p.m);
  data.A.resize(p.m, n);
  for (int r = 0; r < p.m; ++r) data.A.row(r) = dct2_row(data.rows[static_cast<std::size_t>(r)], n).transpose();

  data.x_true = Vector::Zero(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int j : detail::sample_without_replacement(rng, n, s)) {
    const double sign = coin(rng) ? 1.0 : -1.0;
    data.x_true[j] = sign * std::pow(10.0, unit(rng) * p.dynamic_range);
  }
  std::student_t_distribution<double> student(4.0);
  Vector xi(p.m);
  for (int i = 0; i < p.m; ++i) xi[i] = student(rng);
  data.b = data.A * data.x_true + xi / 10.0;
  return data;
}

inline SmoothOracle student_t_oracle(std::shared_ptr<const StudentTData> data) {
  SmoothOracle f;
  f.dimension = data->A.cols();
  f.eval = [data = std::move(data)](const Vector& x) {
    const double m = static_cast<double>(data->A.rows());
    const Vector r = data->A * x - data->b;
    SmoothValue out;
    out.value = (r.array().square() / data->nu).log1p().sum() / m;
    const Vector w = r.array() / (data->nu + r.array().square());
    out.gradient = (2.0 / m) * (data->A.transpose() * w);
    return out;
  };
  return f;
}

inline GeneratedProblem gen_student_t(std::uint64_t seed, const StudentTParams& p) {
  auto data = std::make_shared<const StudentTData>(make_student_t_data(p, seed));
  const SmoothOracle f = student_t_oracle(data);
  const double g0 = f.eval(Vector::Zero(f.dimension)).gradient.lpNorm<Eigen::Infinity>();
  const double lambda = p.c_lambda * g0;
  GeneratedProblem g;
  g.family = "student-t";
  g.params = p.describe();
  g.seed = seed;
  g.info = {{"lambda", lambda}, {"dimension", static_cast<double>(f.dimension)}, {"grad0_inf", g0}};
  g.x0 = data->A.transpose() * data->b;
  g.problem = CompositeProblem(f, detail::make_sparsity_reg(p.reg, lambda, Vector::Ones(f.dimension)),
                               "student-t[" + g.params + ";seed=" + std::to_string(seed) + "]");
  return g;
}

// ---------------------------------------------------------------------------
// Augmented Lagrangian subproblem of the discretized obstacle problem.

struct ObstacleParams {
  int N = 128;
  double mu_al = 0.1;

  std::string describe() const { return "N=" + std::to_string(N) + ";mu_al=" + detail::fmt_double(mu_al); }
};

struct ObstacleData {
  int N = 0;
  double mu_al = 0.1;
  Vector multiplier;  // y ∈ R^N
};

/// 𝒜v for the tridiagonal (2, −1) matrix.
inline Vector laplace_apply(const Vector& v) {
  const Index N = v.size();
  Vector out(N);
  for (Index i = 0; i < N; ++i) {
    double t = 2.0 * v[i];
    if (i > 0) t -= v[i - 1];
    if (i + 1 < N) t -= v[i + 1];
    out[i] = t;
  }
  return out;
}

/// Ax = u + 𝒜v − z.
inline Vector obstacle_constraint(const Vector& x) {
  const Index N = x.size() / 3;
  return x.head(N) + laplace_apply(x.segment(N, N)) - x.tail(N);
}

inline SmoothOracle obstacle_oracle(std::shared_ptr<const ObstacleData> data) {
  SmoothOracle f;
  f.dimension = 3 * data->N;
  f.eval = [data = std::move(data)](const Vector& x) {
    const Index N = data->N;
    const double mu = data->mu_al;
    const auto u = x.head(N);
    const auto v = x.segment(N, N);
    const Vector shifted = obstacle_constraint(x) + mu * data->multiplier;
    SmoothValue out;
    out.value = 0.5 * u.squaredNorm() + 0.5 * v.squaredNorm() - v.sum() + shifted.squaredNorm() / (2.0 * mu);
    out.gradient.resize(3 * N);
    const Vector w = shifted / mu;
    out.gradient.head(N) = u + w;
    out.gradient.segment(N, N) = v.array() - 1.0;
    out.gradient.segment(N, N) += laplace_apply(w);
    out.gradient.tail(N) = -w;
    return out;
  };
  return f;
}

inline GeneratedProblem gen_obstacle(std::uint64_t seed, const ObstacleParams& p) {
  if (p.N < 2) throw ArgumentError("gen_obstacle: N must be at least 2");
  if (!(p.mu_al > 0.0)) throw ArgumentError("gen_obstacle: mu_al must be positive");
  detail::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto data = std::make_shared<ObstacleData>();
  data->N = p.N;
  data->mu_al = p.mu_al;
  data->multiplier.resize(p.N);
  for (int i = 0; i < p.N; ++i) data->multiplier[i] = normal(rng);
  Vector x0(3 * p.N);
  for (int i = 0; i < 3 * p.N; ++i) x0[i] = normal(rng);

  GeneratedProblem g;
  g.family = "obstacle";
  g.params = p.describe();
  g.seed = seed;
  g.info = {{"dimension", 3.0 * p.N}, {"mu_al", p.mu_al}};
  g.x0 = obstacle_project(x0);
  g.problem = CompositeProblem(obstacle_oracle(std::move(data)), std::make_shared<ObstacleSetReg>(p.N),
                               "obstacle[" + g.params + ";seed=" + std::to_string(seed) + "]");
  return g;
}

}  // namespace rpqn::bench
