#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ilmt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Raised for malformed configuration, shape mismatches and invalid arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

// log(exp(a) + exp(b)) without leaving the log domain.
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  if (v.size() == 0) return kLogZero;
  const double m = v.maxCoeff();
  if (m == kLogZero) return kLogZero;
  return m + std::log((v.array() - m).exp().sum());
}

/// Log-probabilities over an output inventory. `normalized` is true when the
/// values were produced by a log-softmax (log-sum-exp == 0).
struct LogProbVector {
  Vector values;
  bool normalized = false;

  [[nodiscard]] Eigen::Index size() const { return values.size(); }
  double operator[](Eigen::Index i) const { return values[i]; }
};

inline Vector log_softmax_values(const Eigen::Ref<const Vector>& logits) {
  const double m = logits.maxCoeff();
  Vector shifted = logits.array() - m;
  const double lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

/// Log-softmax with input validation; rejects empty or non-finite logits.
inline LogProbVector log_softmax(const Eigen::Ref<const Vector>& logits) {
  if (logits.size() < 1) throw ConfigError("log_softmax: empty logits");
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      std::ostringstream os;
      os << "log_softmax: non-finite logit " << logits[i] << " at index " << i;
      throw ConfigError(os.str());
    }
  }
  return {log_softmax_values(logits), true};
}

inline Vector softmax(const Eigen::Ref<const Vector>& logits) {
  return log_softmax_values(logits).array().exp();
}

// Gradient of sum_k g_k * log_softmax(z)_k with respect to z.
inline Vector log_softmax_backward(const Eigen::Ref<const Vector>& log_probs,
                                   const Eigen::Ref<const Vector>& grad_out) {
  return grad_out - log_probs.array().exp().matrix() * grad_out.sum();
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vector sigmoid(const Eigen::Ref<const Vector>& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace ilmt
