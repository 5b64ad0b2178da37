#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ilmt/tensor.hpp"

namespace ilmt {

using Rng = std::mt19937_64;

/// Named, fixed-shape parameter arrays. Vectors are stored as n x 1 matrices.
class ParamStore {
 public:
  void add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    require(rows > 0 && cols > 0, "parameter '" + name + "' must have a positive shape");
    auto [it, inserted] = entries_.try_emplace(name, Matrix::Zero(rows, cols));
    require(inserted, "duplicate parameter '" + name + "'");
  }

  [[nodiscard]] bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  [[nodiscard]] const Matrix& get(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), "unknown parameter '" + name + "'");
    return it->second;
  }

  // Mutable access to values; the returned Ref cannot resize the entry.
  Eigen::Ref<Matrix> mut(const std::string& name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), "unknown parameter '" + name + "'");
    return it->second;
  }

  [[nodiscard]] Eigen::Map<const Vector> vec(const std::string& name) const {
    const Matrix& m = get(name);
    return {m.data(), m.size()};
  }

  Eigen::Map<Vector> vec_mut(const std::string& name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), "unknown parameter '" + name + "'");
    return {it->second.data(), it->second.size()};
  }

  [[nodiscard]] ParamStore zeros_like() const {
    ParamStore out;
    for (const auto& [name, m] : entries_) out.entries_.emplace(name, Matrix::Zero(m.rows(), m.cols()));
    return out;
  }

  void set_zero() {
    for (auto& [name, m] : entries_) m.setZero();
  }

  [[nodiscard]] bool same_shapes(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) {
      if (a->first != b->first || a->second.rows() != b->second.rows() ||
          a->second.cols() != b->second.cols())
        return false;
    }
    return true;
  }

  /// this += scale * other (same names and shapes required).
  void axpy(double scale, const ParamStore& other) {
    require(same_shapes(other), "axpy: parameter sets differ");
    auto b = other.entries_.begin();
    for (auto& [name, m] : entries_) {
      m += scale * b->second;
      ++b;
    }
  }

  [[nodiscard]] double squared_norm() const {
    double s = 0.0;
    for (const auto& [name, m] : entries_) s += m.squaredNorm();
    return s;
  }

  [[nodiscard]] std::size_t num_elements() const {
    std::size_t n = 0;
    for (const auto& [name, m] : entries_) n += static_cast<std::size_t>(m.size());
    return n;
  }

  [[nodiscard]] std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, m] : entries_) out.push_back(name);
    return out;
  }

  [[nodiscard]] const std::map<std::string, Matrix>& entries() const { return entries_; }

  /// Copies values from `other` for every name both stores share with equal
  /// shape; throws naming the first parameter whose shape differs.
  void assign_from(const ParamStore& other) {
    for (const auto& [name, m] : other.entries_) {
      auto it = entries_.find(name);
      require(it != entries_.end(), "checkpoint parameter '" + name + "' not present in model");
      require(it->second.rows() == m.rows() && it->second.cols() == m.cols(),
              "shape mismatch for parameter '" + name + "'");
      it->second = m;
    }
    for (const auto& [name, m] : entries_)
      require(other.entries_.count(name) != 0, "parameter '" + name + "' missing from checkpoint");
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (!a.same_shapes(b)) return false;
    auto ib = b.entries_.begin();
    for (const auto& [name, m] : a.entries_) {
      if (m != ib->second) return false;
      ++ib;
    }
    return true;
  }

 private:
  std::map<std::string, Matrix> entries_;
};

/// Uniform init in [-r, r], r = 1/sqrt(fan_in). `fan_in` maps a name to its
/// fan-in; the default uses the column count (rows for column vectors).
inline void init_uniform(ParamStore& store, Rng& rng,
                         const std::function<Eigen::Index(const std::string&, const Matrix&)>& fan_in = {}) {
  for (const auto& name : store.names()) {
    auto m = store.mut(name);
    Eigen::Index fin = fan_in ? fan_in(name, m) : (m.cols() > 1 ? m.cols() : m.rows());
    const double r = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fin, 1)));
    std::uniform_real_distribution<double> dist(-r, r);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
}

}  // namespace ilmt
