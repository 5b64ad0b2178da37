#pragma once

#include <cmath>

#include "ilmt/param_store.hpp"

namespace ilmt {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clipping; <= 0 disables
};

/// Adam with global-norm clipping. Single writer: one instance per ParamStore.
class Adam {
 public:
  Adam(const ParamStore& params, AdamOptions opts)
      : opts_(opts), m_(params.zeros_like()), v_(params.zeros_like()) {}

  /// Applies one update; returns the pre-clipping gradient norm.
  double step(ParamStore& params, const ParamStore& grads) {
    require(params.same_shapes(grads), "Adam::step: gradient shapes differ from parameters");
    const double norm = std::sqrt(grads.squared_norm());
    double scale = 1.0;
    if (opts_.clip_norm > 0 && norm > opts_.clip_norm) scale = opts_.clip_norm / norm;
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (const auto& [name, g] : grads.entries()) {
      auto m = m_.mut(name);
      auto v = v_.mut(name);
      auto p = params.mut(name);
      m = opts_.beta1 * m + (1.0 - opts_.beta1) * scale * g;
      v = opts_.beta2 * v.array() + (1.0 - opts_.beta2) * (scale * g.array()).square();
      p.array() -= opts_.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opts_.epsilon);
    }
    return norm;
  }

  [[nodiscard]] long steps() const { return t_; }

 private:
  AdamOptions opts_;
  ParamStore m_;
  ParamStore v_;
  long t_ = 0;
};

}  // namespace ilmt
