#pragma once

#include <string>
#include <vector>

#include "ilmt/tensor.hpp"

namespace ilmt {

/// Dense token inventory. Regular tokens are 0..size-1; the single extra
/// index `size` is the blank on RNN-T outputs, <eos> on AED/LM outputs and
/// <sos> on embedding inputs.
class Vocabulary {
 public:
  explicit Vocabulary(int size) : size_(size) { require(size >= 1, "vocabulary must be non-empty"); }

  [[nodiscard]] int size() const { return size_; }
  [[nodiscard]] int blank() const { return size_; }
  [[nodiscard]] int eos() const { return size_; }
  [[nodiscard]] int sos() const { return size_; }
  [[nodiscard]] bool is_token(int id) const { return id >= 0 && id < size_; }

  [[nodiscard]] std::string name(int id) const {
    if (id == size_) return "<special>";
    return "t" + std::to_string(id);
  }

 private:
  int size_;
};

using TokenSequence = std::vector<int>;

/// Acoustic input: one column per frame (input_dim x T).
struct FeatureSequence {
  Matrix frames;

  [[nodiscard]] Eigen::Index num_frames() const { return frames.cols(); }
  [[nodiscard]] Eigen::Index dim() const { return frames.rows(); }
};

inline void validate_tokens(const TokenSequence& y, int vocab_size) {
  for (std::size_t u = 0; u < y.size(); ++u)
    require(y[u] >= 0 && y[u] < vocab_size,
            "token " + std::to_string(y[u]) + " at position " + std::to_string(u) + " is outside the vocabulary");
}

inline void validate_features(const FeatureSequence& x, Eigen::Index input_dim) {
  require(x.num_frames() >= 1, "feature sequence must have at least one frame");
  require(x.dim() == input_dim, "feature dimension " + std::to_string(x.dim()) + " does not match configured " +
                                    std::to_string(input_dim));
  require(x.frames.allFinite(), "feature sequence contains non-finite values");
}

}  // namespace ilmt
