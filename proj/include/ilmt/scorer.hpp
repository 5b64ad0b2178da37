#pragma once

#include "ilmt/lstm.hpp"

namespace ilmt {

/// Left-to-right token scorer with a recurrent state. The state returned by
/// start() has already consumed <sos>; log_probs() gives the distribution of
/// the next token (size vocab_size, plus <eos> at index vocab_size when
/// predicts_eos()).
class TokenScorer {
 public:
  virtual ~TokenScorer() = default;
  [[nodiscard]] virtual int vocab_size() const = 0;
  [[nodiscard]] virtual bool predicts_eos() const = 0;
  [[nodiscard]] virtual RecurrentState start() const = 0;
  [[nodiscard]] virtual RecurrentState advance(const RecurrentState& state, int token) const = 0;
  [[nodiscard]] virtual LogProbVector log_probs(const RecurrentState& state) const = 0;
};

}  // namespace ilmt
