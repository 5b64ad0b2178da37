#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ilmt/lstm.hpp"
#include "ilmt/optimizer.hpp"
#include "ilmt/scorer.hpp"
#include "ilmt/types.hpp"

namespace ilmt {

struct LmConfig {
  int vocab_size = 32;
  int embedding_dim = 64;
  int hidden_dim = 64;
  int layers = 1;

  [[nodiscard]] std::map<std::string, int> dims() const {
    return {{"embedding_dim", embedding_dim}, {"hidden_dim", hidden_dim}, {"layers", layers}};
  }
  friend bool operator==(const LmConfig&, const LmConfig&) = default;
};

namespace lm_names {
inline std::string layer(int l) { return "lm.l" + std::to_string(l); }
inline const std::string kEmbedding = "lm.emb";
inline const std::string kW = "lm.out.W";
inline const std::string kB = "lm.out.b";
}  // namespace lm_names

inline ParamStore make_lm_params(const LmConfig& cfg) {
  require(cfg.vocab_size >= 1 && cfg.layers >= 1, "invalid LM configuration");
  ParamStore p;
  p.add(lm_names::kEmbedding, cfg.embedding_dim, cfg.vocab_size + 1);
  int in = cfg.embedding_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    add_lstm_params(p, lm_names::layer(l), in, cfg.hidden_dim);
    in = cfg.hidden_dim;
  }
  p.add(lm_names::kW, cfg.vocab_size + 1, cfg.hidden_dim);
  p.add(lm_names::kB, cfg.vocab_size + 1, 1);
  return p;
}

inline ParamStore make_lm_params(const LmConfig& cfg, Rng& rng) {
  ParamStore p = make_lm_params(cfg);
  init_uniform(p, rng);
  return p;
}

struct LmState {
  RecurrentState layers;
  int last_token = -1;  // -1 before <sos> has been consumed
};

inline LmState lm_initial_state(const LmConfig& cfg) {
  return {zero_state(static_cast<std::size_t>(cfg.layers), cfg.hidden_dim), -1};
}

/// Consumes `token` (a regular token or <sos> = vocab_size) and returns the
/// next-token distribution over vocab_size tokens plus <eos>.
inline std::pair<LogProbVector, LmState> lm_step(const ParamStore& params, const LmConfig& cfg, const LmState& state,
                                                 int token) {
  if (token < 0 || token > cfg.vocab_size)
    throw ConfigError("lm_step: token " + std::to_string(token) + " out of range");
  LmState next;
  next.last_token = token;
  next.layers.resize(state.layers.size());
  Vector x = params.get(lm_names::kEmbedding).col(token);
  for (int l = 0; l < cfg.layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    next.layers[li] = lstm_advance(LstmWeights(params, lm_names::layer(l)), x, state.layers[li]);
    x = next.layers[li].h;
  }
  return {log_softmax(params.get(lm_names::kW) * x + params.vec(lm_names::kB)), std::move(next)};
}

class LmScorer : public TokenScorer {
 public:
  LmScorer(const ParamStore& params, LmConfig cfg) : params_(params), cfg_(cfg) {}

  [[nodiscard]] int vocab_size() const override { return cfg_.vocab_size; }
  [[nodiscard]] bool predicts_eos() const override { return true; }
  [[nodiscard]] RecurrentState start() const override {
    return lm_step(params_, cfg_, lm_initial_state(cfg_), cfg_.vocab_size).second.layers;
  }
  [[nodiscard]] RecurrentState advance(const RecurrentState& s, int token) const override {
    if (token < 0 || token >= cfg_.vocab_size) throw ConfigError("LmScorer: token out of range");
    return lm_step(params_, cfg_, {s, 0}, token).second.layers;
  }
  [[nodiscard]] LogProbVector log_probs(const RecurrentState& s) const override {
    return log_softmax(params_.get(lm_names::kW) * s.back().h + params_.vec(lm_names::kB));
  }

 private:
  const ParamStore& params_;
  LmConfig cfg_;
};

/// -log P(y) including the final <eos>; accumulates gradients when asked.
inline double lm_sequence_loss(const ParamStore& params, const LmConfig& cfg, const TokenSequence& y,
                               ParamStore* grads = nullptr) {
  validate_tokens(y, cfg.vocab_size);
  const Matrix& E = params.get(lm_names::kEmbedding);
  const auto U = static_cast<Eigen::Index>(y.size());
  Matrix X(E.rows(), U + 1);
  X.col(0) = E.col(cfg.vocab_size);
  for (Eigen::Index u = 0; u < U; ++u) X.col(u + 1) = E.col(y[static_cast<std::size_t>(u)]);
  std::vector<LstmSeqCache> layers;
  const Matrix* in = &X;
  for (int l = 0; l < cfg.layers; ++l) {
    layers.push_back(lstm_forward(LstmWeights(params, lm_names::layer(l)), *in));
    in = &layers.back().H;
  }
  const Matrix& Hs = layers.back().H;
  Matrix Z = params.get(lm_names::kW) * Hs;
  Z.colwise() += params.vec(lm_names::kB);
  double loss = 0.0;
  Matrix dZ(Z.rows(), U + 1);
  for (Eigen::Index u = 0; u <= U; ++u) {
    const Vector lp = log_softmax_values(Z.col(u));
    const int target = u == U ? cfg.vocab_size : y[static_cast<std::size_t>(u)];
    loss -= lp[target];
    dZ.col(u) = lp.array().exp();
    dZ(target, u) -= 1.0;
  }
  if (!grads) return loss;
  grads->mut(lm_names::kW).noalias() += dZ * Hs.transpose();
  grads->vec_mut(lm_names::kB) += dZ.rowwise().sum();
  Matrix dX = params.get(lm_names::kW).transpose() * dZ;
  for (int l = cfg.layers - 1; l >= 0; --l)
    dX = lstm_backward(LstmWeights(params, lm_names::layer(l)), layers[static_cast<std::size_t>(l)], dX, *grads,
                       lm_names::layer(l));
  auto dE = grads->mut(lm_names::kEmbedding);
  dE.col(cfg.vocab_size) += dX.col(0);
  for (Eigen::Index u = 0; u < U; ++u) dE.col(y[static_cast<std::size_t>(u)]) += dX.col(u + 1);
  return loss;
}

struct PerplexityReport {
  double perplexity = 0.0;
  double total_nll = 0.0;
  std::size_t tokens = 0;  // predicted tokens, including <eos> when counted
};

/// exp(total NLL / predicted tokens). `include_eos` adds the sentence-end
/// prediction per sequence and requires a scorer that models <eos>.
inline PerplexityReport perplexity(const TokenScorer& scorer, const std::vector<TokenSequence>& corpus,
                                   bool include_eos) {
  require(!corpus.empty(), "perplexity: empty corpus");
  require(!include_eos || scorer.predicts_eos(), "perplexity: scorer does not model <eos>");
  PerplexityReport r;
  for (const auto& y : corpus) {
    RecurrentState s = scorer.start();
    for (std::size_t u = 0; u < y.size(); ++u) {
      const LogProbVector lp = scorer.log_probs(s);
      r.total_nll -= lp[y[u]];
      ++r.tokens;
      if (u + 1 < y.size() || include_eos) s = scorer.advance(s, y[u]);
    }
    if (include_eos) {
      r.total_nll -= scorer.log_probs(s)[scorer.vocab_size()];
      ++r.tokens;
    }
  }
  require(r.tokens > 0, "perplexity: corpus has no predicted tokens");
  r.perplexity = std::exp(r.total_nll / static_cast<double>(r.tokens));
  return r;
}

/// Perplexity with the scorer's natural token convention.
inline PerplexityReport perplexity(const TokenScorer& scorer, const std::vector<TokenSequence>& corpus) {
  return perplexity(scorer, corpus, scorer.predicts_eos());
}

struct LmTrainOptions {
  int epochs = 10;
  int batch_size = 16;
  AdamOptions adam{};
  std::uint64_t seed = 1;
};

struct LmTrainResult {
  ParamStore params;
  std::vector<double> epoch_loss;  // mean NLL per predicted token
};

/// Trains an LSTM LM on token sequences with shuffled mini-batches.
inline LmTrainResult lm_train(const std::vector<TokenSequence>& corpus, const LmConfig& cfg,
                              const LmTrainOptions& opts) {
  if (corpus.empty()) throw ConfigError("lm_train: empty corpus");
  require(opts.epochs >= 1 && opts.batch_size >= 1, "lm_train: epochs and batch_size must be positive");
  Rng rng(opts.seed);
  LmTrainResult result{make_lm_params(cfg, rng), {}};
  Adam adam(result.params, opts.adam);
  ParamStore grads = result.params.zeros_like();
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t tokens = 0;
  for (const auto& y : corpus) tokens += y.size() + 1;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch_size)) {
      grads.set_zero();
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
      for (std::size_t k = start; k < end; ++k) total += lm_sequence_loss(result.params, cfg, corpus[order[k]], &grads);
      adam.step(result.params, grads);
    }
    result.epoch_loss.push_back(total / static_cast<double>(tokens));
  }
  return result;
}

}  // namespace ilmt
