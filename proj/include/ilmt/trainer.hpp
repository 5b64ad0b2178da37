#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ilmt/data.hpp"
#include "ilmt/decoding.hpp"
#include "ilmt/lm.hpp"
#include "ilmt/losses.hpp"
#include "ilmt/optimizer.hpp"

namespace ilmt {

enum class TrainLoss { Standard, Ilmt };

inline std::string to_string(TrainLoss l) { return l == TrainLoss::Standard ? "standard" : "ilmt"; }

inline TrainLoss train_loss_from_string(const std::string& s) {
  if (s == "standard") return TrainLoss::Standard;
  if (s == "ilmt") return TrainLoss::Ilmt;
  throw ConfigError("unknown train loss '" + s + "'");
}

/// Default ILMT weights: 0.4 for RNN-T, 1.0 for AED.
inline double default_alpha(Family f) { return f == Family::Rnnt ? 0.4 : 1.0; }

struct TrainOptions {
  TrainLoss loss = TrainLoss::Standard;
  double alpha = 0.0;  // used when loss == Ilmt
  int epochs = 10;
  int batch_size = 8;
  AdamOptions adam{};
  std::uint64_t seed = 1;
  DecodeOptions decode{};
};

struct EpochLog {
  int epoch = 0;
  double train_e2e_loss = 0.0;  // per utterance
  double train_ilm_loss = 0.0;  // per utterance
  double dev_e2e_loss = 0.0;
  double dev_wer = 0.0;         // greedy decoding
  double dev_ilm_perplexity = 0.0;
};

struct TrainResult {
  ParamStore best;  // parameters of the best dev epoch
  ParamStore last;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

/// Dev greedy WER (pooled) of a model.
inline EditCounts greedy_wer(const E2EConfig& cfg, const ParamStore& params, const std::vector<Utterance>& utts,
                             const DecodeOptions& opts = {}) {
  EditCounts c;
  for (const auto& u : utts) c += wer(u.y, greedy_decode(cfg, params, u.x, opts));
  return c;
}

/// Internal-LM perplexity on a text set (RNN-T excludes <eos>, AED includes it).
inline double ilm_perplexity(const E2EConfig& cfg, const ParamStore& params, const std::vector<TokenSequence>& text) {
  return perplexity(*make_ilm_scorer(cfg, params), text).perplexity;
}

/// Mini-batch training of an E2E model with the standard or ILMT loss.
/// `init` continues from existing parameters (fine-tuning regime). The
/// epoch with the lowest dev WER (then lowest dev loss) is kept as `best`.
inline TrainResult train_e2e(const E2EConfig& cfg, const std::vector<Utterance>& train,
                             const std::vector<Utterance>& dev, const TrainOptions& opts,
                             const ParamStore* init = nullptr) {
  if (train.empty()) throw ConfigError("train_e2e: empty training set");
  if (dev.empty()) throw ConfigError("train_e2e: empty dev set");
  if (opts.epochs < 1 || opts.batch_size < 1) throw ConfigError("train_e2e: epochs and batch_size must be positive");
  const double alpha = opts.loss == TrainLoss::Ilmt ? opts.alpha : 0.0;
  if (!(alpha >= 0.0)) throw ConfigError("ILMT weight alpha must be non-negative");
  for (const auto& u : train) {
    validate_tokens(u.y, cfg.vocab_size());
    require(u.x.dim() == cfg.input_dim(), "utterance '" + u.id + "': feature dimension does not match the model");
  }
  Rng rng(opts.seed);
  TrainResult res;
  res.last = make_e2e_params(cfg, rng);
  if (init) res.last.assign_from(*init);
  Adam adam(res.last, opts.adam);
  ParamStore grads = res.last.zeros_like();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::vector<TokenSequence> dev_text = transcripts(dev);
  double best_wer = 0.0, best_loss = 0.0;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch_size)) {
      grads.set_zero();
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
      for (std::size_t k = start; k < end; ++k) {
        const Utterance& u = train[order[k]];
        const LossReport r = ilmt_loss(cfg, res.last, u.x, u.y, alpha, &grads);
        log.train_e2e_loss += r.e2e_part;
        log.train_ilm_loss += r.ilm_part;
      }
      adam.step(res.last, grads);
    }
    log.train_e2e_loss /= static_cast<double>(train.size());
    log.train_ilm_loss /= static_cast<double>(train.size());
    for (const auto& u : dev) log.dev_e2e_loss += e2e_loss(cfg, res.last, u.x, u.y);
    log.dev_e2e_loss /= static_cast<double>(dev.size());
    log.dev_wer = greedy_wer(cfg, res.last, dev, opts.decode).rate();
    log.dev_ilm_perplexity = ilm_perplexity(cfg, res.last, dev_text);
    if (epoch == 1 || log.dev_wer < best_wer || (log.dev_wer == best_wer && log.dev_e2e_loss < best_loss)) {
      best_wer = log.dev_wer;
      best_loss = log.dev_e2e_loss;
      res.best = res.last;
      res.best_epoch = epoch;
    }
    res.log.push_back(log);
  }
  return res;
}

}  // namespace ilmt
