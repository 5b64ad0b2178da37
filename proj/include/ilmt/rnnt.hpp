#pragma once

#include <map>
#include <string>
#include <vector>

#include "ilmt/lstm.hpp"
#include "ilmt/param_store.hpp"
#include "ilmt/scorer.hpp"
#include "ilmt/types.hpp"

namespace ilmt {

struct RnntConfig {
  int vocab_size = 32;
  int input_dim = 8;
  int encoder_layers = 2;
  int encoder_dim = 64;
  int prediction_layers = 1;
  int prediction_dim = 64;
  int embedding_dim = 64;
  int joint_dim = 64;

  [[nodiscard]] std::map<std::string, int> dims() const {
    return {{"input_dim", input_dim},           {"encoder_layers", encoder_layers},
            {"encoder_dim", encoder_dim},       {"prediction_layers", prediction_layers},
            {"prediction_dim", prediction_dim}, {"embedding_dim", embedding_dim},
            {"joint_dim", joint_dim}};
  }
  friend bool operator==(const RnntConfig&, const RnntConfig&) = default;
};

namespace rnnt_names {
inline std::string enc(int l) { return "rnnt.enc.l" + std::to_string(l); }
inline std::string pred(int l) { return "rnnt.pred.l" + std::to_string(l); }
inline const std::string kEmbedding = "rnnt.pred.emb";
inline const std::string kWe = "rnnt.joint.W_e";
inline const std::string kBe = "rnnt.joint.b_e";
inline const std::string kWp = "rnnt.joint.W_p";
inline const std::string kBp = "rnnt.joint.b_p";
inline const std::string kWj = "rnnt.joint.W_j";
inline const std::string kBj = "rnnt.joint.b_j";
}  // namespace rnnt_names

inline ParamStore make_rnnt_params(const RnntConfig& cfg) {
  require(cfg.vocab_size >= 1 && cfg.input_dim >= 1 && cfg.encoder_layers >= 1 && cfg.prediction_layers >= 1,
          "invalid RNN-T configuration");
  ParamStore p;
  int in = cfg.input_dim;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    add_lstm_params(p, rnnt_names::enc(l), in, cfg.encoder_dim);
    in = cfg.encoder_dim;
  }
  p.add(rnnt_names::kEmbedding, cfg.embedding_dim, cfg.vocab_size + 1);
  in = cfg.embedding_dim;
  for (int l = 0; l < cfg.prediction_layers; ++l) {
    add_lstm_params(p, rnnt_names::pred(l), in, cfg.prediction_dim);
    in = cfg.prediction_dim;
  }
  p.add(rnnt_names::kWe, cfg.joint_dim, cfg.encoder_dim);
  p.add(rnnt_names::kBe, cfg.joint_dim, 1);
  p.add(rnnt_names::kWp, cfg.joint_dim, cfg.prediction_dim);
  p.add(rnnt_names::kBp, cfg.joint_dim, 1);
  p.add(rnnt_names::kWj, cfg.vocab_size + 1, cfg.joint_dim);
  p.add(rnnt_names::kBj, cfg.vocab_size + 1, 1);
  return p;
}

inline ParamStore make_rnnt_params(const RnntConfig& cfg, Rng& rng) {
  ParamStore p = make_rnnt_params(cfg);
  init_uniform(p, rng);
  return p;
}

/// Parameters that only see acoustics: encoder LSTMs plus W_e, b_e.
inline bool is_rnnt_encoder_param(const std::string& name) {
  return name.rfind("rnnt.enc.", 0) == 0 || name == rnnt_names::kWe || name == rnnt_names::kBe;
}

struct RnntEncoderCache {
  std::vector<LstmSeqCache> layers;
  [[nodiscard]] const Matrix& output() const { return layers.back().H; }
};

inline RnntEncoderCache rnnt_encode_cached(const ParamStore& params, const RnntConfig& cfg,
                                           const FeatureSequence& x) {
  validate_features(x, cfg.input_dim);
  RnntEncoderCache cache;
  const Matrix* in = &x.frames;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    cache.layers.push_back(lstm_forward(LstmWeights(params, rnnt_names::enc(l)), *in));
    in = &cache.layers.back().H;
  }
  return cache;
}

/// Encoder hidden states, one column per frame (encoder_dim x T).
inline Matrix rnnt_encode(const ParamStore& params, const RnntConfig& cfg, const FeatureSequence& x) {
  return rnnt_encode_cached(params, cfg, x).output();
}

inline void rnnt_encode_backward(const ParamStore& params, const RnntConfig& cfg, const RnntEncoderCache& cache,
                                 Matrix dH, ParamStore& grads) {
  for (int l = cfg.encoder_layers - 1; l >= 0; --l)
    dH = lstm_backward(LstmWeights(params, rnnt_names::enc(l)), cache.layers[static_cast<std::size_t>(l)], dH,
                       grads, rnnt_names::enc(l));
}

/// Joint network output. `acoustic` = W_e h_enc + b_e (f_t) and
/// `language` = W_p h_pred + b_p (g_u) are exposed for inspection.
struct JointOutput {
  Vector acoustic;
  Vector language;
  Vector hidden;  // tanh(f + g)
  Vector logits;  // vocab_size + 1, blank last
};

inline JointOutput rnnt_joint(const ParamStore& params, const Eigen::Ref<const Vector>& h_enc,
                              const Eigen::Ref<const Vector>& h_pred) {
  const Matrix& We = params.get(rnnt_names::kWe);
  const Matrix& Wp = params.get(rnnt_names::kWp);
  require(h_enc.size() == We.cols(), "rnnt_joint: encoder state dimension mismatch");
  require(h_pred.size() == Wp.cols(), "rnnt_joint: prediction state dimension mismatch");
  JointOutput out;
  out.acoustic = We * h_enc + params.vec(rnnt_names::kBe);
  out.language = Wp * h_pred + params.vec(rnnt_names::kBp);
  out.hidden = (out.acoustic + out.language).array().tanh();
  out.logits = params.get(rnnt_names::kWj) * out.hidden + params.vec(rnnt_names::kBj);
  return out;
}

// Joint with the acoustic embedding precomputed (decoding hot path).
inline Vector rnnt_joint_logits(const ParamStore& params, const Eigen::Ref<const Vector>& acoustic,
                                const Eigen::Ref<const Vector>& language) {
  Vector hidden = (acoustic + language).array().tanh();
  return params.get(rnnt_names::kWj) * hidden + params.vec(rnnt_names::kBj);
}

/// Logits of the joint network with the encoder contribution removed:
/// W_j tanh(W_p h_pred + b_p) + b_j (vocab_size + 1 entries, blank last).
inline Vector rnnt_ilm_logits(const ParamStore& params, const Eigen::Ref<const Vector>& h_pred) {
  Vector hidden = (params.get(rnnt_names::kWp) * h_pred + params.vec(rnnt_names::kBp)).array().tanh();
  return params.get(rnnt_names::kWj) * hidden + params.vec(rnnt_names::kBj);
}

/// Internal-LM distribution over regular tokens: the blank logit is dropped
/// and the remaining |V| logits are renormalised.
inline LogProbVector rnnt_ilm_step(const ParamStore& params, const Eigen::Ref<const Vector>& h_pred) {
  Vector z = rnnt_ilm_logits(params, h_pred);
  return log_softmax(z.head(z.size() - 1));
}

// Prediction network. States have consumed <sos> plus every emitted label.

inline RecurrentState rnnt_pred_advance(const ParamStore& params, const RnntConfig& cfg, const RecurrentState& state,
                                        int token) {
  require(token >= 0 && token <= cfg.vocab_size, "rnnt_pred_advance: token out of range");
  RecurrentState next(state.size());
  Vector x = params.get(rnnt_names::kEmbedding).col(token);
  for (int l = 0; l < cfg.prediction_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    next[li] = lstm_advance(LstmWeights(params, rnnt_names::pred(l)), x, state[li]);
    x = next[li].h;
  }
  return next;
}

inline RecurrentState rnnt_pred_start(const ParamStore& params, const RnntConfig& cfg) {
  return rnnt_pred_advance(params, cfg, zero_state(static_cast<std::size_t>(cfg.prediction_layers), cfg.prediction_dim),
                           cfg.vocab_size);
}

struct RnntPredCache {
  std::vector<LstmSeqCache> layers;
  Matrix embedded;
  [[nodiscard]] const Matrix& output() const { return layers.back().H; }
};

/// Runs the prediction network over <sos> followed by `labels`; column u of
/// the output is the state after consuming u labels.
inline RnntPredCache rnnt_predict_cached(const ParamStore& params, const RnntConfig& cfg,
                                         const std::vector<int>& labels) {
  const Matrix& E = params.get(rnnt_names::kEmbedding);
  RnntPredCache cache;
  cache.embedded.resize(E.rows(), static_cast<Eigen::Index>(labels.size()) + 1);
  cache.embedded.col(0) = E.col(cfg.vocab_size);
  for (std::size_t u = 0; u < labels.size(); ++u) cache.embedded.col(static_cast<Eigen::Index>(u) + 1) = E.col(labels[u]);
  const Matrix* in = &cache.embedded;
  for (int l = 0; l < cfg.prediction_layers; ++l) {
    cache.layers.push_back(lstm_forward(LstmWeights(params, rnnt_names::pred(l)), *in));
    in = &cache.layers.back().H;
  }
  return cache;
}

inline void rnnt_predict_backward(const ParamStore& params, const RnntConfig& cfg, const RnntPredCache& cache,
                                  const std::vector<int>& labels, Matrix dP, ParamStore& grads) {
  for (int l = cfg.prediction_layers - 1; l >= 0; --l)
    dP = lstm_backward(LstmWeights(params, rnnt_names::pred(l)), cache.layers[static_cast<std::size_t>(l)], dP, grads,
                       rnnt_names::pred(l));
  auto dE = grads.mut(rnnt_names::kEmbedding);
  dE.col(cfg.vocab_size) += dP.col(0);
  for (std::size_t u = 0; u < labels.size(); ++u) dE.col(labels[u]) += dP.col(static_cast<Eigen::Index>(u) + 1);
}

/// The RNN-T internal LM (prediction + joint networks, encoder removed) as a
/// TokenScorer over regular tokens only.
class RnntIlmScorer : public TokenScorer {
 public:
  RnntIlmScorer(const ParamStore& params, RnntConfig cfg) : params_(params), cfg_(cfg) {}

  [[nodiscard]] int vocab_size() const override { return cfg_.vocab_size; }
  [[nodiscard]] bool predicts_eos() const override { return false; }
  [[nodiscard]] RecurrentState start() const override { return rnnt_pred_start(params_, cfg_); }
  [[nodiscard]] RecurrentState advance(const RecurrentState& s, int token) const override {
    require(token >= 0 && token < cfg_.vocab_size, "RnntIlmScorer: token out of range");
    return rnnt_pred_advance(params_, cfg_, s, token);
  }
  [[nodiscard]] LogProbVector log_probs(const RecurrentState& s) const override {
    return rnnt_ilm_step(params_, s.back().h);
  }

 private:
  const ParamStore& params_;
  RnntConfig cfg_;
};

}  // namespace ilmt
