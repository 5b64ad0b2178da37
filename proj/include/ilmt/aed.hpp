#pragma once

#include <map>
#include <string>
#include <vector>

#include "ilmt/lstm.hpp"
#include "ilmt/param_store.hpp"
#include "ilmt/scorer.hpp"
#include "ilmt/types.hpp"

namespace ilmt {

/// Attention encoder-decoder dimensions. The encoder is bidirectional with
/// encoder_dim/2 units per direction; token embeddings have encoder_dim
/// entries so they can be summed with the context vector.
struct AedConfig {
  int vocab_size = 32;
  int input_dim = 8;
  int encoder_layers = 2;
  int encoder_dim = 64;
  int decoder_layers = 1;
  int decoder_dim = 64;
  int attention_dim = 64;
  int conv_filters = 4;
  int conv_width = 3;

  [[nodiscard]] std::map<std::string, int> dims() const {
    return {{"input_dim", input_dim},         {"encoder_layers", encoder_layers}, {"encoder_dim", encoder_dim},
            {"decoder_layers", decoder_layers}, {"decoder_dim", decoder_dim},     {"attention_dim", attention_dim},
            {"conv_filters", conv_filters},   {"conv_width", conv_width}};
  }
  friend bool operator==(const AedConfig&, const AedConfig&) = default;
};

namespace aed_names {
inline std::string enc(int l, bool forward) {
  return "aed.enc.l" + std::to_string(l) + (forward ? ".fwd" : ".bwd");
}
inline std::string dec(int l) { return "aed.dec.l" + std::to_string(l); }
inline const std::string kEmbedding = "aed.dec.emb";
inline const std::string kWd = "aed.dec.W_d";
inline const std::string kBd = "aed.dec.b_d";
inline const std::string kWa = "aed.att.W_a";
inline const std::string kUa = "aed.att.U_a";
inline const std::string kBa = "aed.att.b_a";
inline const std::string kV = "aed.att.v";
inline const std::string kConv = "aed.att.conv";
inline const std::string kLoc = "aed.att.L";
}  // namespace aed_names

inline ParamStore make_aed_params(const AedConfig& cfg) {
  require(cfg.encoder_dim % 2 == 0, "AED encoder_dim must be even (bidirectional halves)");
  require(cfg.conv_width % 2 == 1, "AED attention conv_width must be odd");
  require(cfg.vocab_size >= 1 && cfg.encoder_layers >= 1 && cfg.decoder_layers >= 1, "invalid AED configuration");
  ParamStore p;
  int in = cfg.input_dim;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    add_lstm_params(p, aed_names::enc(l, true), in, cfg.encoder_dim / 2);
    add_lstm_params(p, aed_names::enc(l, false), in, cfg.encoder_dim / 2);
    in = cfg.encoder_dim;
  }
  p.add(aed_names::kWa, cfg.attention_dim, cfg.encoder_dim);
  p.add(aed_names::kUa, cfg.attention_dim, cfg.decoder_dim);
  p.add(aed_names::kBa, cfg.attention_dim, 1);
  p.add(aed_names::kV, cfg.attention_dim, 1);
  p.add(aed_names::kConv, cfg.conv_filters, cfg.conv_width);
  p.add(aed_names::kLoc, cfg.attention_dim, cfg.conv_filters);
  p.add(aed_names::kEmbedding, cfg.encoder_dim, cfg.vocab_size + 1);
  in = cfg.encoder_dim;
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    add_lstm_params(p, aed_names::dec(l), in, cfg.decoder_dim);
    in = cfg.decoder_dim;
  }
  p.add(aed_names::kWd, cfg.vocab_size + 1, cfg.decoder_dim);
  p.add(aed_names::kBd, cfg.vocab_size + 1, 1);
  return p;
}

inline ParamStore make_aed_params(const AedConfig& cfg, Rng& rng) {
  ParamStore p = make_aed_params(cfg);
  init_uniform(p, rng);
  return p;
}

inline bool is_aed_encoder_param(const std::string& name) { return name.rfind("aed.enc.", 0) == 0; }
inline bool is_aed_attention_param(const std::string& name) { return name.rfind("aed.att.", 0) == 0; }

struct AedEncoderCache {
  std::vector<LstmSeqCache> forward;
  std::vector<LstmSeqCache> backward;  // run on time-reversed input
  std::vector<Matrix> outputs;         // encoder_dim x T per layer
};

inline AedEncoderCache aed_encode_cached(const ParamStore& params, const AedConfig& cfg, const FeatureSequence& x) {
  validate_features(x, cfg.input_dim);
  AedEncoderCache cache;
  Matrix in = x.frames;
  const Eigen::Index half = cfg.encoder_dim / 2;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    cache.forward.push_back(lstm_forward(LstmWeights(params, aed_names::enc(l, true)), in));
    Matrix reversed = in.rowwise().reverse();
    cache.backward.push_back(lstm_forward(LstmWeights(params, aed_names::enc(l, false)), reversed));
    Matrix out(cfg.encoder_dim, in.cols());
    out.topRows(half) = cache.forward.back().H;
    out.bottomRows(half) = cache.backward.back().H.rowwise().reverse();
    cache.outputs.push_back(out);
    in = std::move(out);
  }
  return cache;
}

inline void aed_encode_backward(const ParamStore& params, const AedConfig& cfg, const AedEncoderCache& cache, Matrix dOut,
                                ParamStore& grads) {
  const Eigen::Index half = cfg.encoder_dim / 2;
  for (int l = cfg.encoder_layers - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    Matrix dF = dOut.topRows(half);
    Matrix dB = dOut.bottomRows(half).rowwise().reverse();
    Matrix dX = lstm_backward(LstmWeights(params, aed_names::enc(l, true)), cache.forward[li], dF, grads,
                              aed_names::enc(l, true));
    Matrix dXb = lstm_backward(LstmWeights(params, aed_names::enc(l, false)), cache.backward[li], dB, grads,
                               aed_names::enc(l, false));
    dX += dXb.rowwise().reverse();
    dOut = std::move(dX);
  }
}

/// Encoder output plus the time-invariant attention projection W_a H + b_a.
struct AedEncoded {
  Matrix H;
  Matrix projected;
};

inline AedEncoded aed_prepare(const ParamStore& params, Matrix H) {
  AedEncoded enc;
  enc.projected = params.get(aed_names::kWa) * H;
  enc.projected.colwise() += params.vec(aed_names::kBa);
  enc.H = std::move(H);
  return enc;
}

inline AedEncoded aed_encode(const ParamStore& params, const AedConfig& cfg, const FeatureSequence& x) {
  return aed_prepare(params, aed_encode_cached(params, cfg, x).outputs.back());
}

struct AttentionCache {
  Vector a_prev;
  Vector h_dec;
  Matrix loc;  // conv_filters x T
  Matrix th;   // attention_dim x T, tanh activations
  Vector a;
  Vector c;
};

/// Location-aware additive attention:
///   e_t = v . tanh(W_a h_t + U_a s + L conv(a_prev)_t + b_a),  a = softmax(e),  c = H a.
inline AttentionCache attend(const ParamStore& params, const AedEncoded& enc, const Eigen::Ref<const Vector>& a_prev,
                             const Eigen::Ref<const Vector>& h_dec) {
  const Matrix& K = params.get(aed_names::kConv);
  const Eigen::Index T = enc.H.cols();
  require(a_prev.size() == T, "attend: previous attention has wrong length");
  const Eigen::Index half = K.cols() / 2;
  AttentionCache s;
  s.a_prev = a_prev;
  s.h_dec = h_dec;
  s.loc = Matrix::Zero(K.rows(), T);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index k = 0; k < K.cols(); ++k) {
      const Eigen::Index src = t + k - half;
      if (src >= 0 && src < T) s.loc.col(t) += K.col(k) * a_prev[src];
    }
  s.th = enc.projected + params.get(aed_names::kLoc) * s.loc;
  s.th.colwise() += params.get(aed_names::kUa) * h_dec;
  s.th = s.th.array().tanh();
  Vector e = s.th.transpose() * params.vec(aed_names::kV);
  s.a = softmax(e);
  s.c = enc.H * s.a;
  return s;
}

struct AttentionGrad {
  Vector dh_dec;
  Vector da_prev;
};

/// Backward through attend(). Gradients for W_a/b_a are deferred: the
/// caller accumulates `dprojected` and flushes it once per utterance.
inline AttentionGrad attend_backward(const ParamStore& params, const AedEncoded& enc, const AttentionCache& s,
                                     const Eigen::Ref<const Vector>& dc, const Eigen::Ref<const Vector>& da_in,
                                     Matrix& dH, Matrix& dprojected, ParamStore& grads) {
  const Matrix& K = params.get(aed_names::kConv);
  const Matrix& L = params.get(aed_names::kLoc);
  const auto v = params.vec(aed_names::kV);
  const Eigen::Index T = enc.H.cols();
  const Eigen::Index half = K.cols() / 2;

  Vector da = enc.H.transpose() * dc + da_in;
  dH.noalias() += dc * s.a.transpose();
  const double dot = s.a.dot(da);
  Vector de = s.a.cwiseProduct((da.array() - dot).matrix());
  grads.vec_mut(aed_names::kV) += s.th * de;
  Matrix dpre = (v * de.transpose()).cwiseProduct((1.0 - s.th.array().square()).matrix());
  dprojected += dpre;
  Vector rows = dpre.rowwise().sum();
  grads.mut(aed_names::kUa).noalias() += rows * s.h_dec.transpose();
  grads.mut(aed_names::kLoc).noalias() += dpre * s.loc.transpose();
  Matrix dloc = L.transpose() * dpre;
  auto dK = grads.mut(aed_names::kConv);
  AttentionGrad g;
  g.dh_dec = params.get(aed_names::kUa).transpose() * rows;
  g.da_prev = Vector::Zero(T);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index k = 0; k < K.cols(); ++k) {
      const Eigen::Index src = t + k - half;
      if (src < 0 || src >= T) continue;
      dK.col(k) += dloc.col(t) * s.a_prev[src];
      g.da_prev[src] += dloc.col(t).dot(K.col(k));
    }
  return g;
}

/// Flushes the accumulated gradient of W_a H + b_a into W_a, b_a and dH.
inline void attend_flush(const ParamStore& params, const AedEncoded& enc, const Matrix& dprojected, Matrix& dH,
                         ParamStore& grads) {
  grads.mut(aed_names::kWa).noalias() += dprojected * enc.H.transpose();
  grads.vec_mut(aed_names::kBa) += dprojected.rowwise().sum();
  dH.noalias() += params.get(aed_names::kWa).transpose() * dprojected;
}

/// Decoder-side state: decoder LSTM stack, last attention weights a_{u-1}
/// and context c_{u-1}.
struct AedStates {
  RecurrentState dec;
  Vector a;
  Vector c;
};

inline Vector aed_initial_alignment(Eigen::Index T) {
  Vector a = Vector::Zero(T);
  a[0] = 1.0;
  return a;
}

/// Initial state: zero decoder state, attention computed from a one-hot
/// alignment on the first frame.
inline AedStates aed_initial_state(const ParamStore& params, const AedConfig& cfg, const AedEncoded& enc) {
  AedStates s;
  s.dec = zero_state(static_cast<std::size_t>(cfg.decoder_layers), cfg.decoder_dim);
  AttentionCache att = attend(params, enc, aed_initial_alignment(enc.H.cols()), s.dec.back().h);
  s.a = std::move(att.a);
  s.c = std::move(att.c);
  return s;
}

struct AedStepResult {
  LogProbVector log_probs;  // vocab_size + 1, <eos> last
  AedStates state;
};

inline Vector aed_output_logits(const ParamStore& params, const Eigen::Ref<const Vector>& h) {
  return params.get(aed_names::kWd) * h + params.vec(aed_names::kBd);
}

/// One decoder step: h_u = DecoderRNN(h_{u-1}, e_{u-1} + c_{u-1}),
/// z_u = W_d h_u + b_d, then attention refreshes (a_u, c_u).
inline AedStepResult aed_decode_step(const ParamStore& params, const AedConfig& cfg, const AedEncoded& enc,
                                     const AedStates& state, const Eigen::Ref<const Vector>& e_prev) {
  require(e_prev.size() == state.c.size(), "aed_decode_step: embedding and context dimensions differ");
  AedStepResult r;
  Vector x = e_prev + state.c;
  r.state.dec.resize(state.dec.size());
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    r.state.dec[li] = lstm_advance(LstmWeights(params, aed_names::dec(l)), x, state.dec[li]);
    x = r.state.dec[li].h;
  }
  r.log_probs = log_softmax(aed_output_logits(params, x));
  AttentionCache att = attend(params, enc, state.a, x);
  r.state.a = std::move(att.a);
  r.state.c = std::move(att.c);
  return r;
}

inline AedStepResult aed_decode_step(const ParamStore& params, const AedConfig& cfg, const AedEncoded& enc,
                                     const AedStates& state, int prev_token) {
  require(prev_token >= 0 && prev_token <= cfg.vocab_size, "aed_decode_step: token out of range");
  return aed_decode_step(params, cfg, enc, state, params.get(aed_names::kEmbedding).col(prev_token));
}

struct AedIlmStepResult {
  LogProbVector log_probs;
  RecurrentState dec;
};

/// Decoder step with the context vector zeroed: no attention, no encoder.
inline AedIlmStepResult aed_ilm_step(const ParamStore& params, const AedConfig& cfg, const RecurrentState& dec,
                                     const Eigen::Ref<const Vector>& e_prev) {
  AedIlmStepResult r;
  r.dec.resize(dec.size());
  Vector x = e_prev;
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const auto li = static_cast<std::size_t>(l);
    r.dec[li] = lstm_advance(LstmWeights(params, aed_names::dec(l)), x, dec[li]);
    x = r.dec[li].h;
  }
  r.log_probs = log_softmax(aed_output_logits(params, x));
  return r;
}

inline AedIlmStepResult aed_ilm_step(const ParamStore& params, const AedConfig& cfg, const RecurrentState& dec,
                                     int prev_token) {
  require(prev_token >= 0 && prev_token <= cfg.vocab_size, "aed_ilm_step: token out of range");
  return aed_ilm_step(params, cfg, dec, params.get(aed_names::kEmbedding).col(prev_token));
}

/// AED internal LM as a TokenScorer over regular tokens plus <eos>.
class AedIlmScorer : public TokenScorer {
 public:
  AedIlmScorer(const ParamStore& params, AedConfig cfg) : params_(params), cfg_(cfg) {}

  [[nodiscard]] int vocab_size() const override { return cfg_.vocab_size; }
  [[nodiscard]] bool predicts_eos() const override { return true; }
  [[nodiscard]] RecurrentState start() const override {
    return step(zero_state(static_cast<std::size_t>(cfg_.decoder_layers), cfg_.decoder_dim), cfg_.vocab_size);
  }
  [[nodiscard]] RecurrentState advance(const RecurrentState& s, int token) const override {
    require(token >= 0 && token < cfg_.vocab_size, "AedIlmScorer: token out of range");
    return step(s, token);
  }
  [[nodiscard]] LogProbVector log_probs(const RecurrentState& s) const override {
    return log_softmax(aed_output_logits(params_, s.back().h));
  }

 private:
  [[nodiscard]] RecurrentState step(const RecurrentState& s, int token) const {
    RecurrentState next(s.size());
    Vector x = params_.get(aed_names::kEmbedding).col(token);
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      const auto li = static_cast<std::size_t>(l);
      next[li] = lstm_advance(LstmWeights(params_, aed_names::dec(l)), x, s[li]);
      x = next[li].h;
    }
    return next;
  }

  const ParamStore& params_;
  AedConfig cfg_;
};

}  // namespace ilmt
