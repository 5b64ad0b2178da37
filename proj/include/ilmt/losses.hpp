#pragma once

#include <vector>

#include "ilmt/e2e.hpp"

namespace ilmt {

/// Transducer alignment lattice over frames t = 0..T-1 and emitted labels
/// u = 0..U. log_alpha(t, u) is the log-probability of reaching frame t
/// with u labels emitted (log_alpha(0, 0) = 0); log_beta(t, u) is the
/// log-probability of completing from there, including the final blank.
struct AlignmentLattice {
  Matrix log_alpha;
  Matrix log_beta;
  double log_likelihood = kLogZero;
};

/// `blank(t, u)`: log P(<b>) at node (t, u); `label(t, u)`: log P(y_{u+1})
/// at node (t, u), u < U.
inline AlignmentLattice rnnt_lattice(const Matrix& blank, const Matrix& label) {
  const Eigen::Index T = blank.rows();
  const Eigen::Index U = blank.cols() - 1;
  require(T >= 1 && label.rows() == T && label.cols() == U, "rnnt_lattice: inconsistent shapes");
  AlignmentLattice lat;
  lat.log_alpha = Matrix::Constant(T, U + 1, kLogZero);
  lat.log_beta = Matrix::Constant(T, U + 1, kLogZero);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) {
        lat.log_alpha(0, 0) = 0.0;
        continue;
      }
      double a = kLogZero;
      if (t > 0) a = lat.log_alpha(t - 1, u) + blank(t - 1, u);
      if (u > 0) a = log_add(a, lat.log_alpha(t, u - 1) + label(t, u - 1));
      lat.log_alpha(t, u) = a;
    }
  }
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    for (Eigen::Index u = U; u >= 0; --u) {
      if (t == T - 1 && u == U) {
        lat.log_beta(t, u) = blank(t, u);
        continue;
      }
      double b = kLogZero;
      if (t < T - 1) b = lat.log_beta(t + 1, u) + blank(t, u);
      if (u < U) b = log_add(b, lat.log_beta(t, u + 1) + label(t, u));
      lat.log_beta(t, u) = b;
    }
  }
  lat.log_likelihood = lat.log_alpha(T - 1, U) + blank(T - 1, U);
  return lat;
}

/// -log P(y | x) for one utterance; accumulates the gradient when `grads`
/// is non-null.
inline double rnnt_loss(const ParamStore& params, const RnntConfig& cfg, const FeatureSequence& x,
                        const TokenSequence& y, ParamStore* grads = nullptr) {
  validate_tokens(y, cfg.vocab_size);
  const RnntEncoderCache enc = rnnt_encode_cached(params, cfg, x);
  const RnntPredCache pred = rnnt_predict_cached(params, cfg, y);
  const Eigen::Index T = x.num_frames();
  const Eigen::Index U = static_cast<Eigen::Index>(y.size());
  const Eigen::Index N = T * (U + 1);
  const int blank_id = cfg.vocab_size;

  Matrix F = params.get(rnnt_names::kWe) * enc.output();
  F.colwise() += params.vec(rnnt_names::kBe);
  Matrix G = params.get(rnnt_names::kWp) * pred.output();
  G.colwise() += params.vec(rnnt_names::kBp);

  // Column t * (U + 1) + u holds node (t, u).
  Matrix A(cfg.joint_dim, N);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index u = 0; u <= U; ++u) A.col(t * (U + 1) + u) = (F.col(t) + G.col(u)).array().tanh();
  Matrix Z = params.get(rnnt_names::kWj) * A;
  Z.colwise() += params.vec(rnnt_names::kBj);
  Matrix LP(Z.rows(), N);
  for (Eigen::Index n = 0; n < N; ++n) LP.col(n) = log_softmax_values(Z.col(n));

  Matrix blank(T, U + 1);
  Matrix label(T, U);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index u = 0; u <= U; ++u) {
      blank(t, u) = LP(blank_id, t * (U + 1) + u);
      if (u < U) label(t, u) = LP(y[static_cast<std::size_t>(u)], t * (U + 1) + u);
    }
  const AlignmentLattice lat = rnnt_lattice(blank, label);
  const double loss = -lat.log_likelihood;
  if (!grads) return loss;

  // Arc occupancies give dLoss/dlogprob; then back through the softmax.
  Matrix dZ = Matrix::Zero(Z.rows(), N);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index u = 0; u <= U; ++u) {
      const Eigen::Index n = t * (U + 1) + u;
      const double next_blank = (t + 1 < T) ? lat.log_beta(t + 1, u) : (u == U ? 0.0 : kLogZero);
      const double gb = -std::exp(lat.log_alpha(t, u) + blank(t, u) + next_blank - lat.log_likelihood);
      double gl = 0.0;
      if (u < U) gl = -std::exp(lat.log_alpha(t, u) + label(t, u) + lat.log_beta(t, u + 1) - lat.log_likelihood);
      const double total = gb + gl;
      dZ.col(n) = -LP.col(n).array().exp() * total;
      dZ(blank_id, n) += gb;
      if (u < U) dZ(y[static_cast<std::size_t>(u)], n) += gl;
    }
  grads->mut(rnnt_names::kWj).noalias() += dZ * A.transpose();
  grads->vec_mut(rnnt_names::kBj) += dZ.rowwise().sum();
  Matrix dPre = (params.get(rnnt_names::kWj).transpose() * dZ).cwiseProduct((1.0 - A.array().square()).matrix());
  Matrix dF = Matrix::Zero(cfg.joint_dim, T);
  Matrix dG = Matrix::Zero(cfg.joint_dim, U + 1);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index u = 0; u <= U; ++u) {
      dF.col(t) += dPre.col(t * (U + 1) + u);
      dG.col(u) += dPre.col(t * (U + 1) + u);
    }
  grads->mut(rnnt_names::kWe).noalias() += dF * enc.output().transpose();
  grads->vec_mut(rnnt_names::kBe) += dF.rowwise().sum();
  grads->mut(rnnt_names::kWp).noalias() += dG * pred.output().transpose();
  grads->vec_mut(rnnt_names::kBp) += dG.rowwise().sum();
  rnnt_encode_backward(params, cfg, enc, params.get(rnnt_names::kWe).transpose() * dF, *grads);
  rnnt_predict_backward(params, cfg, pred, y, params.get(rnnt_names::kWp).transpose() * dG, *grads);
  return loss;
}

/// -sum_u log P_ILM(y_u | y_<u) over u = 1..U, using the prediction and
/// joint networks only. Encoder parameters receive no gradient.
inline double rnnt_ilm_loss(const ParamStore& params, const RnntConfig& cfg, const TokenSequence& y,
                            ParamStore* grads = nullptr) {
  validate_tokens(y, cfg.vocab_size);
  const auto U = static_cast<Eigen::Index>(y.size());
  if (U == 0) return 0.0;
  const std::vector<int> history(y.begin(), y.end() - 1);
  const RnntPredCache pred = rnnt_predict_cached(params, cfg, history);
  Matrix A = params.get(rnnt_names::kWp) * pred.output();
  A.colwise() += params.vec(rnnt_names::kBp);
  A = A.array().tanh();
  Matrix Z = params.get(rnnt_names::kWj) * A;
  Z.colwise() += params.vec(rnnt_names::kBj);
  double loss = 0.0;
  Matrix dZ = Matrix::Zero(Z.rows(), U);
  for (Eigen::Index u = 0; u < U; ++u) {
    const Vector lp = log_softmax_values(Z.col(u).head(cfg.vocab_size));
    const int target = y[static_cast<std::size_t>(u)];
    loss -= lp[target];
    if (grads) {
      dZ.col(u).head(cfg.vocab_size) = lp.array().exp();
      dZ(target, u) -= 1.0;
    }
  }
  if (!grads) return loss;
  grads->mut(rnnt_names::kWj).noalias() += dZ * A.transpose();
  grads->vec_mut(rnnt_names::kBj) += dZ.rowwise().sum();
  Matrix dG = (params.get(rnnt_names::kWj).transpose() * dZ).cwiseProduct((1.0 - A.array().square()).matrix());
  grads->mut(rnnt_names::kWp).noalias() += dG * pred.output().transpose();
  grads->vec_mut(rnnt_names::kBp) += dG.rowwise().sum();
  rnnt_predict_backward(params, cfg, pred, history, params.get(rnnt_names::kWp).transpose() * dG, *grads);
  return loss;
}

/// Teacher-forced cross-entropy -sum_{u=1}^{U+1} log P(y_u | x, y_<u), with
/// y_{U+1} = <eos>.
inline double aed_loss(const ParamStore& params, const AedConfig& cfg, const FeatureSequence& x,
                       const TokenSequence& y, ParamStore* grads = nullptr) {
  validate_tokens(y, cfg.vocab_size);
  const AedEncoderCache enc_cache = aed_encode_cached(params, cfg, x);
  const AedEncoded enc = aed_prepare(params, enc_cache.outputs.back());
  const Matrix& E = params.get(aed_names::kEmbedding);
  const std::size_t U = y.size();
  const auto L = static_cast<std::size_t>(cfg.decoder_layers);
  const Eigen::Index T = x.num_frames();

  RecurrentState dec = zero_state(L, cfg.decoder_dim);
  const AttentionCache att0 = attend(params, enc, aed_initial_alignment(T), dec.back().h);
  std::vector<std::vector<LstmStepCache>> steps(U + 1);
  std::vector<AttentionCache> atts;
  std::vector<Vector> log_probs(U + 1);
  std::vector<int> prev(U + 1);
  std::vector<int> target(U + 1);
  Vector a = att0.a;
  Vector c = att0.c;
  double loss = 0.0;
  for (std::size_t u = 0; u <= U; ++u) {
    prev[u] = u == 0 ? cfg.vocab_size : y[u - 1];
    target[u] = u == U ? cfg.vocab_size : y[u];
    Vector in = E.col(prev[u]) + c;
    for (std::size_t l = 0; l < L; ++l) {
      steps[u].push_back(lstm_step(LstmWeights(params, aed_names::dec(static_cast<int>(l))), in, dec[l]));
      dec[l] = {steps[u].back().h, steps[u].back().c};
      in = steps[u].back().h;
    }
    log_probs[u] = log_softmax_values(aed_output_logits(params, in));
    loss -= log_probs[u][target[u]];
    if (u < U) {
      atts.push_back(attend(params, enc, a, in));
      a = atts.back().a;
      c = atts.back().c;
    }
  }
  if (!grads) return loss;

  Matrix dH = Matrix::Zero(enc.H.rows(), T);
  Matrix dproj = Matrix::Zero(enc.projected.rows(), T);
  Vector dc_next = Vector::Zero(enc.H.rows());
  Vector da_next = Vector::Zero(T);
  std::vector<Vector> dh_rec(L, Vector::Zero(cfg.decoder_dim));
  std::vector<Vector> dc_rec(L, Vector::Zero(cfg.decoder_dim));
  const Matrix& Wd = params.get(aed_names::kWd);
  for (std::size_t u = U + 1; u-- > 0;) {
    Vector dh_top = Vector::Zero(cfg.decoder_dim);
    Vector da_prev = Vector::Zero(T);
    if (u < U) {
      AttentionGrad g = attend_backward(params, enc, atts[u], dc_next, da_next, dH, dproj, *grads);
      dh_top += g.dh_dec;
      da_prev = std::move(g.da_prev);
    }
    Vector dz = log_probs[u].array().exp();
    dz[target[u]] -= 1.0;
    grads->mut(aed_names::kWd).noalias() += dz * steps[u][L - 1].h.transpose();
    grads->vec_mut(aed_names::kBd) += dz;
    dh_top.noalias() += Wd.transpose() * dz;
    Vector dx = dh_top;
    for (std::size_t l = L; l-- > 0;) {
      Vector dh = dx + dh_rec[l];
      LstmStepGrad sg = lstm_step_backward(LstmWeights(params, aed_names::dec(static_cast<int>(l))), steps[u][l], dh,
                                           dc_rec[l], *grads, aed_names::dec(static_cast<int>(l)));
      dh_rec[l] = std::move(sg.dh_prev);
      dc_rec[l] = std::move(sg.dc_prev);
      dx = std::move(sg.dx);
    }
    grads->mut(aed_names::kEmbedding).col(prev[u]) += dx;
    dc_next = dx;
    da_next = da_prev;
  }
  // a_init and the zero initial decoder state are constants.
  attend_backward(params, enc, att0, dc_next, da_next, dH, dproj, *grads);
  attend_flush(params, enc, dproj, dH, *grads);
  aed_encode_backward(params, cfg, enc_cache, dH, *grads);
  return loss;
}

/// -sum_{u=1}^{U+1} log P_ILM(y_u | y_<u) with the context vector zeroed;
/// only decoder parameters (embedding, LSTM, output layer) get gradient.
inline double aed_ilm_loss(const ParamStore& params, const AedConfig& cfg, const TokenSequence& y,
                           ParamStore* grads = nullptr) {
  validate_tokens(y, cfg.vocab_size);
  const Matrix& E = params.get(aed_names::kEmbedding);
  const auto U = static_cast<Eigen::Index>(y.size());
  Matrix X(E.rows(), U + 1);
  X.col(0) = E.col(cfg.vocab_size);
  for (Eigen::Index u = 0; u < U; ++u) X.col(u + 1) = E.col(y[static_cast<std::size_t>(u)]);
  std::vector<LstmSeqCache> layers;
  const Matrix* in = &X;
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    layers.push_back(lstm_forward(LstmWeights(params, aed_names::dec(l)), *in));
    in = &layers.back().H;
  }
  const Matrix& Hd = layers.back().H;
  Matrix Z = params.get(aed_names::kWd) * Hd;
  Z.colwise() += params.vec(aed_names::kBd);
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
  grads->mut(aed_names::kWd).noalias() += dZ * Hd.transpose();
  grads->vec_mut(aed_names::kBd) += dZ.rowwise().sum();
  Matrix dX = params.get(aed_names::kWd).transpose() * dZ;
  for (int l = cfg.decoder_layers - 1; l >= 0; --l)
    dX = lstm_backward(LstmWeights(params, aed_names::dec(l)), layers[static_cast<std::size_t>(l)], dX, *grads,
                       aed_names::dec(l));
  auto dE = grads->mut(aed_names::kEmbedding);
  dE.col(cfg.vocab_size) += dX.col(0);
  for (Eigen::Index u = 0; u < U; ++u) dE.col(y[static_cast<std::size_t>(u)]) += dX.col(u + 1);
  return loss;
}

inline double e2e_loss(const E2EConfig& cfg, const ParamStore& params, const FeatureSequence& x,
                       const TokenSequence& y, ParamStore* grads = nullptr) {
  return cfg.family == Family::Rnnt ? rnnt_loss(params, cfg.rnnt, x, y, grads) : aed_loss(params, cfg.aed, x, y, grads);
}

inline double ilm_loss(const E2EConfig& cfg, const ParamStore& params, const TokenSequence& y,
                       ParamStore* grads = nullptr) {
  return cfg.family == Family::Rnnt ? rnnt_ilm_loss(params, cfg.rnnt, y, grads)
                                    : aed_ilm_loss(params, cfg.aed, y, grads);
}

/// Internal-LM token count per sequence: U for RNN-T, U + 1 (with <eos>) for AED.
inline std::size_t ilm_token_count(Family family, const TokenSequence& y) {
  return family == Family::Rnnt ? y.size() : y.size() + 1;
}

struct LossReport {
  double total = 0.0;
  double e2e_part = 0.0;
  double ilm_part = 0.0;
  double alpha = 0.0;
};

/// E2E loss + alpha * ILM loss. With alpha == 0 the gradient equals the
/// plain E2E gradient bit for bit.
inline LossReport ilmt_loss(const E2EConfig& cfg, const ParamStore& params, const FeatureSequence& x,
                            const TokenSequence& y, double alpha, ParamStore* grads = nullptr) {
  if (!(alpha >= 0.0)) throw ConfigError("ILMT weight alpha must be non-negative");
  LossReport r;
  r.alpha = alpha;
  r.e2e_part = e2e_loss(cfg, params, x, y, grads);
  if (grads && alpha != 0.0) {
    ParamStore ilm_grads = params.zeros_like();
    r.ilm_part = ilm_loss(cfg, params, y, &ilm_grads);
    grads->axpy(alpha, ilm_grads);
  } else {
    r.ilm_part = ilm_loss(cfg, params, y, nullptr);
  }
  r.total = r.e2e_part + alpha * r.ilm_part;
  return r;
}

}  // namespace ilmt
