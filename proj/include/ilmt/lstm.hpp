#pragma once

#include <string>
#include <vector>

#include "ilmt/param_store.hpp"

namespace ilmt {

// Gate layout in the stacked pre-activation vector: [input, forget, cell, output].

struct LstmState {
  Vector h;
  Vector c;
};

/// One state per layer of a stacked LSTM.
using RecurrentState = std::vector<LstmState>;

inline void add_lstm_params(ParamStore& store, const std::string& prefix, Eigen::Index input_dim,
                            Eigen::Index hidden) {
  store.add(prefix + ".Wx", 4 * hidden, input_dim);
  store.add(prefix + ".Wh", 4 * hidden, hidden);
  store.add(prefix + ".b", 4 * hidden, 1);
}

struct LstmWeights {
  const Matrix& Wx;
  const Matrix& Wh;
  Eigen::Map<const Vector> b;

  LstmWeights(const ParamStore& p, const std::string& prefix)
      : Wx(p.get(prefix + ".Wx")), Wh(p.get(prefix + ".Wh")), b(p.vec(prefix + ".b")) {}

  [[nodiscard]] Eigen::Index hidden() const { return Wh.cols(); }
  [[nodiscard]] Eigen::Index input_dim() const { return Wx.cols(); }
};

namespace detail {

inline void activate_gates(Eigen::Ref<Vector> pre, Eigen::Index H) {
  for (Eigen::Index k = 0; k < H; ++k) {
    pre[k] = sigmoid(pre[k]);
    pre[H + k] = sigmoid(pre[H + k]);
    pre[2 * H + k] = std::tanh(pre[2 * H + k]);
    pre[3 * H + k] = sigmoid(pre[3 * H + k]);
  }
}

// Pre-activation gradient from dh/dc at one step; updates dc in place to the
// gradient flowing into c_prev.
inline Vector gate_backward(const Eigen::Ref<const Vector>& gates, const Eigen::Ref<const Vector>& c,
                            const Eigen::Ref<const Vector>& c_prev, const Eigen::Ref<const Vector>& dh,
                            Vector& dc) {
  const Eigen::Index H = c.size();
  const auto i = gates.segment(0, H).array();
  const auto f = gates.segment(H, H).array();
  const auto g = gates.segment(2 * H, H).array();
  const auto o = gates.segment(3 * H, H).array();
  const Eigen::ArrayXd tc = c.array().tanh();
  Eigen::ArrayXd dcell = dh.array() * o * (1.0 - tc.square()) + dc.array();
  Vector dpre(4 * H);
  dpre.segment(0, H) = (dcell * g * i * (1.0 - i)).matrix();
  dpre.segment(H, H) = (dcell * c_prev.array() * f * (1.0 - f)).matrix();
  dpre.segment(2 * H, H) = (dcell * i * (1.0 - g.square())).matrix();
  dpre.segment(3 * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix();
  dc = (dcell * f).matrix();
  return dpre;
}

}  // namespace detail

struct LstmStepCache {
  Vector x;
  Vector h_prev;
  Vector c_prev;
  Vector gates;
  Vector c;
  Vector h;
};

inline LstmStepCache lstm_step(const LstmWeights& w, const Eigen::Ref<const Vector>& x, const LstmState& prev) {
  require(x.size() == w.input_dim(), "lstm_step: input dimension mismatch");
  const Eigen::Index H = w.hidden();
  LstmStepCache s;
  s.x = x;
  s.h_prev = prev.h;
  s.c_prev = prev.c;
  s.gates = w.Wx * x + w.Wh * prev.h + w.b;
  detail::activate_gates(s.gates, H);
  s.c = s.gates.segment(H, H).cwiseProduct(prev.c) + s.gates.segment(0, H).cwiseProduct(s.gates.segment(2 * H, H));
  s.h = s.gates.segment(3 * H, H).cwiseProduct(s.c.array().tanh().matrix());
  return s;
}

// Cheaper forward-only step used at inference.
inline LstmState lstm_advance(const LstmWeights& w, const Eigen::Ref<const Vector>& x, const LstmState& prev) {
  const Eigen::Index H = w.hidden();
  Vector gates = w.Wx * x + w.Wh * prev.h + w.b;
  detail::activate_gates(gates, H);
  LstmState next;
  next.c = gates.segment(H, H).cwiseProduct(prev.c) + gates.segment(0, H).cwiseProduct(gates.segment(2 * H, H));
  next.h = gates.segment(3 * H, H).cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

struct LstmStepGrad {
  Vector dx;
  Vector dh_prev;
  Vector dc_prev;
};

/// Backward through one step. `dc` is the gradient arriving at the cell state.
inline LstmStepGrad lstm_step_backward(const LstmWeights& w, const LstmStepCache& s,
                                       const Eigen::Ref<const Vector>& dh, const Eigen::Ref<const Vector>& dc,
                                       ParamStore& grads, const std::string& prefix) {
  Vector dcell = dc;
  Vector dpre = detail::gate_backward(s.gates, s.c, s.c_prev, dh, dcell);
  grads.mut(prefix + ".Wx").noalias() += dpre * s.x.transpose();
  grads.mut(prefix + ".Wh").noalias() += dpre * s.h_prev.transpose();
  grads.vec_mut(prefix + ".b") += dpre;
  return {w.Wx.transpose() * dpre, w.Wh.transpose() * dpre, std::move(dcell)};
}

/// Cached forward over a whole sequence (columns of X are time steps).
struct LstmSeqCache {
  Matrix X;
  Matrix gates;  // 4H x T, activated
  Matrix C;      // H x T
  Matrix H;      // H x T
};

inline LstmSeqCache lstm_forward(const LstmWeights& w, const Eigen::Ref<const Matrix>& X) {
  require(X.rows() == w.input_dim(), "lstm_forward: input dimension mismatch");
  const Eigen::Index Hd = w.hidden();
  const Eigen::Index T = X.cols();
  LstmSeqCache cache;
  cache.X = X;
  cache.gates.noalias() = w.Wx * X;
  cache.gates.colwise() += w.b;
  cache.C.resize(Hd, T);
  cache.H.resize(Hd, T);
  Vector h = Vector::Zero(Hd);
  Vector c = Vector::Zero(Hd);
  for (Eigen::Index t = 0; t < T; ++t) {
    auto gt = cache.gates.col(t);
    gt.noalias() += w.Wh * h;
    detail::activate_gates(gt, Hd);
    c = gt.segment(Hd, Hd).cwiseProduct(c) + gt.segment(0, Hd).cwiseProduct(gt.segment(2 * Hd, Hd));
    h = gt.segment(3 * Hd, Hd).cwiseProduct(c.array().tanh().matrix());
    cache.C.col(t) = c;
    cache.H.col(t) = h;
  }
  return cache;
}

/// Backward through a zero-initialised sequence; returns dX.
inline Matrix lstm_backward(const LstmWeights& w, const LstmSeqCache& cache, const Eigen::Ref<const Matrix>& dH,
                            ParamStore& grads, const std::string& prefix) {
  const Eigen::Index Hd = w.hidden();
  const Eigen::Index T = cache.X.cols();
  Matrix dpre(4 * Hd, T);
  Vector dh_next = Vector::Zero(Hd);
  Vector dc = Vector::Zero(Hd);
  const Vector zero = Vector::Zero(Hd);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    Vector dh = dH.col(t) + dh_next;
    if (t > 0) {
      dpre.col(t) = detail::gate_backward(cache.gates.col(t), cache.C.col(t), cache.C.col(t - 1), dh, dc);
    } else {
      dpre.col(t) = detail::gate_backward(cache.gates.col(t), cache.C.col(t), zero, dh, dc);
    }
    dh_next.noalias() = w.Wh.transpose() * dpre.col(t);
  }
  grads.mut(prefix + ".Wx").noalias() += dpre * cache.X.transpose();
  if (T > 1) grads.mut(prefix + ".Wh").noalias() += dpre.rightCols(T - 1) * cache.H.leftCols(T - 1).transpose();
  grads.vec_mut(prefix + ".b") += dpre.rowwise().sum();
  return w.Wx.transpose() * dpre;
}

inline RecurrentState zero_state(std::size_t layers, Eigen::Index hidden) {
  return RecurrentState(layers, LstmState{Vector::Zero(hidden), Vector::Zero(hidden)});
}

}  // namespace ilmt
