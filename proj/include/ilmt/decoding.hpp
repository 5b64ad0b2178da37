#pragma once

#include <algorithm>
#include <cassert>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ilmt/e2e.hpp"
#include "ilmt/scorer.hpp"
#include "ilmt/wer.hpp"

namespace ilmt {

enum class FusionMethod { None, ShallowFusion, DensityRatio, Ilme };

inline std::string to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::None: return "none";
    case FusionMethod::ShallowFusion: return "shallow_fusion";
    case FusionMethod::DensityRatio: return "density_ratio";
    case FusionMethod::Ilme: return "ilme";
  }
  return "?";
}

inline FusionMethod fusion_method_from_string(const std::string& s) {
  if (s == "none") return FusionMethod::None;
  if (s == "shallow_fusion") return FusionMethod::ShallowFusion;
  if (s == "density_ratio") return FusionMethod::DensityRatio;
  if (s == "ilme") return FusionMethod::Ilme;
  throw ConfigError("unknown fusion method '" + s + "'");
}

struct FusionConfig {
  FusionMethod method = FusionMethod::None;
  double lambda_ext = 0.0;  // external LM weight
  double lambda_ilm = 0.0;  // internal / source LM subtraction weight
  int beam_size = 25;

  /// Weights actually applied: none ignores both, shallow fusion ignores the
  /// subtraction weight.
  [[nodiscard]] double ext_weight() const { return method == FusionMethod::None ? 0.0 : lambda_ext; }
  [[nodiscard]] double sub_weight() const {
    return (method == FusionMethod::DensityRatio || method == FusionMethod::Ilme) ? lambda_ilm : 0.0;
  }
  [[nodiscard]] bool uses_external() const { return method != FusionMethod::None; }
  [[nodiscard]] bool uses_subtraction() const {
    return method == FusionMethod::DensityRatio || method == FusionMethod::Ilme;
  }
};

/// LMs available to the search. The internal LM for ILME is taken from the
/// E2E model itself.
struct FusionScorers {
  const TokenScorer* external = nullptr;
  const TokenScorer* source = nullptr;  // density ratio only
};

struct DecodeOptions {
  int max_symbols_per_frame = 2;  // RNN-T: label emissions allowed per frame
  int max_output_length = 0;      // AED: 0 means the number of frames
};

/// A scored label sequence. score_ilm holds the subtracted LM score (the
/// model's internal LM under ILME, the source LM under density ratio).
struct Hypothesis {
  TokenSequence prefix;
  double score_total = 0.0;
  double score_e2e = 0.0;
  double score_ext_lm = 0.0;
  double score_ilm = 0.0;
};

inline double fused_total(const FusionConfig& f, double e2e, double ext, double ilm) {
  return e2e + f.ext_weight() * ext - f.sub_weight() * ilm;
}

/// Per-output fused log-scores for one expansion. RNN-T: the last entry is
/// blank and carries the E2E score only. AED: the last entry is <eos> and is
/// fused like any token. `ext`/`sub` may be empty when unused; for RNN-T
/// only their first vocab_size entries are read.
inline Vector fused_step_scores(Family family, const Eigen::Ref<const Vector>& e2e, const Vector& ext,
                                const Vector& sub, const FusionConfig& f) {
  const Eigen::Index V = e2e.size() - 1;
  Vector out = e2e;
  const Eigen::Index n = family == Family::Rnnt ? V : V + 1;
  if (f.uses_external() && ext.size() > 0) out.head(n) += f.ext_weight() * ext.head(n);
  if (f.uses_subtraction() && sub.size() > 0) out.head(n) -= f.sub_weight() * sub.head(n);
  return out;
}

namespace detail {

// Beam order: higher total first, then lexicographically smaller prefix,
// then hypotheses that already ended.
inline bool beam_before(double ta, const TokenSequence& pa, bool fa, double tb, const TokenSequence& pb, bool fb) {
  if (ta != tb) return ta > tb;
  if (pa != pb) return pa < pb;
  return fa && !fb;
}

inline void validate_fusion(const FusionConfig& f, const FusionScorers& lms, int vocab) {
  if (f.beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (f.lambda_ext < 0 || f.lambda_ilm < 0) throw ConfigError("fusion weights must be non-negative");
  if (f.uses_external() && !lms.external) throw ConfigError(to_string(f.method) + " requires an external LM");
  if (f.method == FusionMethod::DensityRatio && !lms.source) throw ConfigError("density_ratio requires a source LM");
  if (f.uses_external() && lms.external->vocab_size() != vocab)
    throw ConfigError("vocabulary mismatch between E2E model and external LM");
  if (f.method == FusionMethod::DensityRatio && lms.source->vocab_size() != vocab)
    throw ConfigError("vocabulary mismatch between E2E model and source LM");
}

struct LmTrack {
  RecurrentState state;
  Vector next;  // next-token log-probs
};

inline LmTrack lm_start(const TokenScorer* s) {
  if (!s) return {};
  LmTrack t{s->start(), {}};
  t.next = s->log_probs(t.state).values;
  return t;
}

inline LmTrack lm_extend(const TokenScorer* s, const LmTrack& parent, int token) {
  if (!s) return {};
  LmTrack t{s->advance(parent.state, token), {}};
  t.next = s->log_probs(t.state).values;
  return t;
}

struct Candidate {
  int parent;
  int token;  // -1 = blank (RNN-T) ; vocab_size = <eos> (AED)
  TokenSequence prefix;
  double e2e, ext, sub, total;
};

}  // namespace detail

struct DecodeResult {
  std::vector<Hypothesis> hypotheses;  // best first

  [[nodiscard]] const Hypothesis& best() const { return hypotheses.front(); }
};

/// Frame-synchronous RNN-T beam search. Within a frame each active
/// hypothesis either ends the frame with a blank or emits a label (up to
/// max_symbols_per_frame); ended hypotheses with equal label sequences are
/// merged by adding their E2E probabilities.
inline DecodeResult rnnt_beam_search(const ParamStore& params, const RnntConfig& cfg, const FeatureSequence& x,
                                     const FusionConfig& fusion, const FusionScorers& lms,
                                     const DecodeOptions& opts = {}) {
  detail::validate_fusion(fusion, lms, cfg.vocab_size);
  require(opts.max_symbols_per_frame >= 0, "max_symbols_per_frame must be non-negative");
  const int V = cfg.vocab_size;
  const Matrix H = rnnt_encode(params, cfg, x);
  Matrix F = params.get(rnnt_names::kWe) * H;
  F.colwise() += params.vec(rnnt_names::kBe);

  const TokenScorer* ext_lm = fusion.uses_external() ? lms.external : nullptr;
  const bool ilme = fusion.method == FusionMethod::Ilme;
  const TokenScorer* src_lm = fusion.method == FusionMethod::DensityRatio ? lms.source : nullptr;

  struct Hyp {
    Hypothesis h;
    RecurrentState pred;
    Vector language;
    detail::LmTrack ext, src;
    Vector ilm_next;
    bool ended = false;
  };
  auto finish_state = [&](Hyp& hy) {
    hy.language = params.get(rnnt_names::kWp) * hy.pred.back().h + params.vec(rnnt_names::kBp);
    if (ilme) hy.ilm_next = rnnt_ilm_step(params, hy.pred.back().h).values;
  };
  auto sub_next = [&](const Hyp& hy) -> const Vector& { return ilme ? hy.ilm_next : hy.src.next; };

  std::vector<Hyp> beam(1);
  beam[0].pred = rnnt_pred_start(params, cfg);
  beam[0].ext = detail::lm_start(ext_lm);
  beam[0].src = detail::lm_start(src_lm);
  finish_state(beam[0]);
  beam[0].h.score_total = fused_total(fusion, 0.0, 0.0, 0.0);

  for (Eigen::Index t = 0; t < H.cols(); ++t) {
    std::vector<Hyp> pool = std::move(beam);
    for (auto& hy : pool) hy.ended = false;
    for (int level = 0; level <= opts.max_symbols_per_frame; ++level) {
      const bool can_emit = level < opts.max_symbols_per_frame;
      std::vector<Hyp> next;
      std::map<TokenSequence, std::size_t> ended_at;
      for (auto& hy : pool) {
        if (!hy.ended) continue;
        ended_at[hy.h.prefix] = next.size();
        next.push_back(std::move(hy));
      }
      std::vector<detail::Candidate> cands;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const Hyp& hy = pool[i];
        if (hy.ended) continue;
        const Vector lp = log_softmax_values(rnnt_joint_logits(params, F.col(t), hy.language));
        // Blank: ends the frame, merges with an equal ended prefix.
        {
          const double e2e = hy.h.score_e2e + lp[V];
          auto it = ended_at.find(hy.h.prefix);
          if (it != ended_at.end()) {
            Hypothesis& m = next[it->second].h;
            m.score_e2e = log_add(m.score_e2e, e2e);
            m.score_total = fused_total(fusion, m.score_e2e, m.score_ext_lm, m.score_ilm);
          } else {
            Hyp copy = hy;
            copy.h.score_e2e = e2e;
            copy.h.score_total = fused_total(fusion, e2e, copy.h.score_ext_lm, copy.h.score_ilm);
            copy.ended = true;
            ended_at[copy.h.prefix] = next.size();
            next.push_back(std::move(copy));
          }
        }
        if (!can_emit) continue;
        for (int v = 0; v < V; ++v) {
          detail::Candidate c;
          c.parent = static_cast<int>(i);
          c.token = v;
          c.prefix = hy.h.prefix;
          c.prefix.push_back(v);
          c.e2e = hy.h.score_e2e + lp[v];
          c.ext = hy.h.score_ext_lm + (ext_lm ? hy.ext.next[v] : 0.0);
          c.sub = hy.h.score_ilm + ((ilme || src_lm) ? sub_next(hy)[v] : 0.0);
          c.total = fused_total(fusion, c.e2e, c.ext, c.sub);
          cands.push_back(std::move(c));
        }
      }
      // Joint pruning of ended hypotheses and label candidates.
      struct Ref {
        bool ended;
        std::size_t index;
      };
      std::vector<Ref> order;
      for (std::size_t i = 0; i < next.size(); ++i) order.push_back({true, i});
      for (std::size_t i = 0; i < cands.size(); ++i) order.push_back({false, i});
      auto key_total = [&](const Ref& r) { return r.ended ? next[r.index].h.score_total : cands[r.index].total; };
      auto key_prefix = [&](const Ref& r) -> const TokenSequence& {
        return r.ended ? next[r.index].h.prefix : cands[r.index].prefix;
      };
      const std::size_t keep = std::min(order.size(), static_cast<std::size_t>(fusion.beam_size));
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                        [&](const Ref& a, const Ref& b) {
                          return detail::beam_before(key_total(a), key_prefix(a), a.ended, key_total(b),
                                                     key_prefix(b), b.ended);
                        });
      order.resize(keep);
      std::vector<Hyp> survivors;
      bool any_active = false;
      for (const Ref& r : order) {
        if (r.ended) {
          survivors.push_back(std::move(next[r.index]));
          continue;
        }
        const detail::Candidate& c = cands[r.index];
        const Hyp& parent = pool[static_cast<std::size_t>(c.parent)];
        Hyp child;
        child.h = {c.prefix, c.total, c.e2e, c.ext, c.sub};
        child.pred = rnnt_pred_advance(params, cfg, parent.pred, c.token);
        child.ext = detail::lm_extend(ext_lm, parent.ext, c.token);
        child.src = detail::lm_extend(src_lm, parent.src, c.token);
        finish_state(child);
        survivors.push_back(std::move(child));
        any_active = true;
      }
      pool = std::move(survivors);
      if (!any_active) break;
    }
    beam = std::move(pool);
  }

  std::sort(beam.begin(), beam.end(), [](const Hyp& a, const Hyp& b) {
    return detail::beam_before(a.h.score_total, a.h.prefix, true, b.h.score_total, b.h.prefix, true);
  });
  DecodeResult out;
  for (auto& hy : beam) {
    assert(hy.h.score_total == fused_total(fusion, hy.h.score_e2e, hy.h.score_ext_lm, hy.h.score_ilm));
    out.hypotheses.push_back(std::move(hy.h));
  }
  return out;
}

/// Label-synchronous AED beam search. Hypotheses that select <eos> move to
/// a completed pool; scores are compared without length normalization.
inline DecodeResult aed_beam_search(const ParamStore& params, const AedConfig& cfg, const FeatureSequence& x,
                                    const FusionConfig& fusion, const FusionScorers& lms,
                                    const DecodeOptions& opts = {}) {
  detail::validate_fusion(fusion, lms, cfg.vocab_size);
  const int V = cfg.vocab_size;
  const AedEncoded enc = aed_encode(params, cfg, x);
  const int max_len = opts.max_output_length > 0 ? opts.max_output_length : static_cast<int>(x.num_frames());

  const TokenScorer* ext_lm = fusion.uses_external() ? lms.external : nullptr;
  std::unique_ptr<TokenScorer> ilm;
  const TokenScorer* sub_lm = nullptr;
  if (fusion.method == FusionMethod::Ilme) {
    ilm = std::make_unique<AedIlmScorer>(params, cfg);
    sub_lm = ilm.get();
  } else if (fusion.method == FusionMethod::DensityRatio) {
    sub_lm = lms.source;
  }

  struct Hyp {
    Hypothesis h;
    AedStates state;
    Vector next;  // E2E next-token log-probs
    detail::LmTrack ext, sub;
  };
  std::vector<Hyp> active(1);
  {
    AedStepResult r = aed_decode_step(params, cfg, enc, aed_initial_state(params, cfg, enc), V);
    active[0].state = std::move(r.state);
    active[0].next = std::move(r.log_probs.values);
    active[0].ext = detail::lm_start(ext_lm);
    active[0].sub = detail::lm_start(sub_lm);
    active[0].h.score_total = fused_total(fusion, 0.0, 0.0, 0.0);
  }
  std::vector<Hypothesis> completed;
  for (int step = 0; step <= max_len && !active.empty(); ++step) {
    std::vector<detail::Candidate> cands;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Hyp& hy = active[i];
      for (int k = (step == max_len ? V : 0); k <= V; ++k) {
        detail::Candidate c;
        c.parent = static_cast<int>(i);
        c.token = k;
        c.prefix = hy.h.prefix;
        c.prefix.push_back(k);
        c.e2e = hy.h.score_e2e + hy.next[k];
        c.ext = hy.h.score_ext_lm + (ext_lm ? hy.ext.next[k] : 0.0);
        c.sub = hy.h.score_ilm + (sub_lm ? hy.sub.next[k] : 0.0);
        c.total = fused_total(fusion, c.e2e, c.ext, c.sub);
        cands.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(cands.size(), static_cast<std::size_t>(fusion.beam_size));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const detail::Candidate& a, const detail::Candidate& b) {
                        return detail::beam_before(a.total, a.prefix, false, b.total, b.prefix, false);
                      });
    cands.resize(keep);
    std::vector<Hyp> next;
    for (auto& c : cands) {
      if (c.token == V) {
        c.prefix.pop_back();
        completed.push_back({std::move(c.prefix), c.total, c.e2e, c.ext, c.sub});
        continue;
      }
      const Hyp& parent = active[static_cast<std::size_t>(c.parent)];
      Hyp child;
      child.h = {c.prefix, c.total, c.e2e, c.ext, c.sub};
      AedStepResult r = aed_decode_step(params, cfg, enc, parent.state, c.token);
      child.state = std::move(r.state);
      child.next = std::move(r.log_probs.values);
      child.ext = detail::lm_extend(ext_lm, parent.ext, c.token);
      child.sub = detail::lm_extend(sub_lm, parent.sub, c.token);
      next.push_back(std::move(child));
    }
    active = std::move(next);
  }
  std::sort(completed.begin(), completed.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return detail::beam_before(a.score_total, a.prefix, true, b.score_total, b.prefix, true);
  });
  return {std::move(completed)};
}

inline DecodeResult beam_search(const E2EConfig& cfg, const ParamStore& params, const FeatureSequence& x,
                                const FusionConfig& fusion, const FusionScorers& lms,
                                const DecodeOptions& opts = {}) {
  if (cfg.family == Family::Rnnt) return rnnt_beam_search(params, cfg.rnnt, x, fusion, lms, opts);
  return aed_beam_search(params, cfg.aed, x, fusion, lms, opts);
}

/// Argmax chain without a beam (E2E scores only).
inline TokenSequence greedy_decode(const E2EConfig& cfg, const ParamStore& params, const FeatureSequence& x,
                                   const DecodeOptions& opts = {}) {
  TokenSequence out;
  const int V = cfg.vocab_size();
  if (cfg.family == Family::Rnnt) {
    const Matrix H = rnnt_encode(params, cfg.rnnt, x);
    Matrix F = params.get(rnnt_names::kWe) * H;
    F.colwise() += params.vec(rnnt_names::kBe);
    RecurrentState pred = rnnt_pred_start(params, cfg.rnnt);
    Vector g = params.get(rnnt_names::kWp) * pred.back().h + params.vec(rnnt_names::kBp);
    for (Eigen::Index t = 0; t < H.cols(); ++t) {
      for (int emitted = 0; emitted < opts.max_symbols_per_frame; ++emitted) {
        const Vector lp = log_softmax_values(rnnt_joint_logits(params, F.col(t), g));
        // Ties resolve to blank, then the smallest token id.
        Eigen::Index best = V;
        for (Eigen::Index k = 0; k < V; ++k)
          if (lp[k] > lp[best]) best = k;
        if (best == V) break;
        out.push_back(static_cast<int>(best));
        pred = rnnt_pred_advance(params, cfg.rnnt, pred, static_cast<int>(best));
        g = params.get(rnnt_names::kWp) * pred.back().h + params.vec(rnnt_names::kBp);
      }
    }
    return out;
  }
  const AedEncoded enc = aed_encode(params, cfg.aed, x);
  const int max_len = opts.max_output_length > 0 ? opts.max_output_length : static_cast<int>(x.num_frames());
  AedStepResult r = aed_decode_step(params, cfg.aed, enc, aed_initial_state(params, cfg.aed, enc), V);
  for (int step = 0; step < max_len; ++step) {
    Eigen::Index best = 0;
    r.log_probs.values.maxCoeff(&best);
    if (best == V) break;
    out.push_back(static_cast<int>(best));
    r = aed_decode_step(params, cfg.aed, enc, r.state, static_cast<int>(best));
  }
  return out;
}

struct SweepPoint {
  double lambda_ext = 0.0;
  double lambda_ilm = 0.0;
  EditCounts counts;
};

struct SweepResult {
  std::vector<SweepPoint> grid;
  SweepPoint best;
};

/// Decodes a dev set at every (lambda_ext, lambda_ilm) grid point and picks
/// the lowest pooled WER; ties prefer smaller lambda_ilm, then smaller
/// lambda_ext.
template <typename Utterances>
SweepResult sweep_lambdas(const E2EConfig& cfg, const ParamStore& params, const Utterances& dev,
                          const std::vector<std::pair<double, double>>& grid, FusionConfig fusion,
                          const FusionScorers& lms, const DecodeOptions& opts = {}) {
  if (dev.empty()) throw ConfigError("sweep_lambdas: empty dev set");
  if (grid.empty()) throw ConfigError("sweep_lambdas: empty grid");
  SweepResult res;
  for (const auto& [le, li] : grid) {
    fusion.lambda_ext = le;
    fusion.lambda_ilm = li;
    SweepPoint pt{le, li, {}};
    for (const auto& u : dev) pt.counts += wer(u.y, beam_search(cfg, params, u.x, fusion, lms, opts).best().prefix);
    res.grid.push_back(pt);
  }
  res.best = res.grid.front();
  for (const auto& pt : res.grid) {
    const double a = pt.counts.rate();
    const double b = res.best.counts.rate();
    if (a < b || (a == b && (pt.lambda_ilm < res.best.lambda_ilm ||
                             (pt.lambda_ilm == res.best.lambda_ilm && pt.lambda_ext < res.best.lambda_ext))))
      res.best = pt;
  }
  return res;
}

}  // namespace ilmt
