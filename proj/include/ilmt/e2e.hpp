#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "ilmt/aed.hpp"
#include "ilmt/rnnt.hpp"

namespace ilmt {

enum class Family { Rnnt, Aed };

inline std::string to_string(Family f) { return f == Family::Rnnt ? "rnnt" : "aed"; }

inline Family family_from_string(const std::string& s) {
  if (s == "rnnt") return Family::Rnnt;
  if (s == "aed") return Family::Aed;
  throw ConfigError("unknown model family '" + s + "' (expected rnnt or aed)");
}

/// Either model family with its dimensions.
struct E2EConfig {
  Family family = Family::Rnnt;
  RnntConfig rnnt;
  AedConfig aed;

  [[nodiscard]] int vocab_size() const { return family == Family::Rnnt ? rnnt.vocab_size : aed.vocab_size; }
  [[nodiscard]] int input_dim() const { return family == Family::Rnnt ? rnnt.input_dim : aed.input_dim; }
  [[nodiscard]] std::map<std::string, int> dims() const {
    return family == Family::Rnnt ? rnnt.dims() : aed.dims();
  }
};

inline ParamStore make_e2e_params(const E2EConfig& cfg, Rng& rng) {
  return cfg.family == Family::Rnnt ? make_rnnt_params(cfg.rnnt, rng) : make_aed_params(cfg.aed, rng);
}

inline ParamStore make_e2e_params(const E2EConfig& cfg) {
  return cfg.family == Family::Rnnt ? make_rnnt_params(cfg.rnnt) : make_aed_params(cfg.aed);
}

inline std::unique_ptr<TokenScorer> make_ilm_scorer(const E2EConfig& cfg, const ParamStore& params) {
  if (cfg.family == Family::Rnnt) return std::make_unique<RnntIlmScorer>(params, cfg.rnnt);
  return std::make_unique<AedIlmScorer>(params, cfg.aed);
}

}  // namespace ilmt
