#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilmt/decoding.hpp"
#include "ilmt/e2e.hpp"
#include "ilmt/lm.hpp"
#include "ilmt/trainer.hpp"

namespace ilmt {

struct DataConfig {
  std::uint64_t domain_seed = 7;     // fixes the shipped source/target presets
  int source_utterances = 3000;      // split 80/10/10
  int target_utterances = 2000;
  int target_text_sentences = 5000;  // external LM training text
  int source_text_sentences = 24000; // larger source pool (intra-domain LM)
  double noise = 0.6;
  std::string dir;                   // empty: <output_dir>/data
};

struct LmSection {
  LmConfig model{};
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 0.01;
  std::string text = "target";  // target | source | source_large
};

struct SweepConfig {
  std::vector<double> lambda_ext{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  std::vector<double> lambda_ilm{0.0, 0.25, 0.5, 0.75, 1.0, 1.25};
};

struct CheckpointPaths {
  std::string standard;   // standard-loss E2E model
  std::string ilmt;       // ILMT-loss E2E model
  std::string external;   // external LM
  std::string source;     // source LM for density ratio
  std::string init;       // optional initialization for `train`
};

struct ExperimentConfig {
  E2EConfig model{};
  std::string train_loss = "standard";
  double alpha = -1.0;  // negative: family default (0.4 RNN-T, 1.0 AED)
  int epochs = 12;
  int batch_size = 8;
  AdamOptions adam{3e-3, 0.9, 0.999, 1e-8, 5.0};
  DataConfig data{};
  LmSection lm{};
  FusionConfig fusion{FusionMethod::Ilme, 0.0, 0.0, 25};
  DecodeOptions decode{};
  SweepConfig sweep{};
  std::string eval_domain = "target";  // target (cross-domain) | source (intra-domain)
  CheckpointPaths checkpoints{};
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";

  [[nodiscard]] double effective_alpha() const { return alpha >= 0.0 ? alpha : default_alpha(model.family); }
  [[nodiscard]] std::string data_dir() const { return data.dir.empty() ? output_dir + "/data" : data.dir; }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <typename T>
void read_opt(const nlohmann::json& j, const std::string& key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: key '" + (where.empty() ? key : where + "." + key) + "' has the wrong type");
  }
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  const auto& r = c.model.rnnt;
  const auto& a = c.model.aed;
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string("config: ") + name + " must be >= 1");
  };
  positive(r.vocab_size, "vocab_size");
  positive(r.input_dim, "input_dim");
  positive(r.encoder_layers, "rnnt.encoder_layers");
  positive(r.encoder_dim, "rnnt.encoder_dim");
  positive(r.prediction_layers, "rnnt.prediction_layers");
  positive(r.prediction_dim, "rnnt.prediction_dim");
  positive(r.embedding_dim, "rnnt.embedding_dim");
  positive(r.joint_dim, "rnnt.joint_dim");
  positive(a.encoder_layers, "aed.encoder_layers");
  positive(a.decoder_layers, "aed.decoder_layers");
  positive(a.decoder_dim, "aed.decoder_dim");
  positive(a.attention_dim, "aed.attention_dim");
  positive(a.conv_filters, "aed.conv_filters");
  if (a.encoder_dim < 2 || a.encoder_dim % 2) throw ConfigError("config: aed.encoder_dim must be even");
  if (a.conv_width < 1 || a.conv_width % 2 == 0) throw ConfigError("config: aed.conv_width must be odd");
  // The domain presets branch to 4 successor pairs, which needs at least 5 pairs.
  if (r.vocab_size % 2 || r.vocab_size < 10) throw ConfigError("config: vocab_size must be even and >= 10");
  train_loss_from_string(c.train_loss);
  positive(c.epochs, "epochs");
  positive(c.batch_size, "batch_size");
  if (!(c.adam.learning_rate > 0)) throw ConfigError("config: learning_rate must be positive");
  if (c.data.source_utterances < 3 || c.data.target_utterances < 3)
    throw ConfigError("config: corpora need at least 3 utterances");
  positive(c.data.target_text_sentences, "data.target_text_sentences");
  positive(c.data.source_text_sentences, "data.source_text_sentences");
  if (!(c.data.noise >= 0)) throw ConfigError("config: data.noise must be non-negative");
  positive(c.lm.epochs, "lm.epochs");
  positive(c.lm.batch_size, "lm.batch_size");
  positive(c.lm.model.embedding_dim, "lm.embedding_dim");
  positive(c.lm.model.hidden_dim, "lm.hidden_dim");
  positive(c.lm.model.layers, "lm.layers");
  if (c.lm.text != "target" && c.lm.text != "source" && c.lm.text != "source_large")
    throw ConfigError("config: lm.text must be target, source or source_large");
  if (c.fusion.beam_size < 1) throw ConfigError("config: beam_size must be >= 1");
  if (c.fusion.lambda_ext < 0 || c.fusion.lambda_ilm < 0) throw ConfigError("config: fusion weights must be >= 0");
  if (c.decode.max_symbols_per_frame < 1) throw ConfigError("config: max_symbols_per_frame must be >= 1");
  if (c.sweep.lambda_ext.empty() || c.sweep.lambda_ilm.empty()) throw ConfigError("config: sweep grids must be non-empty");
  for (double v : c.sweep.lambda_ext)
    if (v < 0) throw ConfigError("config: sweep weights must be >= 0");
  for (double v : c.sweep.lambda_ilm)
    if (v < 0) throw ConfigError("config: sweep weights must be >= 0");
  if (c.eval_domain != "target" && c.eval_domain != "source")
    throw ConfigError("config: eval_domain must be target or source");
  if (c.output_dir.empty()) throw ConfigError("config: output_dir must be set");
}

/// Parses and validates a config object; unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read_opt;
  check_keys(j, "", {"family", "vocab_size", "input_dim", "rnnt", "aed", "train", "data", "lm", "decode", "sweep",
                     "evaluate", "checkpoints", "seed", "output_dir"});
  ExperimentConfig c;
  std::string family = to_string(c.model.family);
  read_opt(j, "family", family, "");
  c.model.family = family_from_string(family);
  int vocab = c.model.rnnt.vocab_size, input = c.model.rnnt.input_dim;
  read_opt(j, "vocab_size", vocab, "");
  read_opt(j, "input_dim", input, "");
  c.model.rnnt.vocab_size = c.model.aed.vocab_size = c.lm.model.vocab_size = vocab;
  c.model.rnnt.input_dim = c.model.aed.input_dim = input;
  if (j.contains("rnnt")) {
    const auto& s = j["rnnt"];
    check_keys(s, "rnnt", {"encoder_layers", "encoder_dim", "prediction_layers", "prediction_dim", "embedding_dim",
                           "joint_dim"});
    auto& r = c.model.rnnt;
    read_opt(s, "encoder_layers", r.encoder_layers, "rnnt");
    read_opt(s, "encoder_dim", r.encoder_dim, "rnnt");
    read_opt(s, "prediction_layers", r.prediction_layers, "rnnt");
    read_opt(s, "prediction_dim", r.prediction_dim, "rnnt");
    read_opt(s, "embedding_dim", r.embedding_dim, "rnnt");
    read_opt(s, "joint_dim", r.joint_dim, "rnnt");
  }
  if (j.contains("aed")) {
    const auto& s = j["aed"];
    check_keys(s, "aed", {"encoder_layers", "encoder_dim", "decoder_layers", "decoder_dim", "attention_dim",
                          "conv_filters", "conv_width"});
    auto& a = c.model.aed;
    read_opt(s, "encoder_layers", a.encoder_layers, "aed");
    read_opt(s, "encoder_dim", a.encoder_dim, "aed");
    read_opt(s, "decoder_layers", a.decoder_layers, "aed");
    read_opt(s, "decoder_dim", a.decoder_dim, "aed");
    read_opt(s, "attention_dim", a.attention_dim, "aed");
    read_opt(s, "conv_filters", a.conv_filters, "aed");
    read_opt(s, "conv_width", a.conv_width, "aed");
  }
  if (j.contains("train")) {
    const auto& s = j["train"];
    check_keys(s, "train", {"loss", "alpha", "epochs", "batch_size", "learning_rate", "clip_norm"});
    read_opt(s, "loss", c.train_loss, "train");
    read_opt(s, "alpha", c.alpha, "train");
    if (s.contains("alpha") && c.alpha < 0) throw ConfigError("config: train.alpha must be non-negative");
    read_opt(s, "epochs", c.epochs, "train");
    read_opt(s, "batch_size", c.batch_size, "train");
    read_opt(s, "learning_rate", c.adam.learning_rate, "train");
    read_opt(s, "clip_norm", c.adam.clip_norm, "train");
  }
  if (j.contains("data")) {
    const auto& s = j["data"];
    check_keys(s, "data", {"domain_seed", "source_utterances", "target_utterances", "target_text_sentences",
                           "source_text_sentences", "noise", "dir"});
    read_opt(s, "domain_seed", c.data.domain_seed, "data");
    read_opt(s, "source_utterances", c.data.source_utterances, "data");
    read_opt(s, "target_utterances", c.data.target_utterances, "data");
    read_opt(s, "target_text_sentences", c.data.target_text_sentences, "data");
    read_opt(s, "source_text_sentences", c.data.source_text_sentences, "data");
    read_opt(s, "noise", c.data.noise, "data");
    read_opt(s, "dir", c.data.dir, "data");
  }
  if (j.contains("lm")) {
    const auto& s = j["lm"];
    check_keys(s, "lm", {"embedding_dim", "hidden_dim", "layers", "epochs", "batch_size", "learning_rate", "text"});
    read_opt(s, "embedding_dim", c.lm.model.embedding_dim, "lm");
    read_opt(s, "hidden_dim", c.lm.model.hidden_dim, "lm");
    read_opt(s, "layers", c.lm.model.layers, "lm");
    read_opt(s, "epochs", c.lm.epochs, "lm");
    read_opt(s, "batch_size", c.lm.batch_size, "lm");
    read_opt(s, "learning_rate", c.lm.learning_rate, "lm");
    read_opt(s, "text", c.lm.text, "lm");
  }
  if (j.contains("decode")) {
    const auto& s = j["decode"];
    check_keys(s, "decode", {"method", "lambda_ext", "lambda_ilm", "beam_size", "max_symbols_per_frame",
                             "max_output_length"});
    std::string method = to_string(c.fusion.method);
    read_opt(s, "method", method, "decode");
    c.fusion.method = fusion_method_from_string(method);
    read_opt(s, "lambda_ext", c.fusion.lambda_ext, "decode");
    read_opt(s, "lambda_ilm", c.fusion.lambda_ilm, "decode");
    read_opt(s, "beam_size", c.fusion.beam_size, "decode");
    read_opt(s, "max_symbols_per_frame", c.decode.max_symbols_per_frame, "decode");
    read_opt(s, "max_output_length", c.decode.max_output_length, "decode");
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    check_keys(s, "sweep", {"lambda_ext", "lambda_ilm"});
    read_opt(s, "lambda_ext", c.sweep.lambda_ext, "sweep");
    read_opt(s, "lambda_ilm", c.sweep.lambda_ilm, "sweep");
  }
  if (j.contains("evaluate")) {
    const auto& s = j["evaluate"];
    check_keys(s, "evaluate", {"domain"});
    read_opt(s, "domain", c.eval_domain, "evaluate");
  }
  if (j.contains("checkpoints")) {
    const auto& s = j["checkpoints"];
    check_keys(s, "checkpoints", {"standard", "ilmt", "external", "source", "init"});
    read_opt(s, "standard", c.checkpoints.standard, "checkpoints");
    read_opt(s, "ilmt", c.checkpoints.ilmt, "checkpoints");
    read_opt(s, "external", c.checkpoints.external, "checkpoints");
    read_opt(s, "source", c.checkpoints.source, "checkpoints");
    read_opt(s, "init", c.checkpoints.init, "checkpoints");
  }
  read_opt(j, "seed", c.seed, "");
  read_opt(j, "output_dir", c.output_dir, "");
  validate(c);
  return c;
}

/// Full config snapshot (every field, defaults included).
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  const auto& r = c.model.rnnt;
  const auto& a = c.model.aed;
  nlohmann::json j;
  j["family"] = to_string(c.model.family);
  j["vocab_size"] = r.vocab_size;
  j["input_dim"] = r.input_dim;
  j["rnnt"] = {{"encoder_layers", r.encoder_layers}, {"encoder_dim", r.encoder_dim},
               {"prediction_layers", r.prediction_layers}, {"prediction_dim", r.prediction_dim},
               {"embedding_dim", r.embedding_dim}, {"joint_dim", r.joint_dim}};
  j["aed"] = {{"encoder_layers", a.encoder_layers}, {"encoder_dim", a.encoder_dim},
              {"decoder_layers", a.decoder_layers}, {"decoder_dim", a.decoder_dim},
              {"attention_dim", a.attention_dim}, {"conv_filters", a.conv_filters}, {"conv_width", a.conv_width}};
  j["train"] = {{"loss", c.train_loss}, {"alpha", c.effective_alpha()}, {"epochs", c.epochs},
                {"batch_size", c.batch_size}, {"learning_rate", c.adam.learning_rate},
                {"clip_norm", c.adam.clip_norm}};
  j["data"] = {{"domain_seed", c.data.domain_seed}, {"source_utterances", c.data.source_utterances},
               {"target_utterances", c.data.target_utterances},
               {"target_text_sentences", c.data.target_text_sentences},
               {"source_text_sentences", c.data.source_text_sentences}, {"noise", c.data.noise},
               {"dir", c.data.dir}};
  j["lm"] = {{"embedding_dim", c.lm.model.embedding_dim}, {"hidden_dim", c.lm.model.hidden_dim},
             {"layers", c.lm.model.layers}, {"epochs", c.lm.epochs}, {"batch_size", c.lm.batch_size},
             {"learning_rate", c.lm.learning_rate}, {"text", c.lm.text}};
  j["decode"] = {{"method", to_string(c.fusion.method)}, {"lambda_ext", c.fusion.lambda_ext},
                 {"lambda_ilm", c.fusion.lambda_ilm}, {"beam_size", c.fusion.beam_size},
                 {"max_symbols_per_frame", c.decode.max_symbols_per_frame},
                 {"max_output_length", c.decode.max_output_length}};
  j["sweep"] = {{"lambda_ext", c.sweep.lambda_ext}, {"lambda_ilm", c.sweep.lambda_ilm}};
  j["evaluate"] = {{"domain", c.eval_domain}};
  j["checkpoints"] = {{"standard", c.checkpoints.standard}, {"ilmt", c.checkpoints.ilmt},
                      {"external", c.checkpoints.external}, {"source", c.checkpoints.source},
                      {"init", c.checkpoints.init}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace ilmt
