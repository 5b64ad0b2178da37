#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilmt/checkpoint.hpp"
#include "ilmt/config.hpp"
#include "ilmt/data.hpp"
#include "ilmt/decoding.hpp"
#include "ilmt/lm.hpp"
#include "ilmt/trainer.hpp"

namespace ilmt {

namespace fs = std::filesystem;

// File layout under the data directory and the output directory.
inline std::string corpus_path(const ExperimentConfig& c, const std::string& domain, const std::string& split) {
  return c.data_dir() + "/" + domain + "." + split + ".jsonl";
}
inline std::string text_path(const ExperimentConfig& c, const std::string& which) {
  return c.data_dir() + "/" + which + "_text.txt";
}
inline std::string out_path(const ExperimentConfig& c, const std::string& name) { return c.output_dir + "/" + name; }
/// results_<domain>.<ext>, so cross- and intra-domain evaluations coexist.
inline std::string results_path(const ExperimentConfig& c, const std::string& ext) {
  return out_path(c, "results_" + c.eval_domain + "." + ext);
}
inline std::string decode_path(const ExperimentConfig& c, const std::string& loss, FusionMethod m) {
  return out_path(c, "decode_" + c.eval_domain + "/" + loss + "_" + to_string(m) + ".jsonl");
}

inline std::string standard_checkpoint(const ExperimentConfig& c) {
  return c.checkpoints.standard.empty() ? out_path(c, "standard.ckpt") : c.checkpoints.standard;
}
inline std::string ilmt_checkpoint(const ExperimentConfig& c) {
  return c.checkpoints.ilmt.empty() ? out_path(c, "ilmt.ckpt") : c.checkpoints.ilmt;
}
inline std::string lm_checkpoint(const ExperimentConfig& c, const std::string& text) {
  return out_path(c, "lm_" + text + ".ckpt");
}
/// External LM: trained on the evaluation domain's text (target text for
/// cross-domain, the large source pool for intra-domain).
inline std::string external_checkpoint(const ExperimentConfig& c) {
  if (!c.checkpoints.external.empty()) return c.checkpoints.external;
  return lm_checkpoint(c, c.eval_domain == "target" ? "target" : "source_large");
}
inline std::string source_lm_checkpoint(const ExperimentConfig& c) {
  return c.checkpoints.source.empty() ? lm_checkpoint(c, "source") : c.checkpoints.source;
}

inline DomainPair domain_presets(const ExperimentConfig& c) {
  DomainPairOptions o;
  o.vocab_size = c.model.vocab_size();
  o.input_dim = c.model.input_dim();
  o.noise = c.data.noise;
  return make_domain_pair(o, c.data.domain_seed);
}

inline CheckpointHeader e2e_header(const E2EConfig& cfg) {
  return {to_string(cfg.family), cfg.vocab_size(), cfg.dims()};
}

inline void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw std::runtime_error(what + " '" + path + "' does not exist");
}

/// Loads E2E parameters into a model built from `cfg`; mismatches name the
/// offending parameter.
inline ParamStore load_e2e(const std::string& path, const E2EConfig& cfg) {
  require_file(path, "checkpoint");
  CheckpointHeader h;
  ParamStore stored;
  load_checkpoint(path, h, stored);
  if (h.family != to_string(cfg.family))
    throw ConfigError("checkpoint '" + path + "' holds a " + h.family + " model, config expects " +
                      to_string(cfg.family));
  if (h.vocab_size != cfg.vocab_size()) throw ConfigError("checkpoint '" + path + "': vocabulary size mismatch");
  ParamStore p = make_e2e_params(cfg);
  try {
    p.assign_from(stored);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
  return p;
}

inline ParamStore load_lm(const std::string& path, const LmConfig& cfg, int e2e_vocab) {
  require_file(path, "LM checkpoint");
  CheckpointHeader h;
  ParamStore stored;
  load_checkpoint(path, h, stored);
  if (h.family != "lm") throw ConfigError("checkpoint '" + path + "' is not a language model");
  if (h.vocab_size != e2e_vocab)
    throw ConfigError("vocabulary mismatch between E2E model (" + std::to_string(e2e_vocab) + ") and LM '" + path +
                      "' (" + std::to_string(h.vocab_size) + ")");
  ParamStore p = make_lm_params(cfg);
  try {
    p.assign_from(stored);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
  return p;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << j.dump(2) << '\n';
}

// --- generate-data ---------------------------------------------------------

/// Writes source/target corpora (train/dev/test), target-domain LM text and
/// a larger source-domain text pool, plus the domain tables.
inline void cmd_generate_data(const ExperimentConfig& c, std::ostream& log) {
  fs::create_directories(c.data_dir());
  const DomainPair dp = domain_presets(c);
  const std::uint64_t base = c.seed * 1000;
  const CorpusSplits src = generate_corpus(dp.source, c.data.source_utterances, base + 1);
  const CorpusSplits tgt = generate_corpus(dp.target, c.data.target_utterances, base + 2);
  for (const auto& [domain, splits] : {std::pair{"source", &src}, std::pair{"target", &tgt}}) {
    write_corpus(corpus_path(c, domain, "train"), splits->train);
    write_corpus(corpus_path(c, domain, "dev"), splits->dev);
    write_corpus(corpus_path(c, domain, "test"), splits->test);
  }
  write_text(text_path(c, "target"), sample_text(dp.target, c.data.target_text_sentences, base + 3));
  write_text(text_path(c, "source_large"), sample_text(dp.source, c.data.source_text_sentences, base + 4));
  auto table = [](const Matrix& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index k = 0; k < m.cols(); ++k) rows[static_cast<std::size_t>(r)].push_back(m(r, k));
    return rows;
  };
  write_json(c.data_dir() + "/domains.json",
             {{"source", {{"transitions", table(dp.source.transitions)}}},
              {"target", {{"transitions", table(dp.target.transitions)}}},
              {"prototypes", table(dp.source.prototypes.transpose())},
              {"mean_row_kl_target_source", mean_row_kl(dp.target.transitions, dp.source.transitions)}});
  log << "generate-data: source " << src.train.size() << "/" << src.dev.size() << "/" << src.test.size()
      << ", target " << tgt.train.size() << "/" << tgt.dev.size() << "/" << tgt.test.size() << " utterances in "
      << c.data_dir() << "\n";
}

inline std::vector<Utterance> load_split(const ExperimentConfig& c, const std::string& domain,
                                         const std::string& split) {
  require_file(corpus_path(c, domain, split), "corpus");
  return read_corpus(corpus_path(c, domain, split));
}

// --- train -----------------------------------------------------------------

inline nlohmann::json epoch_to_json(const EpochLog& l) {
  return {{"epoch", l.epoch},
          {"train_e2e_loss", l.train_e2e_loss},
          {"train_ilm_loss", l.train_ilm_loss},
          {"dev_e2e_loss", l.dev_e2e_loss},
          {"dev_wer", l.dev_wer},
          {"dev_ilm_perplexity", l.dev_ilm_perplexity}};
}

/// Trains an E2E model on the source domain with the configured loss;
/// writes <loss>.ckpt (best dev epoch) and <loss>.train_log.jsonl.
inline TrainResult cmd_train(const ExperimentConfig& c, std::ostream& log) {
  fs::create_directories(c.output_dir);
  const auto train = load_split(c, "source", "train");
  const auto dev = load_split(c, "source", "dev");
  TrainOptions o;
  o.loss = train_loss_from_string(c.train_loss);
  o.alpha = c.effective_alpha();
  o.epochs = c.epochs;
  o.batch_size = c.batch_size;
  o.adam = c.adam;
  o.seed = c.seed;
  o.decode = c.decode;
  std::optional<ParamStore> init;
  if (!c.checkpoints.init.empty()) init = load_e2e(c.checkpoints.init, c.model);
  const TrainResult r = train_e2e(c.model, train, dev, o, init ? &*init : nullptr);
  const std::string name = c.train_loss;
  {
    std::ofstream os(out_path(c, name + ".train_log.jsonl"));
    for (const auto& l : r.log) {
      os << epoch_to_json(l).dump() << '\n';
      log << "train[" << name << "] epoch " << l.epoch << " e2e " << l.train_e2e_loss << " ilm " << l.train_ilm_loss
          << " dev_wer " << l.dev_wer << " dev_ilm_ppl " << l.dev_ilm_perplexity << "\n";
    }
  }
  save_checkpoint(name == "standard" ? standard_checkpoint(c) : ilmt_checkpoint(c), e2e_header(c.model), r.best);
  log << "train[" << name << "] best epoch " << r.best_epoch << "\n";
  return r;
}

// --- train-lm --------------------------------------------------------------

inline std::vector<TokenSequence> lm_text(const ExperimentConfig& c) {
  if (c.lm.text == "source") return transcripts(load_split(c, "source", "train"));
  require_file(text_path(c, c.lm.text), "text corpus");
  return read_text(text_path(c, c.lm.text));
}

/// Trains an LSTM LM on the configured text; writes lm_<text>.ckpt.
inline LmTrainResult cmd_train_lm(const ExperimentConfig& c, std::ostream& log) {
  fs::create_directories(c.output_dir);
  const auto text = lm_text(c);
  LmTrainOptions o;
  o.epochs = c.lm.epochs;
  o.batch_size = c.lm.batch_size;
  o.adam = c.adam;
  o.adam.learning_rate = c.lm.learning_rate;
  o.seed = c.seed;
  LmConfig cfg = c.lm.model;
  cfg.vocab_size = c.model.vocab_size();
  const LmTrainResult r = lm_train(text, cfg, o);
  save_checkpoint(lm_checkpoint(c, c.lm.text), {"lm", cfg.vocab_size, cfg.dims()}, r.params);
  log << "train-lm[" << c.lm.text << "] " << text.size() << " sentences, final loss " << r.epoch_loss.back() << "\n";
  return r;
}

// --- sweep / evaluate ------------------------------------------------------

struct LoadedLms {
  LmConfig cfg;
  ParamStore external;
  ParamStore source;
};

inline LoadedLms load_lms(const ExperimentConfig& c) {
  LoadedLms l;
  l.cfg = c.lm.model;
  l.cfg.vocab_size = c.model.vocab_size();
  l.external = load_lm(external_checkpoint(c), l.cfg, c.model.vocab_size());
  l.source = load_lm(source_lm_checkpoint(c), l.cfg, c.model.vocab_size());
  return l;
}

/// The (lambda_ext, lambda_ilm) points searched for a method: none has one
/// point, shallow fusion ignores lambda_ilm.
inline std::vector<std::pair<double, double>> method_grid(const ExperimentConfig& c, FusionMethod m) {
  std::vector<std::pair<double, double>> g;
  if (m == FusionMethod::None) return {{0.0, 0.0}};
  for (double le : c.sweep.lambda_ext) {
    if (m == FusionMethod::ShallowFusion) {
      g.push_back({le, 0.0});
      continue;
    }
    for (double li : c.sweep.lambda_ilm) g.push_back({le, li});
  }
  return g;
}

inline nlohmann::json sweep_to_json(const SweepResult& s) {
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& p : s.grid)
    grid.push_back({{"lambda_ext", p.lambda_ext}, {"lambda_ilm", p.lambda_ilm}, {"wer", p.counts.rate()},
                    {"errors", p.counts.errors()}, {"ref_tokens", p.counts.ref_length}});
  return {{"grid", grid}, {"best", {{"lambda_ext", s.best.lambda_ext}, {"lambda_ilm", s.best.lambda_ilm},
                                    {"wer", s.best.counts.rate()}}}};
}

/// Tunes the configured fusion method's weights on the evaluation domain's
/// dev set for the configured train loss; writes sweep_<loss>_<method>.json.
inline SweepResult cmd_sweep(const ExperimentConfig& c, std::ostream& log) {
  fs::create_directories(c.output_dir);
  const std::string ckpt = c.train_loss == "standard" ? standard_checkpoint(c) : ilmt_checkpoint(c);
  const ParamStore params = load_e2e(ckpt, c.model);
  const LoadedLms lms = load_lms(c);
  const LmScorer ext(lms.external, lms.cfg), src(lms.source, lms.cfg);
  const auto dev = load_split(c, c.eval_domain, "dev");
  const SweepResult s =
      sweep_lambdas(c.model, params, dev, method_grid(c, c.fusion.method), c.fusion, {&ext, &src}, c.decode);
  nlohmann::json j = sweep_to_json(s);
  j["config"] = config_to_json(c);
  write_json(out_path(c, "sweep_" + c.train_loss + "_" + to_string(c.fusion.method) + ".json"), j);
  log << "sweep[" << c.train_loss << "/" << to_string(c.fusion.method) << "] best lambda_ext " << s.best.lambda_ext
      << " lambda_ilm " << s.best.lambda_ilm << " dev WER " << s.best.counts.rate() << "\n";
  return s;
}

struct ResultCell {
  std::string loss;
  FusionMethod method = FusionMethod::None;
  double lambda_ext = 0.0;
  double lambda_ilm = 0.0;
  EditCounts dev;
  EditCounts test;
  double test_werr = 0.0;
};

inline nlohmann::json decode_record(const Utterance& u, const Hypothesis& h) {
  return {{"id", u.id},
          {"reference", u.y},
          {"hypothesis", h.prefix},
          {"score_total", h.score_total},
          {"score_e2e", h.score_e2e},
          {"score_ext_lm", h.score_ext_lm},
          {"score_ilm", h.score_ilm}};
}

inline std::string format_table(const std::vector<ResultCell>& cells, const std::string& domain) {
  std::ostringstream os;
  os << "evaluation domain: " << domain << "\n";
  os << std::left << std::setw(10) << "loss" << std::setw(16) << "method" << std::right << std::setw(9)
     << "lambda_E" << std::setw(9) << "lambda_I" << std::setw(9) << "dev WER" << std::setw(10) << "test WER"
     << std::setw(11) << "test WERR" << "\n";
  char buf[160];
  for (const auto& cell : cells) {
    const bool baseline = cell.loss == "standard" && cell.method == FusionMethod::None;
    std::string werr = "-";
    if (!baseline) {
      std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * cell.test_werr);
      werr = buf;
    }
    std::snprintf(buf, sizeof buf, "%-10s%-16s%9.2f%9.2f%8.2f%%%9.2f%%%11s\n", cell.loss.c_str(),
                  to_string(cell.method).c_str(), cell.lambda_ext, cell.lambda_ilm, 100.0 * cell.dev.rate(),
                  100.0 * cell.test.rate(), werr.c_str());
    os << buf;
  }
  return os.str();
}

struct EvaluationResult {
  std::vector<ResultCell> cells;
  nlohmann::json json;
  std::string table;

  [[nodiscard]] const ResultCell& cell(const std::string& loss, FusionMethod m) const {
    for (const auto& c : cells)
      if (c.loss == loss && c.method == m) return c;
    throw std::out_of_range("no result cell " + loss + "/" + to_string(m));
  }
};

inline nlohmann::json cell_to_json(const ResultCell& cell, const SweepResult& s) {
  return {{"loss", cell.loss},
          {"method", to_string(cell.method)},
          {"lambda_ext", cell.lambda_ext},
          {"lambda_ilm", cell.lambda_ilm},
          {"dev_wer", cell.dev.rate()},
          {"test_wer", cell.test.rate()},
          {"test_counts",
           {{"substitutions", cell.test.substitutions},
            {"insertions", cell.test.insertions},
            {"deletions", cell.test.deletions},
            {"ref_tokens", cell.test.ref_length}}},
          {"sweep", sweep_to_json(s)}};
}

/// One (loss, method) cell: tunes the weights on `dev`, then decodes `test`
/// with the chosen weights. Writes one JSON record per test utterance to
/// `records` when given.
inline std::pair<ResultCell, SweepResult> evaluate_cell(const ExperimentConfig& c, const std::string& loss,
                                                        const ParamStore& params, FusionMethod m,
                                                        const FusionScorers& scorers,
                                                        const std::vector<Utterance>& dev,
                                                        const std::vector<Utterance>& test, std::ostream* records) {
  FusionConfig f = c.fusion;
  f.method = m;
  const SweepResult s = sweep_lambdas(c.model, params, dev, method_grid(c, m), f, scorers, c.decode);
  f.lambda_ext = s.best.lambda_ext;
  f.lambda_ilm = s.best.lambda_ilm;
  ResultCell cell;
  cell.loss = loss;
  cell.method = m;
  cell.lambda_ext = f.lambda_ext;
  cell.lambda_ilm = f.lambda_ilm;
  cell.dev = s.best.counts;
  for (const auto& u : test) {
    const Hypothesis h = beam_search(c.model, params, u.x, f, scorers, c.decode).best();
    cell.test += wer(u.y, h.prefix);
    if (records) *records << decode_record(u, h).dump() << '\n';
  }
  return {cell, s};
}

/// The 2 (train loss) x 4 (fusion method) grid: per cell, weights tuned on
/// the evaluation domain's dev set, then dev/test WER and test WERR against
/// the standard no-LM baseline. Writes results_<domain>.json and .txt plus
/// decode_<domain>/<loss>_<method>.jsonl.
inline EvaluationResult cmd_evaluate(const ExperimentConfig& c, std::ostream& log) {
  const ParamStore standard = load_e2e(standard_checkpoint(c), c.model);
  const ParamStore ilmt = load_e2e(ilmt_checkpoint(c), c.model);
  const LoadedLms lms = load_lms(c);
  const LmScorer ext(lms.external, lms.cfg), src(lms.source, lms.cfg);
  const FusionScorers scorers{&ext, &src};
  const auto dev = load_split(c, c.eval_domain, "dev");
  const auto test = load_split(c, c.eval_domain, "test");
  fs::create_directories(out_path(c, "decode_" + c.eval_domain));

  EvaluationResult res;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [loss, params] : {std::pair<std::string, const ParamStore*>{"standard", &standard},
                                     std::pair<std::string, const ParamStore*>{"ilmt", &ilmt}}) {
    for (FusionMethod m : {FusionMethod::None, FusionMethod::ShallowFusion, FusionMethod::DensityRatio,
                           FusionMethod::Ilme}) {
      std::ofstream records(decode_path(c, loss, m));
      const auto [cell, s] = evaluate_cell(c, loss, *params, m, scorers, dev, test, &records);
      res.cells.push_back(cell);
      log << "evaluate[" << loss << "/" << to_string(m) << "] lambda_ext " << cell.lambda_ext << " lambda_ilm "
          << cell.lambda_ilm << " dev " << cell.dev.rate() << " test " << cell.test.rate() << "\n";
      cells.push_back(cell_to_json(cell, s));
    }
  }
  const double baseline = res.cells.front().test.rate();
  for (std::size_t i = 0; i < res.cells.size(); ++i) {
    res.cells[i].test_werr = werr(baseline, res.cells[i].test.rate());
    cells[i]["test_werr"] = i == 0 ? nlohmann::json(nullptr) : nlohmann::json(res.cells[i].test_werr);
  }
  res.table = format_table(res.cells, c.eval_domain);
  res.json = {{"config", config_to_json(c)},
              {"evaluation_domain", c.eval_domain},
              {"ilm_perplexity_source_dev",
               {{"standard", ilm_perplexity(c.model, standard, transcripts(load_split(c, "source", "dev")))},
                {"ilmt", ilm_perplexity(c.model, ilmt, transcripts(load_split(c, "source", "dev")))}}},
              {"cells", cells}};
  write_json(results_path(c, "json"), res.json);
  std::ofstream(results_path(c, "txt")) << res.table;
  log << res.table;
  return res;
}

}  // namespace ilmt
