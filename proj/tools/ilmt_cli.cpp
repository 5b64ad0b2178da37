// Command-line front end: generate-data, train, train-lm, sweep, evaluate.
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ilmt/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "experiment config (JSON)")->required();
  sub->add_option("-s,--seed", c.seed, "override the config seed");
  sub->add_option("-o,--output-dir", c.output_dir, "override the config output directory");
}

ilmt::ExperimentConfig resolve(const Common& c) {
  ilmt::ExperimentConfig cfg = ilmt::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
  ilmt::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Internal-LM training and LM fusion for desk-scale ASR"};
  app.require_subcommand(1);

  Common common;
  std::string loss, method, lm_text, domain, init;
  int epochs = 0;

  auto* gen = app.add_subcommand("generate-data", "write synthetic source/target corpora and LM text");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "train an E2E model on the source domain");
  add_common(train, common);
  train->add_option("--loss", loss, "standard or ilmt (overrides train.loss)")
      ->check(CLI::IsMember({"standard", "ilmt"}));
  train->add_option("--init", init, "initialize from an E2E checkpoint (fine-tuning)");
  train->add_option("--epochs", epochs, "override train.epochs")->check(CLI::PositiveNumber);

  auto* train_lm = app.add_subcommand("train-lm", "train an external or source-domain LSTM LM");
  add_common(train_lm, common);
  train_lm->add_option("--text", lm_text, "target, source or source_large (overrides lm.text)")
      ->check(CLI::IsMember({"target", "source", "source_large"}));

  auto* sweep = app.add_subcommand("sweep", "tune fusion weights on the evaluation-domain dev set");
  add_common(sweep, common);
  sweep->add_option("--loss", loss, "which trained model to decode with")
      ->check(CLI::IsMember({"standard", "ilmt"}));
  sweep->add_option("--method", method, "none, shallow_fusion, density_ratio or ilme");

  auto* evaluate = app.add_subcommand("evaluate", "tune and score every (loss, method) cell");
  add_common(evaluate, common);
  evaluate->add_option("--domain", domain, "target or source (overrides evaluate.domain)")
      ->check(CLI::IsMember({"target", "source"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    ilmt::ExperimentConfig cfg = resolve(common);
    if (!loss.empty()) cfg.train_loss = loss;
    if (!lm_text.empty()) cfg.lm.text = lm_text;
    if (!method.empty()) cfg.fusion.method = ilmt::fusion_method_from_string(method);
    if (!domain.empty()) cfg.eval_domain = domain;
    if (!init.empty()) cfg.checkpoints.init = init;
    if (epochs > 0) cfg.epochs = epochs;
    ilmt::validate(cfg);

    if (*gen) ilmt::cmd_generate_data(cfg, std::cout);
    else if (*train) ilmt::cmd_train(cfg, std::cout);
    else if (*train_lm) ilmt::cmd_train_lm(cfg, std::cout);
    else if (*sweep) ilmt::cmd_sweep(cfg, std::cout);
    else if (*evaluate) ilmt::cmd_evaluate(cfg, std::cout);
    return 0;
  } catch (const ilmt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
