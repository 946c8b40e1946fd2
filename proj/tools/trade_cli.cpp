#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trade/cli/demo.hpp"
#include "trade/cli/experiment.hpp"
#include "trade/corpus/multiwoz.hpp"
#include "trade/errors.hpp"
#include "trade/model/checkpoint.hpp"

namespace {

using nlohmann::json;
using namespace trade;

struct CommonFlags {
  std::string config_path;
  std::string preset = "desk";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  auto* config = cmd->add_option("-c,--config", f.config_path, "experiment config (JSON)");
  cmd->add_option("--preset", f.preset, "starting config: desk (all-domain training) or expansion (few-shot benchmark)")
      ->check(CLI::IsMember({"desk", "expansion"}))
      ->excludes(config);
  cmd->add_option("--set", f.overrides, "override a config field, e.g. --set model.hidden_dim=32");
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("-o,--out", f.out, "output root directory");
  cmd->add_option("--epochs", f.epochs, "train.max_epochs");
  cmd->add_option("--lr", f.lr, "train.lr");
  cmd->add_option("--batch-size", f.batch_size, "train.batch_size");
}

cli::ExperimentConfig resolve(const CommonFlags& f, std::vector<std::string> extra) {
  json j = json::object();
  if (f.preset == "expansion") j = cli::experiment_to_json(cli::ExperimentConfig::expansion_defaults());
  if (!f.config_path.empty()) j = cli::experiment_to_json(cli::load_experiment(f.config_path));
  std::vector<std::string> sets;
  if (f.seed) sets.push_back("seed=" + std::to_string(*f.seed));
  if (f.out) sets.push_back("output_dir=" + json(*f.out).dump());
  if (f.epochs) sets.push_back("train.max_epochs=" + std::to_string(*f.epochs));
  if (f.lr) sets.push_back("train.lr=" + json(*f.lr).dump());
  if (f.batch_size) sets.push_back("train.batch_size=" + std::to_string(*f.batch_size));
  sets.insert(sets.end(), extra.begin(), extra.end());
  sets.insert(sets.end(), f.overrides.begin(), f.overrides.end());
  return cli::parse_experiment(cli::apply_overrides(std::move(j), sets));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TRADE dialogue state tracker: synthesize data, train, evaluate, transfer, fine-tune, inspect"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, eval_f, zs_f, ft_f;
  auto* synth = app.add_subcommand("synth", "write a synthetic train/valid/test corpus");
  add_common(synth, synth_f);
  auto* train = app.add_subcommand("train", "train on all domains and evaluate on test");
  add_common(train, train_f);

  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(evalc, eval_f);
  std::string eval_ckpt, eval_split = "test", eval_domain;
  evalc->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  evalc->add_option("--split", eval_split, "train, valid, test or a corpus file");
  evalc->add_option("--domain", eval_domain, "only dialogues touching this domain");

  auto* zs = app.add_subcommand("zeroshot", "train without a domain, then evaluate on it");
  add_common(zs, zs_f);
  std::optional<std::string> zs_domain;
  zs->add_option("--domain", zs_domain, "held-out domain");

  auto* ft = app.add_subcommand("finetune", "few-shot expansion of a base checkpoint");
  add_common(ft, ft_f);
  std::optional<std::string> ft_ckpt, ft_domain, ft_strategy;
  std::optional<double> ft_fraction;
  std::vector<double> ft_lambdas;
  ft->add_option("--checkpoint", ft_ckpt, "base checkpoint");
  ft->add_option("--domain", ft_domain, "new domain");
  ft->add_option("--fraction", ft_fraction, "fraction of the new domain's training dialogues");
  ft->add_option("--strategy", ft_strategy, "naive, ewc or gem");
  ft->add_option("--lambda", ft_lambdas, "EWC lambda grid");

  auto* convert = app.add_subcommand("convert", "convert raw MultiWOZ annotations to a corpus file");
  std::string convert_in, convert_out;
  std::vector<std::string> convert_domains;
  convert->add_option("--input", convert_in, "MultiWOZ data.json (or a split of it)")->required();
  convert->add_option("--output", convert_out, "corpus file to write")->required();
  convert->add_option("--domains", convert_domains, "domains to keep (default: the five TRADE domains)");

  auto* demo = app.add_subcommand("demo", "interactive turn-by-turn predictions from stdin");
  std::string demo_ckpt;
  demo->add_option("--checkpoint", demo_ckpt, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) cli::cmd_synth(resolve(synth_f, {}), std::cout);
    if (train->parsed()) cli::cmd_train(resolve(train_f, {}), std::cout);
    if (evalc->parsed()) cli::cmd_eval(resolve(eval_f, {}), eval_ckpt, eval_split, eval_domain, std::cout);
    if (zs->parsed()) {
      std::vector<std::string> extra;
      if (zs_domain) extra.push_back("zeroshot.domain=" + json(*zs_domain).dump());
      cli::cmd_zeroshot(resolve(zs_f, extra), std::cout);
    }
    if (ft->parsed()) {
      std::vector<std::string> extra;
      if (ft_ckpt) extra.push_back("finetune.base_checkpoint=" + json(*ft_ckpt).dump());
      if (ft_domain) extra.push_back("finetune.domain=" + json(*ft_domain).dump());
      if (ft_fraction) extra.push_back("finetune.fraction=" + json(*ft_fraction).dump());
      if (ft_strategy) extra.push_back("finetune.strategy=" + json(*ft_strategy).dump());
      if (!ft_lambdas.empty()) extra.push_back("finetune.lambda_grid=" + json(ft_lambdas).dump());
      cli::cmd_finetune(resolve(ft_f, extra), std::cout);
    }
    if (convert->parsed()) {
      corpus::MultiwozOptions options;
      if (!convert_domains.empty()) options.domains = {convert_domains.begin(), convert_domains.end()};
      const auto c = corpus::load_multiwoz(convert_in, options);
      corpus::save_corpus(c, convert_out);
      std::cout << "wrote " << convert_out << ": " << c.dialogues.size() << " dialogues, " << c.turn_count()
                << " turns, " << c.registry.size() << " (domain, slot) pairs\n";
    }
    if (demo->parsed()) {
      auto loaded = model::load_checkpoint(demo_ckpt);
      cli::DemoSession session(loaded.model, std::cout);
      session.run(std::cin);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
