#include "trade/cli/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "trade/corpus/vocabulary.hpp"
#include "trade/errors.hpp"
#include "trade/eval/predictions.hpp"
#include "trade/model/checkpoint.hpp"
#include "trade/rng.hpp"

namespace trade::cli {

using nlohmann::json;

namespace {

json train_to_json(const model::TrainConfig& t) {
  return {{"lr", t.lr},
          {"lr_min", t.lr_min},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"lr_patience", t.lr_patience},
          {"keep_initial", t.keep_initial},
          {"execution", t.execution == model::Execution::kParallel ? "parallel" : "serial"}};
}

model::TrainConfig train_from_json(const json& j) {
  model::TrainConfig t;
  t.lr = j.at("lr").get<double>();
  t.lr_min = j.at("lr_min").get<double>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.max_epochs = j.at("max_epochs").get<std::size_t>();
  t.patience = j.at("patience").get<std::size_t>();
  t.lr_patience = j.at("lr_patience").get<std::size_t>();
  t.keep_initial = j.at("keep_initial").get<bool>();
  const auto exec = j.at("execution").get<std::string>();
  if (exec == "parallel") {
    t.execution = model::Execution::kParallel;
  } else if (exec == "serial") {
    t.execution = model::Execution::kSerial;
  } else {
    throw ConfigError("execution must be \"parallel\" or \"serial\"");
  }
  return t;
}

// Rejects keys that the defaults do not have. Free-form objects are skipped.
void check_keys(const json& given, const json& reference, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (path == "data.synth") continue;
    if (reference.at(key).is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + path + "' must be an object");
      check_keys(value, reference.at(key), path);
    }
  }
}

void validate_train(const model::TrainConfig& t, const std::string& where) {
  if (!(t.lr > 0.0) || !(t.lr_min > 0.0) || t.lr_min > t.lr) {
    throw ConfigError(where + ": learning rates must satisfy 0 < lr_min <= lr");
  }
  if (t.batch_size == 0) throw ConfigError(where + ": batch_size must be positive");
  if (t.patience == 0 || t.lr_patience == 0) throw ConfigError(where + ": patience values must be positive");
}

std::vector<std::size_t> complement(std::size_t total, const std::vector<std::size_t>& excluded) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < total; ++j)
    if (std::find(excluded.begin(), excluded.end(), j) == excluded.end()) out.push_back(j);
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void write_report(const std::filesystem::path& dir, const std::string& stem, const eval::MetricReport& report) {
  write_text(dir / (stem + ".json"), report_to_json(report).dump(2) + "\n");
  write_text(dir / (stem + ".txt"), eval::format_report(report));
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.model.emb_dim = 64;
  c.model.hidden_dim = 64;
  c.model.dropout = 0.1;
  c.model.word_dropout = 0.05;
  c.train.lr = 3e-3;
  c.train.lr_min = 1e-4;
  c.train.batch_size = 8;
  c.train.max_epochs = 50;
  c.train.patience = 15;
  c.train.lr_patience = 5;
  c.finetune.train = c.train;
  c.finetune.train.lr = 1e-2;
  c.finetune.train.max_epochs = 30;
  c.finetune.train.patience = 30;
  c.finetune.train.lr_patience = 30;
  c.finetune.train.keep_initial = false;
  return c;
}

ExperimentConfig ExperimentConfig::expansion_defaults() {
  ExperimentConfig c = defaults();
  c.data.train_dialogues = 3000;
  c.data.valid_dialogues = 500;
  c.data.test_dialogues = 500;
  c.zeroshot_domain = "restaurant";
  c.finetune.domain = "restaurant";
  json domains = corpus::SynthSpec::default_spec().domains;
  for (json& d : domains)
    if (d.at("name") == c.finetune.domain) d["weight"] = 4.0;
  c.data.synth = {{"domains", domains}};
  return c;
}

void ExperimentConfig::validate() const {
  model.validate();
  validate_train(train, "train");
  validate_train(finetune.train, "finetune.train");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (data.synthetic()) {
    if (data.train_dialogues == 0 || data.valid_dialogues == 0 || data.test_dialogues == 0) {
      throw ConfigError("synthetic split sizes must be positive");
    }
    synth_spec(*this).validate();
  } else if (data.train_path.empty() || data.valid_path.empty() || data.test_path.empty()) {
    throw ConfigError("data needs all of train_path, valid_path and test_path (or none, for synthetic data)");
  }
  if (!(finetune.fraction > 0.0 && finetune.fraction <= 1.0)) throw ConfigError("finetune.fraction must be in (0, 1]");
  if (!(finetune.memory_fraction > 0.0 && finetune.memory_fraction <= 1.0)) {
    throw ConfigError("finetune.memory_fraction must be in (0, 1]");
  }
  if (finetune.lambda_grid.empty()) throw ConfigError("finetune.lambda_grid must not be empty");
  for (double l : finetune.lambda_grid)
    if (!(l >= 0.0)) throw ConfigError("finetune.lambda_grid values must be non-negative");
}

json experiment_to_json(const ExperimentConfig& c) {
  json grid = c.finetune.lambda_grid;
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"data",
           {{"train_path", c.data.train_path},
            {"valid_path", c.data.valid_path},
            {"test_path", c.data.test_path},
            {"synth", c.data.synth},
            {"train_dialogues", c.data.train_dialogues},
            {"valid_dialogues", c.data.valid_dialogues},
            {"test_dialogues", c.data.test_dialogues}}},
          {"model", model::config_to_json(c.model)},
          {"train", train_to_json(c.train)},
          {"zeroshot", {{"domain", c.zeroshot_domain}}},
          {"finetune",
           {{"base_checkpoint", c.finetune.base_checkpoint},
            {"domain", c.finetune.domain},
            {"fraction", c.finetune.fraction},
            {"strategy", continual::strategy_name(c.finetune.strategy)},
            {"lambda_grid", grid},
            {"memory_fraction", c.finetune.memory_fraction},
            {"fisher_samples", c.finetune.fisher_samples},
            {"train", train_to_json(c.finetune.train)}}},
          {"eval", {{"count_none_agreements", c.count_none_agreements}}},
          {"store_continual_state", c.store_continual_state}};
}

ExperimentConfig parse_experiment(const json& given) {
  if (!given.is_object()) throw ConfigError("experiment config must be a JSON object");
  const json reference = experiment_to_json(ExperimentConfig::defaults());
  check_keys(given, reference, "");
  json j = reference;
  j.merge_patch(given);
  if (given.contains("data") && given["data"].contains("synth")) j["data"]["synth"] = given["data"]["synth"];
  ExperimentConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.output_dir = j.at("output_dir").get<std::string>();
    const json& d = j.at("data");
    c.data.train_path = d.at("train_path").get<std::string>();
    c.data.valid_path = d.at("valid_path").get<std::string>();
    c.data.test_path = d.at("test_path").get<std::string>();
    c.data.synth = d.at("synth");
    if (!c.data.synth.is_object()) throw ConfigError("data.synth must be an object");
    c.data.train_dialogues = d.at("train_dialogues").get<std::size_t>();
    c.data.valid_dialogues = d.at("valid_dialogues").get<std::size_t>();
    c.data.test_dialogues = d.at("test_dialogues").get<std::size_t>();
    c.model = model::config_from_json(j.at("model"));
    c.train = train_from_json(j.at("train"));
    c.zeroshot_domain = j.at("zeroshot").at("domain").get<std::string>();
    const json& f = j.at("finetune");
    c.finetune.base_checkpoint = f.at("base_checkpoint").get<std::string>();
    c.finetune.domain = f.at("domain").get<std::string>();
    c.finetune.fraction = f.at("fraction").get<double>();
    c.finetune.strategy = continual::parse_strategy(f.at("strategy").get<std::string>());
    c.finetune.lambda_grid = f.at("lambda_grid").get<std::vector<double>>();
    c.finetune.memory_fraction = f.at("memory_fraction").get<double>();
    c.finetune.fisher_samples = f.at("fisher_samples").get<std::size_t>();
    c.finetune.train = train_from_json(f.at("train"));
    c.count_none_agreements = j.at("eval").at("count_none_agreements").get<bool>();
    c.store_continual_state = j.at("store_continual_state").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment(j);
}

json apply_overrides(json j, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
    std::string pointer;
    std::stringstream keys(a.substr(0, eq));
    for (std::string part; std::getline(keys, part, '.');) {
      if (part.empty()) throw ConfigError("override '" + a + "' has an empty key segment");
      pointer += "/" + part;
    }
    const std::string text = a.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    j[json::json_pointer(pointer)] = value;
  }
  return j;
}

corpus::SynthSpec synth_spec(const ExperimentConfig& c) {
  json spec = corpus::SynthSpec::default_spec();
  spec.merge_patch(c.data.synth);
  corpus::SynthSpec s;
  try {
    s = spec.get<corpus::SynthSpec>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad data.synth: ") + e.what());
  }
  s.dialogues = c.data.train_dialogues + c.data.valid_dialogues + c.data.test_dialogues;
  return s;
}

Splits make_splits(const ExperimentConfig& c) {
  Splits s;
  if (c.data.synthetic()) {
    corpus::Corpus all = corpus::synth_corpus(synth_spec(c), derive_seed(c.seed, "synth")).corpus;
    const auto a = static_cast<std::ptrdiff_t>(c.data.train_dialogues);
    const auto b = a + static_cast<std::ptrdiff_t>(c.data.valid_dialogues);
    s.train = {all.registry, {all.dialogues.begin(), all.dialogues.begin() + a}};
    s.valid = {all.registry, {all.dialogues.begin() + a, all.dialogues.begin() + b}};
    s.test = {all.registry, {all.dialogues.begin() + b, all.dialogues.end()}};
    return s;
  }
  s.train = corpus::load_corpus(c.data.train_path);
  s.valid = corpus::load_corpus(c.data.valid_path);
  s.test = corpus::load_corpus(c.data.test_path);
  if (!(s.train.registry == s.valid.registry) || !(s.train.registry == s.test.registry)) {
    throw ConfigError("train, valid and test corpora declare different (domain, slot) registries");
  }
  if (s.train.dialogues.empty()) throw ConfigError("training corpus has no dialogues");
  return s;
}

eval::MetricReport evaluate(const model::TradeModel& model, const corpus::Corpus& data,
                            std::span<const std::size_t> pairs, bool count_none_agreements) {
  auto records = eval::predict_corpus(model, data, pairs);
  auto evals = eval::evaluate_records(records, model.registry(), pairs);
  return eval::make_report(evals, model.registry(), count_none_agreements);
}

model::Validator make_validator(const corpus::Corpus& data, std::vector<std::size_t> pairs,
                                bool count_none_agreements) {
  return [&data, pairs = std::move(pairs), count_none_agreements](const model::TradeModel& m) {
    auto records = eval::predict_corpus(m, data, pairs);
    auto evals = eval::evaluate_records(records, m.registry(), pairs);
    return model::ValidationScore{eval::joint_goal_accuracy(evals),
                                  eval::slot_accuracy(evals, count_none_agreements)};
  };
}

TrainOutcome train_model(const ExperimentConfig& c, const corpus::Corpus& train, const corpus::Corpus& valid,
                         std::span<const std::size_t> pairs,
                         const std::function<void(const model::EpochLog&)>& on_epoch) {
  if (train.dialogues.empty()) throw ConfigError("training corpus has no dialogues");
  if (valid.dialogues.empty()) throw ConfigError("validation corpus has no dialogues");
  model::TradeModel m(c.model, corpus::Vocabulary::build(train), train.registry, derive_seed(c.seed, "init"));
  const auto samples = model::make_samples(m, train, pairs);
  model::TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, "train");
  auto validator = make_validator(valid, {pairs.begin(), pairs.end()}, c.count_none_agreements);
  auto result = model::train(m, samples, tc, validator, {}, on_epoch);
  return TrainOutcome{std::move(m), std::move(result)};
}

json continual_extras(const ExperimentConfig& c, const model::TradeModel& model, const corpus::Corpus& source,
                      std::span<const std::size_t> pairs) {
  auto samples = model::make_samples(model, source, pairs);
  if (c.finetune.fisher_samples > 0 && c.finetune.fisher_samples < samples.size()) {
    Rng rng(derive_seed(c.seed, "fisher"));
    std::shuffle(samples.begin(), samples.end(), rng);
    samples.resize(c.finetune.fisher_samples);
  }
  const continual::FisherDiag fisher = continual::fisher_diag(model, samples);
  const auto memory = continual::EpisodicMemory::sample(source, c.finetune.memory_fraction, derive_seed(c.seed, "memory"),
                                                        {pairs.begin(), pairs.end()});
  return {{"ewc", continual::fisher_to_json(fisher, model.params())}, {"gem", continual::memory_to_json(memory)}};
}

DomainProtocol domain_protocol(const Splits& splits, const std::string& domain) {
  if (!splits.train.registry.has_domain(domain)) throw ConfigError("unknown domain '" + domain + "'");
  DomainProtocol p;
  p.source_train = corpus::exclude_domain(splits.train, domain).without;
  p.source_valid = corpus::exclude_domain(splits.valid, domain).without;
  p.source_test = corpus::exclude_domain(splits.test, domain).without;
  p.target_train = corpus::only_domain(splits.train, domain);
  p.target_valid = corpus::only_domain(splits.valid, domain);
  p.target_test = corpus::only_domain(splits.test, domain);
  p.target_pairs = splits.train.registry.pairs_of_domain(domain);
  p.source_pairs = complement(splits.train.registry.size(), p.target_pairs);
  if (p.target_valid.dialogues.empty() || p.target_test.dialogues.empty() || p.target_train.dialogues.empty()) {
    throw ConfigError("domain '" + domain + "' has no single-domain dialogues in every split");
  }
  if (p.source_train.dialogues.empty() || p.source_valid.dialogues.empty() || p.source_test.dialogues.empty()) {
    throw ConfigError("excluding domain '" + domain + "' leaves an empty split");
  }
  return p;
}

FinetuneOutcome run_finetune_protocol(const ExperimentConfig& c, model::TradeModel& model, const json& base_extras,
                                      const DomainProtocol& protocol) {
  const auto& f = c.finetune;
  std::optional<continual::EwcState> ewc;
  std::optional<continual::EpisodicMemory> memory;
  if (f.strategy == continual::Strategy::kEwc) {
    if (!base_extras.contains("ewc")) throw ConfigError("base checkpoint has no EWC Fisher diagonal");
    ewc = continual::ewc_from_json(base_extras.at("ewc"));
  }
  if (f.strategy == continual::Strategy::kGem) {
    if (!base_extras.contains("gem")) throw ConfigError("base checkpoint has no GEM memory");
    memory = continual::memory_from_json(base_extras.at("gem"));
  }

  FinetuneOutcome out;
  out.target_sample = corpus::sample_fraction(protocol.target_train, f.domain, f.fraction,
                                              derive_seed(c.seed, "finetune-sample"));
  out.target_test_before = evaluate(model, protocol.target_test, protocol.target_pairs, c.count_none_agreements);
  out.source_test_before = evaluate(model, protocol.source_test, protocol.source_pairs, c.count_none_agreements);

  const auto samples = model::make_samples(model, out.target_sample, protocol.target_pairs);
  auto validate_target = make_validator(protocol.target_valid, protocol.target_pairs, c.count_none_agreements);
  auto validate_source = make_validator(protocol.source_valid, protocol.source_pairs, c.count_none_agreements);

  continual::FinetuneConfig fc;
  fc.strategy = f.strategy;
  fc.train = f.train;
  fc.train.seed = derive_seed(c.seed, "finetune");

  if (f.strategy == continual::Strategy::kEwc) {
    const numkit::ParamStore base = model.params();
    std::optional<numkit::ParamStore> best_params;
    for (double lambda : f.lambda_grid) {
      model.params() = base;
      fc.lambda = lambda;
      auto r = continual::finetune(model, samples, fc, &*ewc, nullptr, validate_target, validate_source);
      const bool better = !best_params || r.target_after.joint > out.result.target_after.joint ||
                          (r.target_after.joint == out.result.target_after.joint &&
                           r.target_after.slot > out.result.target_after.slot);
      if (better) {
        best_params = model.params();
        out.result = std::move(r);
        out.selected_lambda = lambda;
      }
    }
    model.params() = *best_params;
  } else {
    out.result = continual::finetune(model, samples, fc, nullptr, memory ? &*memory : nullptr, validate_target,
                                     validate_source);
  }
  out.target_test = evaluate(model, protocol.target_test, protocol.target_pairs, c.count_none_agreements);
  out.source_test = evaluate(model, protocol.source_test, protocol.source_pairs, c.count_none_agreements);
  return out;
}

std::string epoch_csv_header() { return "epoch,loss,gate_loss,value_loss,lr,valid_joint,valid_slot,improved\n"; }

std::string epoch_csv_row(const model::EpochLog& l) {
  std::ostringstream os;
  os << std::setprecision(10) << l.epoch << "," << l.loss << "," << l.gate_loss << "," << l.value_loss << "," << l.lr
     << "," << l.valid.joint << "," << l.valid.slot << "," << (l.improved ? 1 : 0) << "\n";
  return os.str();
}

std::filesystem::path fresh_run_dir(const std::filesystem::path& root, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = command + "-" + stamp;
  std::filesystem::create_directories(root);
  for (int n = 0;; ++n) {
    const auto dir = root / (n == 0 ? base : base + "-" + std::to_string(n));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::filesystem::path cmd_synth(const ExperimentConfig& c, std::ostream& out) {
  c.validate();
  if (!c.data.synthetic()) throw ConfigError("synth needs a synthetic data config (no corpus paths)");
  const Splits s = make_splits(c);
  const auto dir = fresh_run_dir(c.output_dir, "synth");
  write_text(dir / "config.json", experiment_to_json(c).dump(2) + "\n");
  corpus::save_corpus(s.train, dir / "train.json");
  corpus::save_corpus(s.valid, dir / "valid.json");
  corpus::save_corpus(s.test, dir / "test.json");
  out << "wrote " << s.train.dialogues.size() << " / " << s.valid.dialogues.size() << " / " << s.test.dialogues.size()
      << " dialogues to " << dir.string() << "\n";
  return dir;
}

std::filesystem::path cmd_train(const ExperimentConfig& c, std::ostream& out) {
  c.validate();
  const Splits s = make_splits(c);
  const auto dir = fresh_run_dir(c.output_dir, "train");
  write_text(dir / "config.json", experiment_to_json(c).dump(2) + "\n");
  std::ofstream csv(dir / "train_log.csv", std::ios::binary);
  csv << epoch_csv_header();
  auto outcome = train_model(c, s.train, s.valid, {}, [&](const model::EpochLog& l) {
    csv << epoch_csv_row(l) << std::flush;
    out << "epoch " << l.epoch << "  loss " << fixed(l.loss) << "  valid joint " << fixed(l.valid.joint) << "  slot "
        << fixed(l.valid.slot) << (l.improved ? "  *" : "") << "\n";
  });
  const json extras = c.store_continual_state ? continual_extras(c, outcome.model, s.train) : json::object();
  model::save_checkpoint(dir / "checkpoint.json", outcome.model, extras);
  if (outcome.result.diverged) {
    throw NumericError("training diverged (non-finite gradient); best checkpoint kept in " + dir.string());
  }
  auto records = eval::predict_corpus(outcome.model, s.test);
  auto evals = eval::evaluate_records(records, outcome.model.registry());
  const auto report = eval::make_report(evals, outcome.model.registry(), c.count_none_agreements);
  write_report(dir, "test_report", report);
  eval::save_predictions(records, dir / "test_predictions.jsonl");
  const auto sim = eval::embedding_similarity(outcome.model.params().value("slot_embedding"),
                                              outcome.model.registry().slot_names());
  write_text(dir / "slot_similarity.csv", eval::similarity_csv(sim));
  out << "best epoch " << outcome.result.best_epoch << ", test joint " << fixed(report.joint) << ", slot "
      << fixed(report.slot) << "\nrun directory " << dir.string() << "\n";
  return dir;
}

std::filesystem::path cmd_eval(const ExperimentConfig& c, const std::filesystem::path& checkpoint,
                               const std::string& split, const std::string& domain_filter, std::ostream& out) {
  c.validate();
  if (checkpoint.empty()) throw ConfigError("eval needs a checkpoint");
  corpus::Corpus data;
  if (split == "train" || split == "valid" || split == "test") {
    Splits s = make_splits(c);
    data = split == "train" ? s.train : split == "valid" ? s.valid : s.test;
  } else if (std::filesystem::exists(split)) {
    data = corpus::load_corpus(split);
  } else {
    throw ConfigError("split must be train, valid, test or a corpus file path");
  }
  auto loaded = model::load_checkpoint(checkpoint);
  if (!(loaded.model.registry() == data.registry)) {
    throw ConfigError("corpus registry does not match the checkpoint");
  }
  if (!domain_filter.empty()) {
    if (!data.registry.has_domain(domain_filter)) throw ConfigError("unknown domain '" + domain_filter + "'");
    data = corpus::filter_domain(data, domain_filter);
    if (data.dialogues.empty()) throw ConfigError("no dialogues touch domain '" + domain_filter + "'");
  }
  const auto dir = fresh_run_dir(c.output_dir, "eval");
  auto records = eval::predict_corpus(loaded.model, data);
  auto evals = eval::evaluate_records(records, loaded.model.registry());
  const auto report = eval::make_report(evals, loaded.model.registry(), c.count_none_agreements);
  write_report(dir, "report", report);
  eval::save_predictions(records, dir / "predictions.jsonl");
  const auto sim = eval::embedding_similarity(loaded.model.params().value("slot_embedding"),
                                              loaded.model.registry().slot_names());
  write_text(dir / "slot_similarity.csv", eval::similarity_csv(sim));
  if (sim.zero_norm > 0) out << "warning: " << sim.zero_norm << " slot embedding(s) have zero norm\n";
  out << eval::format_report(report) << "run directory " << dir.string() << "\n";
  return dir;
}

std::filesystem::path cmd_zeroshot(const ExperimentConfig& c, std::ostream& out) {
  c.validate();
  const Splits s = make_splits(c);
  const DomainProtocol p = domain_protocol(s, c.zeroshot_domain);
  const auto dir = fresh_run_dir(c.output_dir, "zeroshot");
  write_text(dir / "config.json", experiment_to_json(c).dump(2) + "\n");
  std::ofstream csv(dir / "train_log.csv", std::ios::binary);
  csv << epoch_csv_header();
  auto outcome = train_model(c, p.source_train, p.source_valid, p.source_pairs,
                             [&](const model::EpochLog& l) { csv << epoch_csv_row(l) << std::flush; });
  const json extras = c.store_continual_state
                          ? continual_extras(c, outcome.model, p.source_train, p.source_pairs)
                          : json::object();
  model::save_checkpoint(dir / "checkpoint.json", outcome.model, extras);
  const auto source = evaluate(outcome.model, p.source_test, p.source_pairs, c.count_none_agreements);
  auto records = eval::predict_corpus(outcome.model, p.target_test, p.target_pairs);
  auto evals = eval::evaluate_records(records, outcome.model.registry(), p.target_pairs);
  const auto target = eval::make_report(evals, outcome.model.registry(), c.count_none_agreements);
  std::vector<eval::TurnEval> none_evals;
  for (const auto& r : records)
    none_evals.push_back(eval::evaluate_turn(r.gold, {}, outcome.model.registry(), p.target_pairs));
  const double baseline = eval::joint_goal_accuracy(none_evals);
  write_report(dir, "source_report", source);
  write_report(dir, "zeroshot_report", target);
  eval::save_predictions(records, dir / "zeroshot_predictions.jsonl");
  write_text(dir / "summary.json", json{{"domain", c.zeroshot_domain},
                                        {"source_joint", source.joint},
                                        {"zeroshot_joint", target.joint},
                                        {"zeroshot_slot", target.slot},
                                        {"all_none_joint", baseline}}
                                           .dump(2) + "\n");
  out << "trained without '" << c.zeroshot_domain << "': source joint " << fixed(source.joint) << "\n"
      << "zero-shot '" << c.zeroshot_domain << "': joint " << fixed(target.joint) << ", slot " << fixed(target.slot)
      << " (all-none baseline joint " << fixed(baseline) << ")\nrun directory " << dir.string() << "\n";
  return dir;
}

std::filesystem::path cmd_finetune(const ExperimentConfig& c, std::ostream& out) {
  c.validate();
  if (c.finetune.base_checkpoint.empty()) throw ConfigError("finetune.base_checkpoint is required");
  const Splits s = make_splits(c);
  const DomainProtocol p = domain_protocol(s, c.finetune.domain);
  auto loaded = model::load_checkpoint(c.finetune.base_checkpoint);
  if (!(loaded.model.registry() == s.train.registry)) throw ConfigError("corpus registry does not match the checkpoint");
  const auto dir = fresh_run_dir(c.output_dir, "finetune");
  write_text(dir / "config.json", experiment_to_json(c).dump(2) + "\n");
  auto o = run_finetune_protocol(c, loaded.model, loaded.extras, p);

  std::ostringstream csv;
  csv << "epoch,loss,gate_loss,value_loss,lr,target_joint,target_slot,source_joint,source_slot,improved\n";
  csv << std::setprecision(10);
  for (const auto& e : o.result.epochs) {
    csv << e.log.epoch << "," << e.log.loss << "," << e.log.gate_loss << "," << e.log.value_loss << "," << e.log.lr
        << "," << e.log.valid.joint << "," << e.log.valid.slot << "," << e.source.joint << "," << e.source.slot << ","
        << (e.log.improved ? 1 : 0) << "\n";
  }
  write_text(dir / "finetune_log.csv", csv.str());
  json extras = loaded.extras;
  extras["finetune"] = {{"strategy", continual::strategy_name(c.finetune.strategy)},
                        {"domain", c.finetune.domain},
                        {"fraction", c.finetune.fraction}};
  model::save_checkpoint(dir / "checkpoint.json", loaded.model, extras);
  write_report(dir, "target_report", o.target_test);
  write_report(dir, "source_report", o.source_test);
  json summary{{"strategy", continual::strategy_name(c.finetune.strategy)},
               {"domain", c.finetune.domain},
               {"target_dialogues", o.target_sample.dialogues.size()},
               {"source_joint_before", o.source_test_before.joint},
               {"source_joint_after", o.source_test.joint},
               {"source_joint_drop", o.source_test_before.joint - o.source_test.joint},
               {"target_joint_before", o.target_test_before.joint},
               {"target_joint_after", o.target_test.joint}};
  if (o.selected_lambda) summary["selected_lambda"] = *o.selected_lambda;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << continual::strategy_name(c.finetune.strategy) << " fine-tuning on " << o.target_sample.dialogues.size()
      << " '" << c.finetune.domain << "' dialogue(s)\n"
      << "source joint " << fixed(o.source_test_before.joint) << " -> " << fixed(o.source_test.joint) << "\n"
      << "target joint " << fixed(o.target_test_before.joint) << " -> " << fixed(o.target_test.joint) << "\n";
  if (o.selected_lambda) out << "selected lambda " << *o.selected_lambda << "\n";
  out << "run directory " << dir.string() << "\n";
  return dir;
}

}  // namespace trade::cli
