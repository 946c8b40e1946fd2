#include "trade/model/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "trade/errors.hpp"

namespace trade::model {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  json j;
  j["emb_dim"] = c.emb_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["max_decode_len"] = c.max_decode_len;
  j["history_window"] = c.history_window == corpus::kAllTurns ? json("all") : json(c.history_window);
  j["dropout"] = c.dropout;
  j["word_dropout"] = c.word_dropout;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["embedding_init_std"] = c.embedding_init_std;
  return j;
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> known = {"emb_dim", "hidden_dim", "max_decode_len", "history_window", "dropout",
                                              "word_dropout", "alpha", "beta", "embedding_init_std"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown model config key '" + k + "'");
  ModelConfig c;
  try {
    c.emb_dim = j.value("emb_dim", c.emb_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
    if (j.contains("history_window")) {
      const json& w = j.at("history_window");
      c.history_window = (w.is_string() && w.get<std::string>() == "all") ? corpus::kAllTurns : w.get<std::size_t>();
    }
    c.dropout = j.value("dropout", c.dropout);
    c.word_dropout = j.value("word_dropout", c.word_dropout);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.embedding_init_std = j.value("embedding_init_std", c.embedding_init_std);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

json tensor_to_json(const numkit::Tensor& t) { return json{{"shape", t.shape()}, {"data", t.storage()}}; }

numkit::Tensor tensor_from_json(const json& j) {
  try {
    return numkit::Tensor(j.at("shape").get<numkit::Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad tensor record: ") + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("bad tensor record: ") + e.what());
  }
}

std::string dump_checkpoint(const TradeModel& model, const json& extras) {
  json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["config"] = config_to_json(model.config());
  doc["vocabulary"] = {{"tokens", model.vocab().tokens()}, {"hash", model.vocab().hash()}};
  doc["registry"] = model.registry().slots_by_domain();
  json params = json::array();
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    json p = tensor_to_json(model.params().value(i));
    p["name"] = model.params().name(i);
    params.push_back(std::move(p));
  }
  doc["params"] = std::move(params);
  doc["extras"] = extras.is_null() ? json::object() : extras;
  return doc.dump() + "\n";
}

void save_checkpoint(const std::filesystem::path& path, const TradeModel& model, const json& extras) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out << dump_checkpoint(model, extras);
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint parse_checkpoint(const std::string& text, std::optional<std::uint64_t> expected_vocab_hash) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", std::string()) != kCheckpointFormat) {
    throw CheckpointError("not a trade checkpoint");
  }
  const int version = doc.value("version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  try {
    ModelConfig config = config_from_json(doc.at("config"));
    corpus::Vocabulary vocab(doc.at("vocabulary").at("tokens").get<std::vector<std::string>>());
    const auto stored_hash = doc.at("vocabulary").at("hash").get<std::uint64_t>();
    if (stored_hash != vocab.hash()) throw CheckpointError("vocabulary hash mismatch (corrupt checkpoint)");
    if (expected_vocab_hash && *expected_vocab_hash != stored_hash) {
      throw CheckpointError("checkpoint vocabulary does not match the expected vocabulary");
    }
    corpus::SlotRegistry registry(doc.at("registry").get<std::map<std::string, std::vector<std::string>>>());
    numkit::ParamStore params;
    for (const json& p : doc.at("params")) params.add(p.at("name").get<std::string>(), tensor_from_json(p));
    TradeModel model(config, std::move(vocab), std::move(registry), std::move(params));
    return LoadedCheckpoint{std::move(model), doc.value("extras", json::object())};
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), expected_vocab_hash);
}

}  // namespace trade::model
