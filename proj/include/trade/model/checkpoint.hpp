#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "trade/model/model.hpp"

namespace trade::model {

inline constexpr const char* kCheckpointFormat = "trade-checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

nlohmann::json tensor_to_json(const numkit::Tensor& t);
numkit::Tensor tensor_from_json(const nlohmann::json& j);

/// JSON container: format tag, version, ModelConfig, vocabulary with its hash,
/// the (domain, slot) registry, every parameter tensor by name, and an
/// `extras` object (EWC Fisher/anchor and GEM memory live under "ewc"/"gem").
std::string dump_checkpoint(const TradeModel& model, const nlohmann::json& extras = nlohmann::json::object());
void save_checkpoint(const std::filesystem::path& path, const TradeModel& model,
                     const nlohmann::json& extras = nlohmann::json::object());

struct LoadedCheckpoint {
  TradeModel model;
  nlohmann::json extras;
};

/// Rejects other formats or versions, a stored vocabulary hash that does not
/// match the stored tokens, and (when given) a vocabulary hash other than
/// `expected_vocab_hash`.
LoadedCheckpoint parse_checkpoint(const std::string& text, std::optional<std::uint64_t> expected_vocab_hash = {});
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<std::uint64_t> expected_vocab_hash = {});

}  // namespace trade::model
