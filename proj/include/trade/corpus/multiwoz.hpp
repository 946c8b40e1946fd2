#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "json.hpp"
#include "trade/corpus/corpus.hpp"

namespace trade::corpus {

struct MultiwozOptions {
  /// Domains kept; labels of any other domain are dropped.
  std::set<std::string> domains = {"attraction", "hotel", "restaurant", "taxi", "train"};
};

/// Best-effort conversion of a raw MultiWOZ 2.x annotation file (dialogue id
/// -> {"log": [...]}, user and system entries alternating, each system entry
/// carrying the "metadata" state after the preceding user entry) into a
/// Corpus. Choices:
/// - turn k pairs user entry 2k with system entry 2k-1 (empty for k = 0) and
///   takes its belief from the metadata of system entry 2k+1; a trailing user
///   entry without a system reply is dropped;
/// - "semi" slots keep their lowercased name, "book" slots become "book <name>"
///   and the "booked" list is ignored;
/// - values are lowercased and trimmed; "", "not mentioned" and "none" mean
///   absent; "dontcare", "dont care", "don't care", "do n't care" and
///   "does not care" map to the dontcare value;
/// - the registry holds every (domain, slot) pair that receives a value.
/// Throws SchemaError naming the dialogue for structural problems.
Corpus convert_multiwoz(const nlohmann::json& raw, const MultiwozOptions& options = {});
Corpus load_multiwoz(const std::filesystem::path& path, const MultiwozOptions& options = {});

}  // namespace trade::corpus
