#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace trade::corpus {

/// Lowercases, splits on whitespace, and emits every ASCII punctuation
/// character as its own token: "Don't, please!" -> don ' t , please !
std::vector<std::string> tokenize(std::string_view text);

/// Space-joined token list; tokenize(join(t)) == t for tokenizer output.
std::string join(const std::vector<std::string>& tokens);

}  // namespace trade::corpus
