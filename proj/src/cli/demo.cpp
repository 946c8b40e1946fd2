#include "trade/cli/demo.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include "trade/corpus/tokenize.hpp"

namespace trade::cli {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

DemoSession::DemoSession(const model::TradeModel& model, std::ostream& out) : model_(model), out_(out) {
  dialogue_.id = "demo";
}

const char* DemoSession::help_text() {
  return "commands:\n"
         "  system: <text>   system utterance preceding the next user turn\n"
         "  user: <text>     user utterance; closes the turn and prints the state\n"
         "  reset            start a new dialogue\n"
         "  help             show this text\n"
         "  quit             leave\n";
}

bool DemoSession::handle(const std::string& raw) {
  const std::string line = trim(raw);
  if (line.empty()) return true;
  if (line == "quit" || line == "exit") return false;
  if (line == "help") {
    out_ << help_text();
  } else if (line == "reset") {
    dialogue_.turns.clear();
    pending_system_.clear();
    last_ = {};
    out_ << "new dialogue\n";
  } else if (starts_with(line, "system:")) {
    pending_system_ = corpus::tokenize(line.substr(7));
  } else if (starts_with(line, "user:")) {
    corpus::Turn t;
    t.system = std::move(pending_system_);
    t.user = corpus::tokenize(line.substr(5));
    pending_system_.clear();
    dialogue_.turns.push_back(std::move(t));
    if (corpus::make_history(dialogue_, dialogue_.turns.size() - 1).empty()) {
      dialogue_.turns.pop_back();
      out_ << "empty turn ignored\n";
      return true;
    }
    predict_and_print();
  } else {
    out_ << "unrecognized command: " << line << "\n" << help_text();
  }
  return true;
}

void DemoSession::run(std::istream& in) {
  for (std::string line; std::getline(in, line);)
    if (!handle(line)) break;
}

void DemoSession::predict_and_print() {
  const std::size_t t = dialogue_.turns.size() - 1;
  const auto history = corpus::make_history(dialogue_, t, model_.config().history_window);
  last_ = model_.predict(history);
  dialogue_.turns.back().belief = last_.belief;
  out_ << "turn " << t << " belief:";
  if (last_.belief.empty()) out_ << " (empty)";
  out_ << "\n";
  for (const auto& [key, value] : last_.belief) out_ << "  " << key.joined() << " = " << corpus::join(value) << "\n";
  out_ << std::fixed << std::setprecision(3);
  for (const auto& s : last_.slots) {
    const auto& key = model_.registry().pairs()[s.pair].key;
    out_ << "  [" << key.joined() << "] gate ptr " << s.gate[0] << " none " << s.gate[1] << " dontcare " << s.gate[2];
    if (s.gate_label == corpus::GateLabel::kPtr && !s.attention.empty()) {
      const auto& att = s.attention.front();
      std::vector<std::size_t> order(att.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      const std::size_t k = std::min<std::size_t>(5, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](std::size_t a, std::size_t b) { return att[a] > att[b] || (att[a] == att[b] && a < b); });
      out_ << "  copy:";
      for (std::size_t i = 0; i < k; ++i) out_ << " " << history[order[i]] << "(" << att[order[i]] << ")";
    }
    out_ << "\n";
  }
  out_.unsetf(std::ios::floatfield);
}

}  // namespace trade::cli
