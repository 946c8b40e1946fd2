#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "trade/corpus/corpus.hpp"
#include "trade/model/model.hpp"

namespace trade::cli {

/// Line-driven session over one growing dialogue.
///   system: <text>   system utterance for the next turn
///   user: <text>     closes a turn and prints the prediction
///   reset            starts a new dialogue
///   help             prints the command list
///   quit             ends the session
/// Anything else prints the help text.
class DemoSession {
 public:
  DemoSession(const model::TradeModel& model, std::ostream& out);

  /// Returns false once the session should end.
  bool handle(const std::string& line);
  /// Reads lines until EOF or quit.
  void run(std::istream& in);

  /// Prediction for the current dialogue's last turn.
  model::TurnPrediction last_prediction() const { return last_; }
  const corpus::Dialogue& dialogue() const { return dialogue_; }

  static const char* help_text();

 private:
  void predict_and_print();

  const model::TradeModel& model_;
  std::ostream& out_;
  corpus::Dialogue dialogue_;
  std::vector<std::string> pending_system_;
  model::TurnPrediction last_;
};

}  // namespace trade::cli
