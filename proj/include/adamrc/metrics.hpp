#pragma once

// Answer-string metrics. EM and F1 use SQuAD-style normalization; BLEU-1 and
// ROUGE-L compare lowercased whitespace tokens.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adamrc/corpus.hpp"
#include "json.hpp"

namespace adamrc::mrc {
class MrcModel;
}

namespace adamrc::metrics {

// Lowercase, drop ASCII punctuation, drop the words a/an/the, collapse spaces.
std::string normalize_answer(std::string_view s);

// Throw std::invalid_argument when golds/refs is empty.
double exact_match(std::string_view pred, const std::vector<std::string>& golds);
double f1_score(std::string_view pred, const std::vector<std::string>& golds);
double bleu1(std::string_view pred, const std::vector<std::string>& refs);
double rouge_l(std::string_view pred, const std::vector<std::string>& refs);

struct MetricReport {
  double em = 0.0;  // percentages
  double f1 = 0.0;
  std::optional<double> bleu1;
  std::optional<double> rouge_l;
  int n_examples = 0;

  nlohmann::json to_json() const;
};

// Mean of the per-pair scores x100. with_generation adds BLEU-1/ROUGE-L.
MetricReport score_predictions(const std::vector<std::string>& preds, const std::vector<std::vector<std::string>>& golds,
                               bool with_generation = false);

// Eval-mode span predictions converted to passage text.
std::vector<std::string> predict_answers(mrc::MrcModel& model, const corpus::Vocabulary& vocab,
                                         const std::vector<corpus::QAExample>& examples);
MetricReport evaluate_model(mrc::MrcModel& model, const corpus::Vocabulary& vocab,
                            const std::vector<corpus::QAExample>& examples);

}  // namespace adamrc::metrics
