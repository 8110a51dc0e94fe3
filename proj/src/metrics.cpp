#include "adamrc/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "adamrc/mrc.hpp"

namespace adamrc::metrics {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::vector<std::string> lower_tokens(std::string_view s) {
  std::string t(s);
  for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return split_ws(t);
}

void require_refs(const std::vector<std::string>& refs, const char* fn) {
  if (refs.empty()) throw std::invalid_argument(std::string(fn) + ": empty reference set");
}

double token_f1(const std::vector<std::string>& p, const std::vector<std::string>& g) {
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int same = 0;
  for (const auto& t : p)
    if (auto it = counts.find(t); it != counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  if (same == 0) return 0.0;
  const double prec = static_cast<double>(same) / static_cast<double>(p.size());
  const double rec = static_cast<double>(same) / static_cast<double>(g.size());
  return 2 * prec * rec / (prec + rec);
}

std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (unsigned char c : s) {
    if (c < 0x80 && std::ispunct(c)) continue;
    lowered.push_back(static_cast<char>(std::tolower(c)));
  }
  // Articles are whole words: maximal runs of word characters.
  std::string no_articles;
  std::size_t i = 0;
  while (i < lowered.size()) {
    if (!is_word_byte(static_cast<unsigned char>(lowered[i]))) {
      no_articles.push_back(lowered[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < lowered.size() && is_word_byte(static_cast<unsigned char>(lowered[j]))) ++j;
    const std::string_view word(lowered.data() + i, j - i);
    if (word == "a" || word == "an" || word == "the")
      no_articles.push_back(' ');
    else
      no_articles.append(word);
    i = j;
  }
  std::string out;
  for (const std::string& w : split_ws(no_articles)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

double exact_match(std::string_view pred, const std::vector<std::string>& golds) {
  require_refs(golds, "exact_match");
  const std::string p = normalize_answer(pred);
  for (const std::string& g : golds)
    if (normalize_answer(g) == p) return 1.0;
  return 0.0;
}

double f1_score(std::string_view pred, const std::vector<std::string>& golds) {
  require_refs(golds, "f1_score");
  const auto p = split_ws(normalize_answer(pred));
  double best = 0.0;
  for (const std::string& g : golds) best = std::max(best, token_f1(p, split_ws(normalize_answer(g))));
  return best;
}

double bleu1(std::string_view pred, const std::vector<std::string>& refs) {
  require_refs(refs, "bleu1");
  const auto p = lower_tokens(pred);
  if (p.empty()) return 0.0;
  std::map<std::string, int> max_ref;
  std::size_t closest = 0;
  bool have = false;
  for (const std::string& r : refs) {
    const auto rt = lower_tokens(r);
    std::map<std::string, int> c;
    for (const auto& t : rt) ++c[t];
    for (const auto& [t, n] : c) max_ref[t] = std::max(max_ref[t], n);
    const auto dist = [&](std::size_t len) { return len > p.size() ? len - p.size() : p.size() - len; };
    if (!have || dist(rt.size()) < dist(closest) || (dist(rt.size()) == dist(closest) && rt.size() < closest)) {
      closest = rt.size();
      have = true;
    }
  }
  std::map<std::string, int> pc;
  for (const auto& t : p) ++pc[t];
  int clipped = 0;
  for (const auto& [t, n] : pc)
    if (auto it = max_ref.find(t); it != max_ref.end()) clipped += std::min(n, it->second);
  const double c = static_cast<double>(p.size());
  const double precision = clipped / c;
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(closest) / c));
  return precision * bp;
}

double rouge_l(std::string_view pred, const std::vector<std::string>& refs) {
  require_refs(refs, "rouge_l");
  const auto p = lower_tokens(pred);
  if (p.empty()) return 0.0;
  double best = 0.0;
  for (const std::string& r : refs) {
    const auto rt = lower_tokens(r);
    if (rt.empty()) continue;
    const double l = static_cast<double>(lcs(p, rt));
    if (l == 0) continue;
    const double prec = l / static_cast<double>(p.size()), rec = l / static_cast<double>(rt.size());
    best = std::max(best, 2 * prec * rec / (prec + rec));
  }
  return best;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"em", em}, {"f1", f1}, {"n_examples", n_examples}};
  if (bleu1) j["bleu1"] = *bleu1;
  if (rouge_l) j["rouge_l"] = *rouge_l;
  return j;
}

MetricReport score_predictions(const std::vector<std::string>& preds, const std::vector<std::vector<std::string>>& golds,
                               bool with_generation) {
  if (preds.empty()) throw std::invalid_argument("score_predictions: no examples");
  if (preds.size() != golds.size()) throw std::invalid_argument("score_predictions: preds/golds length mismatch");
  double em = 0, f1 = 0, b = 0, r = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    em += exact_match(preds[i], golds[i]);
    f1 += f1_score(preds[i], golds[i]);
    if (with_generation) {
      b += bleu1(preds[i], golds[i]);
      r += rouge_l(preds[i], golds[i]);
    }
  }
  const double n = static_cast<double>(preds.size());
  MetricReport rep;
  rep.n_examples = static_cast<int>(preds.size());
  rep.em = 100.0 * em / n;
  rep.f1 = 100.0 * f1 / n;
  if (with_generation) {
    rep.bleu1 = 100.0 * b / n;
    rep.rouge_l = 100.0 * r / n;
  }
  return rep;
}

std::vector<std::string> predict_answers(mrc::MrcModel& model, const corpus::Vocabulary& vocab,
                                         const std::vector<corpus::QAExample>& examples) {
  std::vector<std::string> out;
  out.reserve(examples.size());
  for (const corpus::QAExample& ex : examples) {
    const corpus::AnswerSpan s = mrc::predict(model, vocab, ex);
    out.push_back(ex.passage->span_text(s.start, s.end));
  }
  return out;
}

MetricReport evaluate_model(mrc::MrcModel& model, const corpus::Vocabulary& vocab,
                            const std::vector<corpus::QAExample>& examples) {
  std::vector<std::vector<std::string>> golds;
  golds.reserve(examples.size());
  for (const corpus::QAExample& ex : examples)
    golds.push_back(ex.gold_answers.empty() ? std::vector<std::string>{ex.passage->span_text(ex.answer.start,
                                                                                             ex.answer.end)}
                                            : ex.gold_answers);
  return score_predictions(predict_answers(model, vocab, examples), golds);
}

}  // namespace adamrc::metrics
