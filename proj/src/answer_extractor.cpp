#include "adamrc/answer_extractor.hpp"

#include <set>
#include <stdexcept>

#include "adamrc/rng.hpp"

namespace adamrc::extract {

using corpus::kNerOutside;

std::vector<AnswerCandidate> extract_from_tags(const std::vector<int>& tags, const std::vector<std::string>& texts) {
  if (tags.size() != texts.size()) throw std::invalid_argument("extract_from_tags: length mismatch");
  std::vector<AnswerCandidate> out;
  std::set<std::string> seen;
  std::size_t i = 0;
  while (i < tags.size()) {
    if (tags[i] == kNerOutside) {
      ++i;
      continue;
    }
    // A run opens at any non-O tag (a stray I- is treated as B-) and continues
    // over I- tags of the same type.
    const corpus::EntityType type = corpus::ner_type(tags[i]);
    std::size_t j = i + 1;
    while (j < tags.size() && tags[j] == corpus::ner_inside(type)) ++j;
    std::string surface;
    for (std::size_t k = i; k < j; ++k) {
      if (k > i) surface += ' ';
      surface += texts[k];
    }
    if (seen.insert(surface).second)
      out.push_back({{static_cast<int>(i), static_cast<int>(j - 1)}, type});
    i = j;
  }
  return out;
}

std::vector<AnswerCandidate> extract_candidates(const corpus::AnnotatedPassage& passage) {
  std::vector<int> tags;
  std::vector<std::string> texts;
  tags.reserve(passage.tokens.size());
  texts.reserve(passage.tokens.size());
  for (const corpus::Token& t : passage.tokens) {
    tags.push_back(t.ner);
    texts.push_back(t.text);
  }
  return extract_from_tags(tags, texts);
}

std::vector<AnswerCandidate> sample_candidates(const std::vector<AnswerCandidate>& candidates, int max_per_passage,
                                               std::uint64_t seed) {
  if (max_per_passage < 1) throw std::invalid_argument("sample_candidates: max_per_passage must be >= 1");
  if (candidates.size() <= static_cast<std::size_t>(max_per_passage)) return candidates;
  std::vector<AnswerCandidate> out;
  for (std::size_t idx : sample_indices(candidates.size(), static_cast<std::size_t>(max_per_passage), seed))
    out.push_back(candidates[idx]);
  return out;
}

}  // namespace adamrc::extract
