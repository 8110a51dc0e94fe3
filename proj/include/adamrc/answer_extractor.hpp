#pragma once

#include <cstdint>
#include <vector>

#include "adamrc/corpus.hpp"

namespace adamrc::extract {

struct AnswerCandidate {
  corpus::AnswerSpan span;
  corpus::EntityType entity_type;
  friend bool operator==(const AnswerCandidate&, const AnswerCandidate&) = default;
};

inline constexpr int kDefaultMaxPerPassage = 3;

// One candidate per maximal B/I entity run, in position order; repeats of an
// already-seen surface string are dropped.
std::vector<AnswerCandidate> extract_candidates(const corpus::AnnotatedPassage& passage);

// Same rule on a bare tag sequence; `texts` (parallel to tags) drives the
// duplicate check.
std::vector<AnswerCandidate> extract_from_tags(const std::vector<int>& ner_tags, const std::vector<std::string>& texts);

// Uniform sample without replacement, returned in original order. Returns all
// candidates when there are at most max_per_passage.
std::vector<AnswerCandidate> sample_candidates(const std::vector<AnswerCandidate>& candidates, int max_per_passage,
                                               std::uint64_t seed);

}  // namespace adamrc::extract
