#pragma once

// Templated two-domain QA corpora for desk-scale adaptation experiments.
//
// The source domain reads like an encyclopedia: declarative sentences with a
// fixed set of relation phrasings. The target domain reads like newswire: the
// same relations are mostly paraphrased, passages carry reporting boilerplate
// and capitalised distractors, and the entity inventory only partly overlaps.

#include <cstdint>
#include <vector>

#include "adamrc/annotator.hpp"
#include "adamrc/corpus.hpp"

namespace adamrc::synthetic {

struct DomainCorpus {
  std::vector<corpus::PassagePtr> passages;
  std::vector<corpus::QAExample> examples;
};

struct SyntheticCorpora {
  DomainCorpus source;
  DomainCorpus target;
};

struct SyntheticOptions {
  int questions_per_passage = 2;
  // Probability that a target-domain fact uses its newswire paraphrase.
  double target_paraphrase_prob = 0.75;
  // Maximum boilerplate sentences added to a target passage.
  int target_max_filler = 2;
};

SyntheticCorpora make_synthetic_domains(std::uint64_t seed, int n_passages_per_domain,
                                        SyntheticOptions options = {});

// Entity inventory used by the generator, as a gazetteer for the annotator.
corpus::Gazetteer fixture_gazetteer();

// Stand-in for pretrained word vectors on the fixture vocabulary. Each
// paraphrase pair (founded/launched, employs/workforce, ...) shares one base
// vector up to small noise, names of one entity kind and all numerals sit in
// one cluster per kind, and every other word keeps its random_embeddings row.
corpus::EmbeddingTable fixture_word_vectors(const corpus::Vocabulary& vocab, std::uint64_t seed);

// Jaccard index of the two domains' token sets (passages and questions).
double vocabulary_jaccard(const DomainCorpus& a, const DomainCorpus& b);

// Splits a corpus by passage: the first `train_fraction` of passages (in
// generation order) and their examples form the first part.
std::pair<DomainCorpus, DomainCorpus> split_by_passage(const DomainCorpus& c, double train_fraction);

}  // namespace adamrc::synthetic
