#pragma once

// In-memory wiring of the full workflow: data, vocabulary, question
// generation, source training, adaptation and diagnostics.

#include <cstdint>
#include <vector>

#include "adamrc/config.hpp"
#include "adamrc/corpus.hpp"
#include "adamrc/metrics.hpp"

namespace adamrc::pipeline {

struct Datasets {
  std::vector<corpus::PassagePtr> source_passages;  // training split
  std::vector<corpus::PassagePtr> target_passages;  // unlabeled training split
  std::vector<corpus::QAExample> source_train, source_dev;
  std::vector<corpus::QAExample> target_train;  // labels used only by the semi-supervised mode
  std::vector<corpus::QAExample> target_dev;
  corpus::LoadStats source_stats, target_stats;
};

Datasets synthetic_datasets(const config::RunConfig& cfg);
Datasets squad_datasets(const config::RunConfig& cfg);
Datasets load_datasets(const config::RunConfig& cfg);

// Source passages and questions plus unlabeled target passages.
corpus::Vocabulary build_run_vocab(const Datasets& data, const config::RunConfig& cfg);

// Initial word vectors: vocab.embeddings when set, else fixture vectors in
// synthetic mode (vocab.fixture_vectors = 1), else random rows.
corpus::EmbeddingTable run_embeddings(const config::RunConfig& cfg, const corpus::Vocabulary& vocab);

mrc::MrcConfig mrc_config(const config::RunConfig& cfg, const corpus::Vocabulary& vocab);
qgen::QGenConfig qgen_config(const config::RunConfig& cfg, const corpus::Vocabulary& vocab);

struct ExperimentOutcome {
  metrics::MetricReport source_only;  // theta^s on target dev
  metrics::MetricReport adapted;      // theta* on target dev
  // Same loop, batches and model selection as the adaptation run but with
  // lambda held at 0, so T_gen never reaches the encoder.
  metrics::MetricReport control;
  double probe_before = 0, probe_after = 0;
  double kl_before = 0, kl_after = 0;
  std::size_t tgen_size = 0;
  double qg_bleu1 = 0;  // generated vs. gold questions on target dev answers
};

// Runs every stage for cfg.seed.
ExperimentOutcome run_experiment(const config::RunConfig& cfg);

}  // namespace adamrc::pipeline
