#include "adamrc/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <stdexcept>

#include "adamrc/adversary.hpp"
#include "adamrc/diagnostics.hpp"
#include "adamrc/qgen.hpp"
#include "adamrc/synthetic.hpp"
#include "adamrc/trainer.hpp"

namespace adamrc::pipeline {

Datasets synthetic_datasets(const config::RunConfig& cfg) {
  const synthetic::SyntheticCorpora c = synthetic::make_synthetic_domains(cfg.seed, cfg.synthetic_passages);
  const double train_fraction = 1.0 - cfg.dev_fraction;
  auto [s_train, s_dev] = synthetic::split_by_passage(c.source, train_fraction);
  auto [t_train, t_dev] = synthetic::split_by_passage(c.target, train_fraction);
  Datasets d;
  d.source_passages = std::move(s_train.passages);
  d.source_train = std::move(s_train.examples);
  d.source_dev = std::move(s_dev.examples);
  d.target_passages = std::move(t_train.passages);
  d.target_train = std::move(t_train.examples);
  d.target_dev = std::move(t_dev.examples);
  return d;
}

Datasets squad_datasets(const config::RunConfig& cfg) {
  const corpus::LoadOptions opt{cfg.max_passage_len, cfg.max_question_len};
  Datasets d;
  corpus::LoadResult s = corpus::load_squad_json(cfg.source_train, corpus::Domain::source, opt);
  corpus::LoadResult t = corpus::load_squad_json(cfg.target_train, corpus::Domain::target, opt);
  d.source_stats = s.stats;
  d.target_stats = t.stats;
  d.source_passages = std::move(s.passages);
  d.source_train = std::move(s.examples);
  d.target_passages = std::move(t.passages);
  d.target_train = std::move(t.examples);
  if (!cfg.source_dev.empty())
    d.source_dev = corpus::load_squad_json(cfg.source_dev, corpus::Domain::source, opt).examples;
  if (!cfg.target_dev.empty())
    d.target_dev = corpus::load_squad_json(cfg.target_dev, corpus::Domain::target, opt).examples;
  return d;
}

Datasets load_datasets(const config::RunConfig& cfg) {
  return cfg.mode == "squad" ? squad_datasets(cfg) : synthetic_datasets(cfg);
}

corpus::Vocabulary build_run_vocab(const Datasets& data, const config::RunConfig& cfg) {
  std::vector<std::string> stream = corpus::token_stream(data.source_train);
  for (const std::string& t : corpus::token_stream(data.target_passages)) stream.push_back(t);
  return corpus::build_vocab(stream, cfg.vocab_min_count, cfg.vocab_max_size, cfg.word_dim);
}

corpus::EmbeddingTable run_embeddings(const config::RunConfig& cfg, const corpus::Vocabulary& vocab) {
  if (!cfg.embeddings.empty()) return corpus::load_pretrained_embeddings(cfg.embeddings, vocab, cfg.seed + 101);
  if (cfg.mode == "synthetic" && cfg.fixture_vectors) return synthetic::fixture_word_vectors(vocab, cfg.seed + 101);
  return corpus::random_embeddings(vocab, cfg.seed + 101);
}

mrc::MrcConfig mrc_config(const config::RunConfig& cfg, const corpus::Vocabulary& vocab) {
  mrc::MrcConfig m = cfg.mrc;
  m.vocab_size = vocab.size();
  m.word_dim = cfg.word_dim;
  m.dropout = cfg.train.dropout;
  return m;
}

qgen::QGenConfig qgen_config(const config::RunConfig& cfg, const corpus::Vocabulary& vocab) {
  qgen::QGenConfig q = cfg.qgen;
  q.vocab_size = vocab.size();
  q.word_dim = cfg.word_dim;
  q.max_passage_len = cfg.max_passage_len;
  return q;
}

ExperimentOutcome run_experiment(const config::RunConfig& cfg) {
  cfg.validate();
  ExperimentOutcome out;
  const Datasets data = load_datasets(cfg);
  if (data.target_dev.empty()) throw std::invalid_argument("run_experiment: no labeled target dev set");
  const corpus::Vocabulary vocab = build_run_vocab(data, cfg);
  spdlog::info("seed {}: {} source train, {} source dev, {} target passages, {} target dev, vocab {}", cfg.seed,
               data.source_train.size(), data.source_dev.size(), data.target_passages.size(), data.target_dev.size(),
               vocab.size());
  const corpus::EmbeddingTable emb = run_embeddings(cfg, vocab);

  // Question generation and T_gen.
  qgen::QGenModel qg = qgen::QGenModel::create(qgen_config(cfg, vocab), cfg.seed + 1, &emb);
  qgen::TrainOptions qopt;
  qopt.epochs = cfg.qgen_epochs;
  qopt.batch_size = cfg.qgen_batch_size;
  qopt.lr = cfg.qgen_lr;
  qopt.clip_norm = cfg.train.clip_norm;
  qopt.seed = cfg.seed + 2;
  const qgen::TrainLog qlog = qgen::qgen_train(qg, vocab, data.source_train, qopt);
  if (!qlog.epoch_nll.empty()) spdlog::info("qgen final epoch nll {:.4f}", qlog.epoch_nll.back());
  const std::vector<corpus::QAExample> tgen =
      qgen::build_tgen(data.target_passages, qg, vocab, {cfg.max_per_passage, cfg.seed + 3});
  out.tgen_size = tgen.size();
  {
    double b = 0;
    const std::size_t n = std::min<std::size_t>(data.target_dev.size(), 50);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ex = data.target_dev[i];
      std::string q;
      for (const auto& t : qgen::qgen_generate(qg, vocab, *ex.passage, ex.answer)) q += (q.empty() ? "" : " ") + t;
      b += metrics::bleu1(q, {ex.question_text});
    }
    out.qg_bleu1 = n ? 100.0 * b / static_cast<double>(n) : 0.0;
  }
  spdlog::info("T_gen: {} synthetic examples; QG BLEU-1 on target dev {:.1f}", tgen.size(), out.qg_bleu1);
  if (!tgen.empty()) spdlog::info("sample: {}", tgen.front().question_text);

  // Source-only reader.
  mrc::MrcModel base = mrc::MrcModel::create(mrc_config(cfg, vocab), cfg.seed + 4, &emb);
  train::TrainConfig scfg = cfg.train;
  scfg.epochs = cfg.source_epochs;
  scfg.seed = cfg.seed + 5;
  train::train_source(base, vocab, data.source_train, data.source_dev, scfg);
  out.source_only = metrics::evaluate_model(base, vocab, data.target_dev);
  spdlog::info("source-only target dev EM {:.2f} F1 {:.2f}", out.source_only.em, out.source_only.f1);

  // Adaptation from theta^s.
  mrc::MrcModel adapted = base;
  adversary::DomainClassifier clf =
      adversary::DomainClassifier::create(2 * cfg.mrc.hidden, cfg.train.classifier_hidden, cfg.seed + 6);
  train::TrainConfig acfg = cfg.train;
  acfg.seed = cfg.seed + 7;
  train::adapt(adapted, clf, vocab, data.source_train, tgen, data.target_dev, acfg);
  out.adapted = metrics::evaluate_model(adapted, vocab, data.target_dev);
  spdlog::info("adapted target dev EM {:.2f} F1 {:.2f}", out.adapted.em, out.adapted.f1);

  {
    mrc::MrcModel ctl = base;
    adversary::DomainClassifier cclf =
        adversary::DomainClassifier::create(2 * cfg.mrc.hidden, cfg.train.classifier_hidden, cfg.seed + 6);
    train::TrainConfig ccfg = acfg;
    ccfg.lambda_gamma = 0.0;
    train::adapt(ctl, cclf, vocab, data.source_train, tgen, data.target_dev, ccfg);
    out.control = metrics::evaluate_model(ctl, vocab, data.target_dev);
    spdlog::info("control (lambda = 0) target dev EM {:.2f} F1 {:.2f}", out.control.em, out.control.f1);
  }

  // Diagnostics on dev features, both pooled with the trained classifier.
  const auto before = diag::collect_features(base, clf, vocab, data.source_dev, data.target_dev, cfg.diag_samples,
                                             cfg.seed + 8);
  const auto after = diag::collect_features(adapted, clf, vocab, data.source_dev, data.target_dev, cfg.diag_samples,
                                            cfg.seed + 8);
  out.kl_before = diag::domain_kl(before);
  out.kl_after = diag::domain_kl(after);
  out.probe_before = diag::probe_accuracy(before, cfg.seed + 9);
  out.probe_after = diag::probe_accuracy(after, cfg.seed + 9);
  spdlog::info("probe accuracy {:.3f} -> {:.3f}; KL {:.4f} -> {:.4f}", out.probe_before, out.probe_after,
               out.kl_before, out.kl_after);
  return out;
}

}  // namespace adamrc::pipeline
