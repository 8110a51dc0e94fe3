#pragma once

// Source pre-training and adversarial adaptation of the reader.
//
// One adaptation step: k_s labeled source items and k_t target items (pseudo
// labeled, plus optional labeled target) are encoded; supervised items add the
// answer NLL, every item adds the domain BCE computed through a gradient
// reversal layer, and a single Adamax step updates encoder, decoder and
// classifier together.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "adamrc/adversary.hpp"
#include "adamrc/corpus.hpp"
#include "adamrc/metrics.hpp"
#include "adamrc/mrc.hpp"
#include "adamrc/nn.hpp"
#include "json.hpp"

namespace adamrc::train {

struct TrainConfig {
  int k_s = 16;
  int k_t = 8;
  int batch_size = 32;  // source-only training
  double learning_rate = 0.002;
  int lr_halving_period = 10;  // epochs
  double dropout = 0.3;
  int epochs = 30;
  int steps_per_epoch = 0;  // 0: one pass over the source set
  std::uint64_t seed = 1;
  double lambda_gamma = 10.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double clip_norm = 5.0;
  double semi_supervised_ratio = 0.0;
  int classifier_hidden = adversary::kDefaultMlpHidden;
  int log_every = 0;  // per-step log lines every n steps; 0 = epoch lines only

  void validate() const;
  nlohmann::json to_json() const;
};

// 2 / (1 + exp(-gamma p)) - 1, with p clamped to [0, 1].
double lambda_schedule(double progress, double gamma);
// base * 0.5^floor(epoch / period), epochs counted from 0.
double learning_rate_at_epoch(const TrainConfig& config, int epoch);

struct StreamItem {
  const corpus::QAExample* example = nullptr;
  bool supervised = false;  // contributes to the answer loss
  corpus::Domain domain = corpus::Domain::source;
};

struct Minibatch {
  std::vector<StreamItem> items;  // source block, then target block
  int n_source = 0;
  int n_target = 0;
};

// Visits every index of [0, n) once per pass in a fresh shuffled order.
class ShuffleCycle {
 public:
  ShuffleCycle(std::size_t n, Rng rng);
  std::size_t next();
  long passes() const { return passes_; }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  long passes_ = 0;
  Rng rng_;
};

class MinibatchComposer {
 public:
  // k_t may be 0 (source-only batches). Throws on an empty stream that is needed.
  MinibatchComposer(std::vector<StreamItem> source, std::vector<StreamItem> target, int k_s, int k_t,
                    std::uint64_t seed);
  Minibatch next();

 private:
  std::vector<StreamItem> source_, target_;
  int k_s_, k_t_;
  ShuffleCycle source_cycle_, target_cycle_;
};

std::vector<StreamItem> source_stream(const std::vector<corpus::QAExample>& source);
// Synthetic target items (unsupervised for the answer loss) followed by
// round(k * |labeled|) labeled target items chosen with a seed-derived sample.
std::vector<StreamItem> target_stream(const std::vector<corpus::QAExample>& tgen,
                                      const std::vector<corpus::QAExample>& labeled_target, double k,
                                      std::uint64_t seed);

struct BatchLoss {
  double answer = 0.0;  // mean over supervised items (0 if none)
  double domain = 0.0;  // mean over all items (0 without classifier)
  int n_supervised = 0;
};

// Runs forward/backward for one batch and adds gradients into the parameters
// (it does not zero them first). classifier == nullptr skips the domain loss.
BatchLoss accumulate_batch_gradients(mrc::MrcModel& model, adversary::DomainClassifier* classifier,
                                     const corpus::Vocabulary& vocab, const Minibatch& batch, double lambda,
                                     mrc::Mode mode, Rng* rng);

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double lambda = 0.0;
  double lr = 0.0;
  double loss_answer = 0.0;
  double loss_domain = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double lambda = 0.0;  // at the last step of the epoch
  double loss_answer = 0.0;
  double loss_domain = 0.0;
  metrics::MetricReport dev;
};

struct TrainResult {
  int best_epoch = -1;
  metrics::MetricReport best_dev;
  std::vector<EpochRecord> epochs;
  long steps = 0;
};

struct TrainHooks {
  std::function<void(const Minibatch&, const StepRecord&)> on_batch;
  std::optional<std::filesystem::path> log_path;  // JSONL training log
};

// Better = higher F1, EM breaks ties.
bool better(const metrics::MetricReport& a, const metrics::MetricReport& b);

// Supervised training on the labeled source set. Keeps the parameters of the
// best epoch on `dev`.
TrainResult train_source(mrc::MrcModel& model, const corpus::Vocabulary& vocab,
                         const std::vector<corpus::QAExample>& source, const std::vector<corpus::QAExample>& dev,
                         const TrainConfig& config, const TrainHooks& hooks = {});

// Adversarial adaptation starting from the current model parameters. Keeps the
// parameters of the best epoch on the target dev set.
TrainResult adapt(mrc::MrcModel& model, adversary::DomainClassifier& classifier, const corpus::Vocabulary& vocab,
                  const std::vector<corpus::QAExample>& source, const std::vector<corpus::QAExample>& tgen,
                  const std::vector<corpus::QAExample>& target_dev, const TrainConfig& config,
                  const TrainHooks& hooks = {});

// As adapt, with round(k * |labeled|) labeled target items joining the answer
// loss while keeping the target domain label. k = 0 is exactly adapt.
TrainResult adapt_semi_supervised(mrc::MrcModel& model, adversary::DomainClassifier& classifier,
                                  const corpus::Vocabulary& vocab, const std::vector<corpus::QAExample>& source,
                                  const std::vector<corpus::QAExample>& labeled_target,
                                  const std::vector<corpus::QAExample>& tgen,
                                  const std::vector<corpus::QAExample>& target_dev, const TrainConfig& config,
                                  double k, const TrainHooks& hooks = {});

}  // namespace adamrc::train
