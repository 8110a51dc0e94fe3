#include "adamrc/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace adamrc::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (k_s < 1 || k_t < 1) throw std::invalid_argument("train: k_s and k_t must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (lr_halving_period < 1) throw std::invalid_argument("train: lr_halving_period must be >= 1");
  if (dropout < 0 || dropout >= 1) throw std::invalid_argument("train: dropout must be in [0, 1)");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (steps_per_epoch < 0) throw std::invalid_argument("train: steps_per_epoch must be >= 0");
  if (!std::isfinite(lambda_gamma) || lambda_gamma < 0) throw std::invalid_argument("train: lambda_gamma must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw std::invalid_argument("train: betas must be in [0, 1)");
  if (semi_supervised_ratio < 0 || semi_supervised_ratio > 1)
    throw std::invalid_argument("train: semi_supervised_ratio must be in [0, 1]");
  if (classifier_hidden < 1) throw std::invalid_argument("train: classifier_hidden must be >= 1");
  if (log_every < 0) throw std::invalid_argument("train: log_every must be >= 0");
}

json TrainConfig::to_json() const {
  return {{"k_s", k_s},
          {"k_t", k_t},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"lr_halving_period", lr_halving_period},
          {"dropout", dropout},
          {"epochs", epochs},
          {"steps_per_epoch", steps_per_epoch},
          {"seed", seed},
          {"lambda_gamma", lambda_gamma},
          {"beta1", beta1},
          {"beta2", beta2},
          {"clip_norm", clip_norm},
          {"semi_supervised_ratio", semi_supervised_ratio},
          {"classifier_hidden", classifier_hidden}};
}

double lambda_schedule(double progress, double gamma) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return 2.0 / (1.0 + std::exp(-gamma * p)) - 1.0;
}

double learning_rate_at_epoch(const TrainConfig& config, int epoch) {
  return config.learning_rate * std::pow(0.5, std::floor(static_cast<double>(epoch) / config.lr_halving_period));
}

// ---------------------------------------------------------------------------
// Streams

ShuffleCycle::ShuffleCycle(std::size_t n, Rng rng) : order_(n), rng_(rng) {
  std::iota(order_.begin(), order_.end(), 0);
  pos_ = n;  // shuffle on first draw
}

std::size_t ShuffleCycle::next() {
  if (order_.empty()) throw std::logic_error("ShuffleCycle: empty stream");
  if (pos_ == order_.size()) {
    rng_.shuffle(order_);
    pos_ = 0;
    ++passes_;
  }
  return order_[pos_++];
}

MinibatchComposer::MinibatchComposer(std::vector<StreamItem> source, std::vector<StreamItem> target, int k_s, int k_t,
                                     std::uint64_t seed)
    : source_(std::move(source)),
      target_(std::move(target)),
      k_s_(k_s),
      k_t_(k_t),
      source_cycle_(source_.size(), Rng(seed).fork(11)),
      target_cycle_(target_.size(), Rng(seed).fork(12)) {
  if (k_s < 1 || k_t < 0) throw std::invalid_argument("MinibatchComposer: need k_s >= 1 and k_t >= 0");
  if (source_.empty()) throw std::invalid_argument("MinibatchComposer: empty source stream");
  if (k_t > 0 && target_.empty())
    throw std::invalid_argument("MinibatchComposer: empty target stream (run gen-questions to build T_gen)");
}

Minibatch MinibatchComposer::next() {
  Minibatch b;
  b.items.reserve(static_cast<std::size_t>(k_s_ + k_t_));
  for (int i = 0; i < k_s_; ++i) b.items.push_back(source_[source_cycle_.next()]);
  for (int i = 0; i < k_t_; ++i) b.items.push_back(target_[target_cycle_.next()]);
  b.n_source = k_s_;
  b.n_target = k_t_;
  return b;
}

std::vector<StreamItem> source_stream(const std::vector<corpus::QAExample>& source) {
  std::vector<StreamItem> out;
  out.reserve(source.size());
  for (const auto& ex : source) out.push_back({&ex, true, corpus::Domain::source});
  return out;
}

std::vector<StreamItem> target_stream(const std::vector<corpus::QAExample>& tgen,
                                      const std::vector<corpus::QAExample>& labeled_target, double k,
                                      std::uint64_t seed) {
  if (k < 0 || k > 1) throw std::invalid_argument("target_stream: k must be in [0, 1]");
  if (k > 0 && labeled_target.empty())
    throw std::invalid_argument("target_stream: k > 0 requires labeled target data");
  std::vector<StreamItem> out;
  for (const auto& ex : tgen) out.push_back({&ex, false, corpus::Domain::target});
  const auto m = static_cast<std::size_t>(std::llround(k * static_cast<double>(labeled_target.size())));
  for (std::size_t idx : sample_indices(labeled_target.size(), m, seed ^ 0x5e1ec7edULL))
    out.push_back({&labeled_target[idx], true, corpus::Domain::target});
  return out;
}

// ---------------------------------------------------------------------------
// Gradients

BatchLoss accumulate_batch_gradients(mrc::MrcModel& model, adversary::DomainClassifier* classifier,
                                     const corpus::Vocabulary& vocab, const Minibatch& batch, double lambda,
                                     mrc::Mode mode, Rng* rng) {
  if (batch.items.empty()) throw std::invalid_argument("accumulate_batch_gradients: empty batch");
  BatchLoss out;
  for (const StreamItem& it : batch.items) out.n_supervised += it.supervised;
  const double inv_sup = out.n_supervised > 0 ? 1.0 / out.n_supervised : 0.0;
  const double inv_all = 1.0 / static_cast<double>(batch.items.size());

  for (const StreamItem& it : batch.items) {
    const corpus::QAExample& ex = *it.example;
    ag::Graph g;
    const mrc::EncoderOutput enc = mrc::encode(g, model, mrc::lexicon_input(vocab, ex.passage->tokens),
                                               mrc::lexicon_input(vocab, ex.question), mode, rng);
    std::vector<ag::Var> terms;
    double nll = 0.0, bce = 0.0;
    if (it.supervised) {
      const mrc::SpanVars span = mrc::decode(g, model, enc, mode, rng);
      ag::Var l = mrc::answer_nll(g, span, ex.answer);
      nll = l.scalar();
      terms.push_back(ag::scale(l, inv_sup));
    }
    if (classifier) {
      ag::Var mp = adversary::gradient_reversal(enc.passage_memory, lambda);
      ag::Var mq = adversary::gradient_reversal(enc.question_summary, lambda);
      ag::Var l = adversary::domain_bce(adversary::domain_logit(g, *classifier, mp, mq), it.domain);
      bce = l.scalar();
      terms.push_back(ag::scale(l, inv_all));
    }
    if (!std::isfinite(nll) || !std::isfinite(bce))
      throw nn::DivergenceError("non-finite loss on example " + ex.id);
    out.answer += nll * inv_sup;
    out.domain += bce * inv_all;
    if (terms.empty()) continue;
    ag::Var total = terms.size() == 1 ? terms[0] : ag::add(terms[0], terms[1]);
    g.backward(total);
  }
  return out;
}

bool better(const metrics::MetricReport& a, const metrics::MetricReport& b) {
  return a.f1 > b.f1 || (a.f1 == b.f1 && a.em > b.em);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

class JsonlLog {
 public:
  explicit JsonlLog(const std::optional<std::filesystem::path>& path) {
    if (!path) return;
    if (path->has_parent_path()) std::filesystem::create_directories(path->parent_path());
    out_.open(*path, std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open training log " + path->string());
  }
  void write(const StepRecord& r, const metrics::MetricReport* dev) {
    if (!out_.is_open()) return;
    json j = {{"step", r.step},       {"epoch", r.epoch},         {"lambda", r.lambda},
              {"lr", r.lr},           {"loss_answer", r.loss_answer}, {"loss_domain", r.loss_domain},
              {"dev_em", nullptr},    {"dev_f1", nullptr}};
    if (dev) {
      j["dev_em"] = dev->em;
      j["dev_f1"] = dev->f1;
    }
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::vector<ag::FMatrix> snapshot(const nn::ParamRefs& params) {
  std::vector<ag::FMatrix> out;
  out.reserve(params.size());
  for (const ag::Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const nn::ParamRefs& params, const std::vector<ag::FMatrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = values[i];
    params[i]->zero_grad();
  }
}

TrainResult run(mrc::MrcModel& model, adversary::DomainClassifier* classifier, const corpus::Vocabulary& vocab,
                std::vector<StreamItem> source, std::vector<StreamItem> target, int k_s, int k_t,
                const std::vector<corpus::QAExample>& dev, const TrainConfig& cfg, const TrainHooks& hooks,
                const char* phase) {
  cfg.validate();
  if (vocab.size() != model.config().vocab_size)
    throw std::invalid_argument("training: vocabulary size does not match model");
  model.mutable_config().dropout = cfg.dropout;
  const std::size_t n_source = source.size();
  MinibatchComposer composer(std::move(source), std::move(target), k_s, k_t, cfg.seed);

  nn::ParamRefs params = model.params();
  if (classifier)
    for (ag::Parameter* p : classifier->params()) params.push_back(p);
  nn::Adamax opt(params, {cfg.beta1, cfg.beta2, 1e-8, cfg.clip_norm});
  opt.zero_grad();
  Rng dropout_rng = Rng(cfg.seed).fork(13);

  const long steps_per_epoch = cfg.steps_per_epoch > 0
                                   ? cfg.steps_per_epoch
                                   : static_cast<long>((n_source + static_cast<std::size_t>(k_s) - 1) /
                                                       static_cast<std::size_t>(k_s));
  const long total_steps = steps_per_epoch * cfg.epochs;
  JsonlLog log(hooks.log_path);

  TrainResult result;
  std::vector<ag::FMatrix> best;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at_epoch(cfg, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    for (long s = 0; s < steps_per_epoch; ++s, ++step) {
      const double lambda =
          classifier ? lambda_schedule(static_cast<double>(step) / static_cast<double>(total_steps), cfg.lambda_gamma)
                     : 0.0;
      const Minibatch batch = composer.next();
      const BatchLoss loss =
          accumulate_batch_gradients(model, classifier, vocab, batch, lambda, mrc::Mode::train, &dropout_rng);
      opt.step(lr);
      opt.zero_grad();
      if (!nn::all_finite(params))
        throw nn::DivergenceError(std::string(phase) + ": non-finite parameters after step " + std::to_string(step));
      const StepRecord sr{step, epoch, lambda, lr, loss.answer, loss.domain};
      if (hooks.on_batch) hooks.on_batch(batch, sr);
      if (cfg.log_every > 0 && step % cfg.log_every == 0) log.write(sr, nullptr);
      rec.lambda = lambda;
      rec.loss_answer += loss.answer / static_cast<double>(steps_per_epoch);
      rec.loss_domain += loss.domain / static_cast<double>(steps_per_epoch);
    }
    if (!dev.empty()) rec.dev = metrics::evaluate_model(model, vocab, dev);
    spdlog::info("{} epoch {} lr {:.5f} lambda {:.4f} answer {:.4f} domain {:.4f} dev EM {:.2f} F1 {:.2f}", phase,
                 epoch, lr, rec.lambda, rec.loss_answer, rec.loss_domain, rec.dev.em, rec.dev.f1);
    log.write({step, epoch, rec.lambda, lr, rec.loss_answer, rec.loss_domain}, dev.empty() ? nullptr : &rec.dev);
    if (result.best_epoch < 0 || dev.empty() || better(rec.dev, result.best_dev)) {
      result.best_epoch = epoch;
      result.best_dev = rec.dev;
      best = snapshot(params);
    }
    result.epochs.push_back(rec);
  }
  result.steps = step;
  restore(params, best);
  return result;
}

}  // namespace

TrainResult train_source(mrc::MrcModel& model, const corpus::Vocabulary& vocab,
                         const std::vector<corpus::QAExample>& source, const std::vector<corpus::QAExample>& dev,
                         const TrainConfig& config, const TrainHooks& hooks) {
  if (source.empty()) throw std::invalid_argument("train_source: empty source set");
  return run(model, nullptr, vocab, source_stream(source), {}, config.batch_size, 0, dev, config, hooks,
             "source");
}

TrainResult adapt(mrc::MrcModel& model, adversary::DomainClassifier& classifier, const corpus::Vocabulary& vocab,
                  const std::vector<corpus::QAExample>& source, const std::vector<corpus::QAExample>& tgen,
                  const std::vector<corpus::QAExample>& target_dev, const TrainConfig& config,
                  const TrainHooks& hooks) {
  return adapt_semi_supervised(model, classifier, vocab, source, {}, tgen, target_dev, config, 0.0, hooks);
}

TrainResult adapt_semi_supervised(mrc::MrcModel& model, adversary::DomainClassifier& classifier,
                                  const corpus::Vocabulary& vocab, const std::vector<corpus::QAExample>& source,
                                  const std::vector<corpus::QAExample>& labeled_target,
                                  const std::vector<corpus::QAExample>& tgen,
                                  const std::vector<corpus::QAExample>& target_dev, const TrainConfig& config,
                                  double k, const TrainHooks& hooks) {
  if (source.empty()) throw std::invalid_argument("adapt: empty source set");
  if (tgen.empty()) throw std::invalid_argument("adapt: T_gen is empty; run build_tgen (gen-questions) first");
  if (classifier.memory_dim() != 2 * model.config().hidden)
    throw std::invalid_argument("adapt: classifier width does not match encoder");
  return run(model, &classifier, vocab, source_stream(source), target_stream(tgen, labeled_target, k, config.seed),
             config.k_s, config.k_t, target_dev, config, hooks, "adapt");
}

}  // namespace adamrc::train
