#include <fstream>
#include <cmath>
#include <map>
#include <set>

#include "adamrc/checkpoint.hpp"
#include "adamrc/synthetic.hpp"
#include "adamrc/trainer.hpp"
#include "doctest.h"

using namespace adamrc;
using namespace adamrc::train;
using corpus::Domain;
using corpus::QAExample;

namespace {

struct Fixture {
  synthetic::SyntheticCorpora corpora;
  std::vector<QAExample> tgen;  // target passages with pseudo questions, unsupervised
  corpus::Vocabulary vocab;
};

// Synthetic target examples stand in for T_gen: same shape, provenance flipped.
Fixture make_fixture(int n = 20) {
  Fixture f;
  f.corpora = synthetic::make_synthetic_domains(4, n);
  for (const auto& ex : f.corpora.target.examples) {
    QAExample s = ex;
    s.provenance = corpus::Provenance::synthetic;
    f.tgen.push_back(s);
  }
  std::vector<std::string> tokens = corpus::token_stream(f.corpora.source.examples);
  for (const auto& t : corpus::token_stream(f.corpora.target.examples)) tokens.push_back(t);
  f.vocab = corpus::build_vocab(tokens, 1, 100000, 8);
  return f;
}

mrc::MrcConfig tiny_mrc(int vocab_size) {
  mrc::MrcConfig c;
  c.vocab_size = vocab_size;
  c.word_dim = 8;
  c.pos_dim = 4;
  c.ner_dim = 4;
  c.hidden = 8;
  c.answer_steps = 2;
  return c;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.k_s = 4;
  c.k_t = 2;
  c.batch_size = 4;
  c.epochs = 2;
  c.steps_per_epoch = 3;
  c.seed = 5;
  c.classifier_hidden = 6;
  return c;
}

std::vector<ag::FMatrix> values(const nn::ParamRefs& params) {
  std::vector<ag::FMatrix> v;
  for (const auto* p : params) v.push_back(p->value);
  return v;
}

}  // namespace

TEST_CASE("lambda schedule") {
  CHECK(lambda_schedule(0.0, 10.0) == 0.0);
  CHECK(lambda_schedule(0.5, 10.0) == doctest::Approx(0.98661).epsilon(1e-5 / 0.98661));
  CHECK(std::abs(lambda_schedule(0.5, 10.0) - 0.98661) < 1e-5);
  CHECK(std::abs(lambda_schedule(1.0, 10.0) - 0.99991) < 1e-5);
  CHECK(lambda_schedule(-1.0, 10.0) == 0.0);
  CHECK(lambda_schedule(2.0, 10.0) == lambda_schedule(1.0, 10.0));
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double l = lambda_schedule(i / 1000.0, 10.0);
    CHECK(l >= prev);
    prev = l;
  }
}

TEST_CASE("learning-rate halving") {
  TrainConfig c;
  CHECK(learning_rate_at_epoch(c, 0) == 0.002);
  CHECK(learning_rate_at_epoch(c, 9) == 0.002);
  CHECK(learning_rate_at_epoch(c, 10) == 0.001);
  CHECK(learning_rate_at_epoch(c, 20) == 0.0005);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.k_t = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.learning_rate = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.semi_supervised_ratio = 1.5;
  CHECK_THROWS(c.validate());
}

TEST_CASE("minibatch composition: exact counts, block order, per-pass coverage, cycling") {
  Fixture f = make_fixture();
  auto src = source_stream(f.corpora.source.examples);
  std::vector<QAExample> tiny_tgen(f.tgen.begin(), f.tgen.begin() + 3);
  MinibatchComposer composer(src, target_stream(tiny_tgen, {}, 0.0, 1), 16, 8, 9);

  const std::size_t n = src.size();
  std::map<const QAExample*, int> seen;
  std::size_t drawn = 0;
  for (int b = 0; b < 50; ++b) {
    Minibatch batch = composer.next();
    REQUIRE(batch.items.size() == 24);
    CHECK(batch.n_source == 16);
    CHECK(batch.n_target == 8);
    for (int i = 0; i < 16; ++i) {
      CHECK(batch.items[static_cast<std::size_t>(i)].domain == Domain::source);
      CHECK(batch.items[static_cast<std::size_t>(i)].supervised);
      // Every source example appears once per pass before any repeats.
      const auto* ex = batch.items[static_cast<std::size_t>(i)].example;
      const std::size_t pass = drawn / n;
      CHECK(seen[ex] == static_cast<int>(pass));
      ++seen[ex];
      ++drawn;
    }
    std::map<const QAExample*, int> tcount;
    for (int i = 16; i < 24; ++i) {
      const auto& it = batch.items[static_cast<std::size_t>(i)];
      CHECK(it.domain == Domain::target);
      CHECK_FALSE(it.supervised);
      ++tcount[it.example];
    }
    // Three T_gen items spread over eight slots.
    CHECK(tcount.size() == 3);
  }

  CHECK_THROWS_AS(MinibatchComposer(src, {}, 16, 8, 1), std::invalid_argument);
}

TEST_CASE("target_stream sampling of labeled target items") {
  Fixture f = make_fixture(60);
  std::vector<QAExample> labeled(f.corpora.target.examples.begin(), f.corpora.target.examples.begin() + 100);
  REQUIRE(labeled.size() == 100);
  auto half = target_stream(f.tgen, labeled, 0.5, 3);
  auto half2 = target_stream(f.tgen, labeled, 0.5, 3);
  std::vector<const QAExample*> chosen, chosen2;
  for (const auto& it : half)
    if (it.supervised) chosen.push_back(it.example);
  for (const auto& it : half2)
    if (it.supervised) chosen2.push_back(it.example);
  CHECK(chosen.size() == 50);
  CHECK(chosen == chosen2);
  for (const auto& it : half) CHECK(it.domain == Domain::target);
  CHECK(half.size() == f.tgen.size() + 50);

  auto all = target_stream(f.tgen, labeled, 1.0, 3);
  std::set<const QAExample*> full;
  for (const auto& it : all)
    if (it.supervised) full.insert(it.example);
  CHECK(full.size() == 100);
  CHECK(target_stream(f.tgen, labeled, 0.0, 3).size() == f.tgen.size());
  CHECK_THROWS(target_stream(f.tgen, {}, 0.5, 3));
}

TEST_CASE("decoder isolation: a synthetic-target-only batch leaves decoder gradients exactly zero") {
  Fixture f = make_fixture();
  mrc::MrcModel model = mrc::MrcModel::create(tiny_mrc(f.vocab.size()), 1);
  auto clf = adversary::DomainClassifier::create(16, 6, 2);
  for (auto* p : model.params()) p->zero_grad();
  for (auto* p : clf.params()) p->zero_grad();
  Minibatch batch;
  for (int i = 0; i < 6; ++i) batch.items.push_back({&f.tgen[static_cast<std::size_t>(i)], false, Domain::target});
  batch.n_target = 6;
  Rng rng(3);
  BatchLoss loss = accumulate_batch_gradients(model, &clf, f.vocab, batch, 0.8, mrc::Mode::train, &rng);
  CHECK(loss.n_supervised == 0);
  CHECK(loss.answer == 0.0);
  for (auto* p : model.decoder_params()) {
    INFO(p->name);
    CHECK(p->grad.isZero());
  }
  bool encoder_moved = false;
  for (auto* p : model.encoder_params()) encoder_moved |= !p->grad.isZero();
  CHECK(encoder_moved);
}

TEST_CASE("gradient accounting: supervised target items add to the decoder gradient") {
  Fixture f = make_fixture();
  mrc::MrcModel model = mrc::MrcModel::create(tiny_mrc(f.vocab.size()), 1);
  const auto& ex = f.corpora.target.examples[0];

  auto decoder_grad = [&](const Minibatch& b) {
    for (auto* p : model.params()) p->zero_grad();
    accumulate_batch_gradients(model, nullptr, f.vocab, b, 0.0, mrc::Mode::eval, nullptr);
    std::vector<ag::Matrix> g;
    for (auto* p : model.decoder_params()) g.push_back(p->grad);
    return g;
  };
  Minibatch with, alone;
  with.items = {{&ex, true, Domain::target}};
  alone.items = {{&ex, false, Domain::target}};
  auto gw = decoder_grad(with);
  auto ga = decoder_grad(alone);
  double norm = 0;
  for (std::size_t i = 0; i < gw.size(); ++i) {
    norm += gw[i].squaredNorm();
    CHECK(ga[i].isZero());
  }
  CHECK(norm > 0.0);
}

TEST_CASE("optimizer step with learning rate 0 leaves every parameter unchanged") {
  Fixture f = make_fixture();
  mrc::MrcModel model = mrc::MrcModel::create(tiny_mrc(f.vocab.size()), 1);
  auto clf = adversary::DomainClassifier::create(16, 6, 2);
  nn::ParamRefs params = model.params();
  for (auto* p : clf.params()) params.push_back(p);
  const auto before = values(params);
  nn::Adamax opt(params);
  Minibatch batch;
  batch.items = {{&f.corpora.source.examples[0], true, Domain::source}, {&f.tgen[0], false, Domain::target}};
  Rng rng(1);
  accumulate_batch_gradients(model, &clf, f.vocab, batch, 1.0, mrc::Mode::train, &rng);
  opt.step(0.0);
  CHECK(values(params) == before);
}

TEST_CASE("adaptation run: batch counts over the whole run, lambda starts at 0 and never decreases") {
  Fixture f = make_fixture();
  mrc::MrcModel model = mrc::MrcModel::create(tiny_mrc(f.vocab.size()), 1);
  auto clf = adversary::DomainClassifier::create(16, 6, 2);
  TrainConfig cfg = quick_config();
  long batches = 0, steps_seen = 0;
  double prev_lambda = -1.0;
  bool counts_ok = true, lambda_ok = true;
  TrainHooks hooks;
  hooks.on_batch = [&](const Minibatch& b, const StepRecord& r) {
    int s = 0, t = 0;
    for (const auto& it : b.items) (it.domain == Domain::source ? s : t)++;
    counts_ok &= s == cfg.k_s && t == cfg.k_t && static_cast<int>(b.items.size()) == cfg.k_s + cfg.k_t;
    if (r.step == 0) lambda_ok &= r.lambda == 0.0;
    lambda_ok &= r.lambda >= prev_lambda;
    prev_lambda = r.lambda;
    steps_seen = r.step + 1;
    ++batches;
  };
  auto dir = std::filesystem::temp_directory_path() / "adamrc_test_adapt_log";
  std::filesystem::remove_all(dir);
  hooks.log_path = dir / "log.jsonl";
  TrainResult res = adapt(model, clf, f.vocab, f.corpora.source.examples, f.tgen,
                          std::vector<QAExample>(f.corpora.target.examples.begin(), f.corpora.target.examples.begin() + 5),
                          cfg, hooks);
  CHECK(batches == cfg.epochs * cfg.steps_per_epoch);
  CHECK(steps_seen == batches);
  CHECK(counts_ok);
  CHECK(lambda_ok);
  CHECK(res.epochs.size() == static_cast<std::size_t>(cfg.epochs));
  CHECK(res.best_epoch >= 0);

  std::ifstream in(*hooks.log_path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    for (const char* key : {"step", "epoch", "lambda", "lr", "loss_answer", "loss_domain", "dev_em", "dev_f1"})
      CHECK(j.contains(key));
    ++lines;
  }
  CHECK(lines == cfg.epochs);

  CHECK_THROWS_AS(adapt(model, clf, f.vocab, f.corpora.source.examples, {}, {}, cfg), std::invalid_argument);
}

TEST_CASE("k = 0 semi-supervised run is bit-identical to the unsupervised run") {
  Fixture f = make_fixture();
  TrainConfig cfg = quick_config();
  std::vector<QAExample> dev(f.corpora.target.examples.begin(), f.corpora.target.examples.begin() + 5);

  mrc::MrcModel a = mrc::MrcModel::create(tiny_mrc(f.vocab.size()), 1), b = a;
  auto ca = adversary::DomainClassifier::create(16, 6, 2), cb = ca;
  TrainResult ra = adapt(a, ca, f.vocab, f.corpora.source.examples, f.tgen, dev, cfg);
  TrainResult rb =
      adapt_semi_supervised(b, cb, f.vocab, f.corpora.source.examples, f.corpora.target.examples, f.tgen, dev, cfg, 0.0);
  CHECK(values(a.params()) == values(b.params()));
  CHECK(values(ca.params()) == values(cb.params()));
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
    CHECK(ra.epochs[i].loss_answer == rb.epochs[i].loss_answer);
    CHECK(ra.epochs[i].loss_domain == rb.epochs[i].loss_domain);
  }
}

TEST_CASE("source training: overfits 8 examples and is reproducible byte for byte") {
  Fixture f = make_fixture();
  std::vector<QAExample> eight(f.corpora.source.examples.begin(), f.corpora.source.examples.begin() + 8);
  mrc::MrcConfig mc = tiny_mrc(f.vocab.size());
  mc.hidden = 16;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.steps_per_epoch = 10;
  cfg.epochs = 30;  // 300 steps
  cfg.learning_rate = 0.01;
  cfg.dropout = 0.0;
  cfg.seed = 3;

  mrc::MrcModel model = mrc::MrcModel::create(mc, 7);
  mc.prediction_dropout = 0.4;
  TrainResult r = train_source(model, f.vocab, eight, eight, cfg);
  CHECK(r.steps == 300);
  const auto report = metrics::evaluate_model(model, f.vocab, eight);
  CHECK(report.em == 100.0);
  CHECK(r.best_dev.em == report.em);

  mrc::MrcModel again = mrc::MrcModel::create(mc, 7);
  train_source(again, f.vocab, eight, eight, cfg);
  ckpt::Manifest man;
  man.kind = "mrc";
  CHECK(ckpt::serialize(model.params(), man) == ckpt::serialize(again.params(), man));
}
