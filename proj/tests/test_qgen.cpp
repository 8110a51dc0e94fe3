#include <cmath>
#include <map>

#include "adamrc/qgen.hpp"
#include "adamrc/synthetic.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace adamrc;
using namespace adamrc::qgen;
using corpus::AnswerSpan;
using corpus::Domain;
using corpus::Vocabulary;

namespace {

struct Fixture {
  corpus::PassagePtr passage;
  corpus::QAExample example;
  Vocabulary vocab;
};

// Passage words only partly in the vocabulary so the copy branch sees OOV ids.
Fixture make_fixture(bool full_vocab = false) {
  Fixture f;
  f.passage = std::make_shared<corpus::AnnotatedPassage>(corpus::make_passage(
      "p0", "Ada Lovelace wrote the first program in 1843 for the engine .", Domain::source));
  f.example = corpus::make_example("e0", f.passage, "When did Ada Lovelace write the first program ?", {7, 7},
                                   corpus::Provenance::human);
  std::vector<std::string> words = {"When", "did", "write", "the", "first", "program", "?", "in", "for", "."};
  if (full_vocab)
    for (const auto& t : f.passage->tokens) words.push_back(t.text);
  words.push_back("Ada");
  f.vocab = Vocabulary(words, 6);
  return f;
}

QGenConfig tiny_config(int vocab_size, int hidden = 8) {
  QGenConfig c;
  c.vocab_size = vocab_size;
  c.word_dim = 6;
  c.pos_dim = 3;
  c.ner_dim = 3;
  c.lstm_hidden = hidden;
  c.dropout = 0.0;
  c.beam_size = 3;
  c.max_decode_len = 12;
  return c;
}

// P(w) over the union support computed position by position.
std::map<int, double> brute_force_mixture(const StepOutput& out, const EncodedPassage& enc, int V) {
  std::map<int, double> p;
  for (int w = 0; w < V; ++w) p[w] += out.state.gate * out.vocab_probs(w);
  for (std::size_t i = 0; i < enc.src_ext.size(); ++i)
    p[enc.src_ext[i]] += (1.0 - out.state.gate) * out.state.attention(static_cast<Eigen::Index>(i));
  return p;
}

}  // namespace

TEST_CASE("answer flags") {
  const std::vector<double> expect = {0, 1, 1, 0, 0};
  CHECK(answer_flags(5, {1, 2}) == expect);
}

TEST_CASE("encoder shape, order sensitivity and flag sensitivity") {
  Fixture f = make_fixture();
  QGenConfig cfg;
  cfg.vocab_size = f.vocab.size();
  QGenModel model = QGenModel::create(cfg, 3);
  Instance inst = make_instance(f.vocab, *f.passage, {7, 7});
  Graph g(false);
  Var H = encode(g, model, inst, false);
  CHECK(H.rows() == f.passage->length());
  CHECK(H.cols() == 2 * 125);

  Instance rev = inst;
  std::reverse(rev.words.begin(), rev.words.end());
  std::reverse(rev.pos.begin(), rev.pos.end());
  std::reverse(rev.ner.begin(), rev.ner.end());
  std::reverse(rev.answer_flag.begin(), rev.answer_flag.end());
  Graph g2(false);
  Matrix Hr = encode(g2, model, rev, false).value();
  CHECK((Hr.colwise().reverse() - H.value()).cwiseAbs().maxCoeff() > 1e-6);

  Instance moved = make_instance(f.vocab, *f.passage, {0, 1});
  Graph g3(false);
  Matrix Hm = encode(g3, model, moved, false).value();
  for (int i : {0, 1, 7}) CHECK((Hm.row(i) - H.value().row(i)).cwiseAbs().maxCoeff() > 1e-9);

  cfg.max_passage_len = 3;
  QGenModel small = QGenModel::create(cfg, 3);
  Graph g4(false);
  CHECK_THROWS_AS(encode(g4, small, inst, false), std::invalid_argument);
}

TEST_CASE("copy ids: OOV passage words get extended ids shared by repeats") {
  Fixture f = make_fixture();
  Instance inst = make_instance(f.vocab, *f.passage, {7, 7}, &f.example.question);
  const int V = f.vocab.size();
  CHECK(inst.src_ext[0] == f.vocab.id("Ada"));
  CHECK(inst.src_ext[1] >= V);
  CHECK(inst.oov[static_cast<std::size_t>(inst.src_ext[1] - V)] == "Lovelace");
  // "Lovelace" in the question targets the passage copy id.
  CHECK(inst.target[3] == inst.src_ext[1]);
  CHECK(inst.dec_input[0] == Vocabulary::kBos);
  CHECK(inst.target.back() == Vocabulary::kEos);
  CHECK(inst.dec_input.size() == inst.target.size());
}

TEST_CASE("qgen_step: forced gates and copy aggregation") {
  Fixture f = make_fixture();
  QGenModel model = QGenModel::create(tiny_config(f.vocab.size()), 5);
  Instance inst = make_instance(f.vocab, *f.passage, {7, 7});
  EncodedPassage enc = encode_passage(model, inst);
  const int V = f.vocab.size();

  StepOutput gen = qgen_step(model, Vocabulary::kBos, initial_state(enc), enc, 1.0);
  CHECK(gen.probs.head(V) == gen.vocab_probs);
  CHECK(gen.probs.tail(gen.probs.size() - V).isZero());

  auto cat = std::make_shared<corpus::AnnotatedPassage>(corpus::make_passage("c", "cat cat", Domain::source));
  Vocabulary cv({"cat", "dog"}, 6);
  QGenModel cm = QGenModel::create(tiny_config(cv.size()), 6);
  EncodedPassage ce = encode_passage(cm, make_instance(cv, *cat, {0, 0}));
  StepOutput copy = qgen_step(cm, Vocabulary::kBos, initial_state(ce), ce, 0.0);
  CHECK(copy.probs(cv.id("cat")) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(copy.state.attention.sum() == doctest::Approx(1.0));
}

TEST_CASE("qgen_step: mixture sums to one and matches a position-sum oracle") {
  Fixture f = make_fixture();
  const int V = f.vocab.size();
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    QGenModel model = QGenModel::create(tiny_config(V), 100 + static_cast<std::uint64_t>(trial));
    for (Parameter* p : model.params()) ag::init_uniform(*p, rng, 1.0);
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(f.passage->length())));
    EncodedPassage enc = encode_passage(model, make_instance(f.vocab, *f.passage, {a, a}));
    DecodeStepState s = initial_state(enc);
    int prev = Vocabulary::kBos;
    for (int step = 0; step < 4; ++step) {
      StepOutput out = qgen_step(model, prev, s, enc);
      CHECK(out.state.attention.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(out.vocab_probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(out.state.gate >= 0.0);
      CHECK(out.state.gate <= 1.0);
      const auto oracle = brute_force_mixture(out, enc, V);
      double total = 0.0;
      for (auto [w, p] : oracle) {
        total += p;
        CHECK(std::abs(out.probs(w) - p) < 1e-12);
      }
      CHECK(std::abs(total - 1.0) < 1e-5);
      CHECK(std::abs(out.probs.sum() - 1.0) < 1e-5);
      s = out.state;
      prev = static_cast<int>(rng.below(static_cast<std::uint64_t>(out.probs.size())));
    }
  }
}

TEST_CASE("teacher-forced NLL gradient matches finite differences (hidden 8, vocab 20)") {
  Fixture f = make_fixture();
  std::vector<std::string> words = f.vocab.tokens();
  words.erase(words.begin(), words.begin() + Vocabulary::kNumSpecials);
  while (words.size() < 16) words.push_back("filler" + std::to_string(words.size()));
  Vocabulary vocab(words, 6);
  REQUIRE(vocab.size() == 20);
  QGenModel model = QGenModel::create(tiny_config(vocab.size()), 9);
  Instance inst = make_instance(vocab, *f.passage, {7, 7}, &f.example.question);
  nn::ParamRefs params = model.params();
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(teacher_forced_nll(g, model, inst, false));
  }
  auto loss = [&] {
    Graph g(false);
    return teacher_forced_nll(g, model, inst, false).scalar();
  };
  auto res = testutil::check_gradients(params, loss, 20, 4);
  INFO(res.worst);
  CHECK(res.checked == 20);
  CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("initial NLL is close to ln|V| per token") {
  auto corpora = synthetic::make_synthetic_domains(2, 40);
  auto vocab = corpus::build_vocab(corpus::token_stream(corpora.source.examples), 1, 100000, 16);
  QGenConfig cfg = tiny_config(vocab.size(), 16);
  cfg.word_dim = 16;
  QGenModel model = QGenModel::create(cfg, 11);
  double total = 0.0;
  int n = 0;
  for (const auto& ex : corpora.source.examples) {
    Graph g(false);
    total += teacher_forced_nll(g, model, make_instance(vocab, *ex.passage, ex.answer, &ex.question), false).scalar();
    ++n;
  }
  const double mean = total / n;
  const double ln_v = std::log(static_cast<double>(vocab.size()));
  INFO("mean NLL " << mean << " ln|V| " << ln_v);
  CHECK(std::abs(mean - ln_v) <= 0.2 * ln_v);
}

TEST_CASE("overfitting one example: loss halves and beam search reproduces the question") {
  Fixture f = make_fixture();
  QGenConfig cfg = tiny_config(f.vocab.size(), 16);
  QGenModel model = QGenModel::create(cfg, 21);
  TrainOptions opt;
  opt.epochs = 200;
  opt.batch_size = 1;
  opt.lr = 0.01;
  opt.seed = 3;
  TrainLog log = qgen_train(model, f.vocab, {f.example}, opt);
  REQUIRE(log.step_nll.size() == 200);
  CHECK(log.step_nll.back() <= 0.5 * log.step_nll.front());

  std::vector<std::string> expect;
  for (const auto& t : f.example.question) expect.push_back(t.text);
  CHECK(qgen_generate(model, f.vocab, *f.passage, f.example.answer) == expect);

  QGenModel again = QGenModel::create(cfg, 21);
  TrainLog log2 = qgen_train(again, f.vocab, {f.example}, opt);
  CHECK(log2.step_nll.back() == log.step_nll.back());
}

TEST_CASE("beam width 1 is greedy decoding; output length is bounded") {
  Fixture f = make_fixture();
  const int V = f.vocab.size();
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    QGenModel model = QGenModel::create(tiny_config(V), seed);
    Instance inst = make_instance(f.vocab, *f.passage, {0, 1});
    const int max_len = 7;
    Hypothesis h = beam_search(model, f.vocab, inst, 1, max_len);

    EncodedPassage enc = encode_passage(model, inst);
    DecodeStepState s = initial_state(enc);
    std::vector<int> greedy;
    int prev = Vocabulary::kBos;
    for (int t = 0; t < max_len; ++t) {
      StepOutput out = qgen_step(model, prev, s, enc);
      int best = -1;
      for (int w = 0; w < out.probs.size(); ++w) {
        if (w == Vocabulary::kPad || w == Vocabulary::kBos) continue;
        if (best < 0 || out.probs(w) > out.probs(best)) best = w;
      }
      if (best == Vocabulary::kEos) break;
      greedy.push_back(best);
      prev = best;
      s = out.state;
    }
    CHECK(h.ids == greedy);
    CHECK(h.tokens.size() == h.ids.size());
    CHECK(static_cast<int>(beam_search(model, f.vocab, inst, 4, max_len).ids.size()) <= max_len);
  }
}

TEST_CASE("build_tgen contracts") {
  Fixture f = make_fixture();
  QGenConfig cfg = tiny_config(f.vocab.size());
  cfg.max_decode_len = 5;
  QGenModel model = QGenModel::create(cfg, 2);

  auto corpora = synthetic::make_synthetic_domains(5, 12);
  std::vector<corpus::PassagePtr> passages = corpora.target.passages;
  passages.push_back(std::make_shared<corpus::AnnotatedPassage>(
      corpus::make_passage("plain", "the cat sat on the mat .", Domain::target)));

  TgenOptions opt;
  opt.max_per_passage = 2;
  TgenStats stats;
  auto tgen = build_tgen(passages, model, f.vocab, opt, &stats);

  std::size_t bound = 0;
  for (const auto& p : passages)
    bound += std::min<std::size_t>(extract::extract_candidates(*p).size(), 2);
  CHECK(tgen.size() <= bound);
  CHECK(stats.passages == static_cast<int>(passages.size()));
  for (const auto& ex : tgen) {
    CHECK(ex.provenance == corpus::Provenance::synthetic);
    CHECK(ex.domain() == Domain::target);
    CHECK(ex.passage->id != "plain");
    CHECK(!ex.question.empty());
    CHECK(ex.answer.valid_for(ex.passage->length()));
  }

  auto again = build_tgen(passages, model, f.vocab, opt);
  REQUIRE(again.size() == tgen.size());
  for (std::size_t i = 0; i < tgen.size(); ++i) CHECK(again[i].question_text == tgen[i].question_text);

  CHECK_THROWS_AS(build_tgen(corpora.source.passages, model, f.vocab, opt), std::invalid_argument);
}
