#include <cmath>

#include "adamrc/adversary.hpp"
#include "adamrc/mrc.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace adamrc;
using namespace adamrc::adversary;
using corpus::Domain;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return m;
}

mrc::MrcConfig tiny_mrc() {
  mrc::MrcConfig c;
  c.vocab_size = 20;
  c.word_dim = 5;
  c.pos_dim = 3;
  c.ner_dim = 3;
  c.hidden = 4;
  c.answer_steps = 2;
  c.dropout = 0.0;
  c.prediction_dropout = 0.0;
  return c;
}

mrc::LexiconInput input(std::vector<int> words) {
  mrc::LexiconInput in;
  in.words = std::move(words);
  for (std::size_t i = 0; i < in.words.size(); ++i) {
    in.pos.push_back(static_cast<int>(i % corpus::kNumPosTags));
    in.ner.push_back(static_cast<int>(i % 3));
  }
  return in;
}

}  // namespace

TEST_CASE("pool_passage") {
  Rng rng(1);
  DomainClassifier c = DomainClassifier::create(4, 6, 2);
  {
    Graph g(false);
    Var mem = g.constant(random_matrix(1, 4, rng));
    CHECK(pool_passage(g, c, mem).value() == mem.value());
  }
  {
    Graph g(false);
    Matrix rows(5, 4);
    rows.rowwise() = random_matrix(1, 4, rng).row(0);
    Var w;
    Var pooled = pool_passage(g, c, g.constant(rows), -1, &w);
    CHECK((pooled.value().row(0) - rows.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(w.value().sum() - 1.0) < 1e-5);
  }
}

TEST_CASE("classify_domain") {
  Rng rng(3);
  DomainClassifier c = DomainClassifier::create(4, 6, 4);
  const Matrix mem = random_matrix(7, 4, rng);
  const RowVector q = random_matrix(1, 4, rng).row(0);

  DomainClassifier zero = c;
  for (Parameter* p : zero.params()) p->value.setZero();
  CHECK(classify_domain(zero, mem, q) == 0.5);

  for (int trial = 0; trial < 20; ++trial) {
    const double p = classify_domain(c, random_matrix(5, 4, rng) * 10.0, random_matrix(1, 4, rng).row(0) * 10.0);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }

  c.b2.value(0, 0) = 0.3f;
  const double p1 = classify_domain(c, mem, q);
  DomainClassifier doubled = c;
  doubled.w2.value *= 2.0f;
  doubled.b2.value *= 2.0f;
  CHECK(std::abs(classify_domain(doubled, mem, q) - 0.5) > std::abs(p1 - 0.5));
}

TEST_CASE("padding rows are masked out of pooling") {
  Rng rng(5);
  DomainClassifier c = DomainClassifier::create(4, 6, 6);
  const Matrix mem = random_matrix(6, 4, rng);
  const Matrix q = random_matrix(1, 4, rng);
  Matrix padded(9, 4);
  padded << mem, random_matrix(3, 4, rng) * 50.0;
  Graph g(false);
  const double a = classify_domain(g, c, g.constant(mem), g.constant(q)).scalar();
  const double b = classify_domain(g, c, g.constant(padded), g.constant(q), 6).scalar();
  CHECK(std::abs(a - b) < 1e-12);
}

TEST_CASE("domain_loss") {
  CHECK(domain_loss({0.5, 0.5, 0.5}, {Domain::source, Domain::target, Domain::target}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(domain_loss({0.0, 1.0}, {Domain::source, Domain::target}) < 1e-11);
  const double l = domain_loss({0.2, 0.9}, {Domain::source, Domain::target});
  CHECK(domain_loss({0.8, 0.1}, {Domain::target, Domain::source}) == doctest::Approx(l).epsilon(1e-14));
  CHECK_THROWS(domain_loss({}, {}));
  CHECK_THROWS(domain_loss({0.5}, {}));

  // Graph BCE agrees with the probability form.
  Graph g(false);
  Var z = g.constant(Matrix::Constant(1, 1, 0.7));
  const double p = 1.0 / (1.0 + std::exp(-0.7));
  CHECK(domain_bce(z, Domain::target).scalar() == doctest::Approx(domain_loss({p}, {Domain::target})));
  CHECK(domain_bce(z, Domain::source).scalar() == doctest::Approx(domain_loss({p}, {Domain::source})));
}

TEST_CASE("gradient reversal: exact forward identity and -lambda backward") {
  Rng rng(7);
  Parameter x("x", 3, 2);
  ag::init_uniform(x, rng, 1.0);
  const Matrix upstream = random_matrix(3, 2, rng);
  for (double lambda : {0.0, 0.5, 1.0, 2.5}) {
    x.zero_grad();
    Graph g;
    Var in = g.param(x);
    Var out = gradient_reversal(in, lambda);
    CHECK(out.value() == in.value());
    g.backward(ag::sum(ag::mul(out, g.constant(upstream))));
    CHECK(x.grad == -lambda * upstream);
  }
}

TEST_CASE("composed reversal: encoder gradient equals -lambda times the finite-difference gradient of L_C") {
  const double lambda = 0.7;
  mrc::MrcModel model = mrc::MrcModel::create(tiny_mrc(), 8);
  DomainClassifier clf = DomainClassifier::create(8, 5, 9);
  const auto p = input({4, 9, 5, 12, 7, 8}), q = input({10, 6, 4});

  auto domain_loss_value = [&](bool reverse, bool backward) {
    Graph g(backward);
    mrc::EncoderOutput enc = mrc::encode(g, model, p, q, mrc::Mode::eval);
    Var mem = enc.passage_memory, sum = enc.question_summary;
    if (reverse) {
      mem = gradient_reversal(mem, lambda);
      sum = gradient_reversal(sum, lambda);
    }
    Var loss = domain_bce(domain_logit(g, clf, mem, sum), Domain::target);
    if (backward) g.backward(loss);
    return loss.scalar();
  };

  nn::ParamRefs enc = model.encoder_params();
  for (Parameter* prm : model.params()) prm->zero_grad();
  for (Parameter* prm : clf.params()) prm->zero_grad();
  domain_loss_value(true, true);

  for (Parameter* prm : model.decoder_params()) CHECK(prm->grad.isZero());
  // Undo the reversal so the stored gradient is dL_C/dtheta_e.
  nn::ParamRefs dense;
  for (Parameter* prm : enc) {
    prm->grad /= -lambda;
    if (prm->name.find("emb") == std::string::npos) dense.push_back(prm);
  }
  auto res = testutil::check_gradients(dense, [&] { return domain_loss_value(false, false); }, 60, 10);
  INFO(res.worst);
  CHECK(res.max_rel_error < 1e-3);

  // The classifier itself sees the ordinary gradient.
  auto res_c = testutil::check_gradients(clf.params(), [&] { return domain_loss_value(false, false); }, 30, 11);
  INFO(res_c.worst);
  CHECK(res_c.max_rel_error < 1e-3);
}

TEST_CASE("lambda 0: the domain branch sends nothing to the encoder") {
  mrc::MrcModel model = mrc::MrcModel::create(tiny_mrc(), 12);
  DomainClassifier clf = DomainClassifier::create(8, 5, 13);
  for (Parameter* prm : model.params()) prm->zero_grad();
  for (Parameter* prm : clf.params()) prm->zero_grad();
  Graph g;
  mrc::EncoderOutput enc = mrc::encode(g, model, input({4, 5, 6, 7}), input({8, 9}), mrc::Mode::eval);
  g.backward(domain_bce(
      domain_logit(g, clf, gradient_reversal(enc.passage_memory, 0.0), gradient_reversal(enc.question_summary, 0.0)),
      Domain::source));
  for (Parameter* prm : model.params()) CHECK(prm->grad.isZero());
  CHECK_FALSE(clf.w1.grad.isZero());
}

TEST_CASE("one joint step realizes the minimax: classifier descends L_C, encoder ascends lambda L_C") {
  // Toy: feature f = e * x, L_D = (e - 1)^2, logit z = c * GRL(f), L_C = BCE(z, target).
  const double x = 1.5, lambda = 0.8, lr = 0.01;
  for (double e0 : {0.4, 1.3, -0.7}) {
    for (double c0 : {0.9, -1.2}) {
      Parameter e("e", 1, 1), c("c", 1, 1);
      e.value(0, 0) = static_cast<float>(e0);
      c.value(0, 0) = static_cast<float>(c0);
      const double ev = e.value(0, 0), cv = c.value(0, 0);

      Graph g;
      Var ve = g.param(e);
      Var f = ag::scale(ve, x);
      Var l_d = ag::sum(ag::mul(ag::sub(ve, g.constant(Matrix::Ones(1, 1))), ag::sub(ve, g.constant(Matrix::Ones(1, 1)))));
      Var z = ag::matmul(gradient_reversal(f, lambda), g.param(c));
      Var l_c = domain_bce(z, Domain::target);
      g.backward(ag::add(l_d, l_c));

      // Separately computed analytic gradients.
      const double zv = cv * ev * x;
      const double dlc_dz = 1.0 / (1.0 + std::exp(-zv)) - 1.0;
      const double dlc_dc = dlc_dz * ev * x;
      const double dlc_de = dlc_dz * cv * x;
      const double dld_de = 2.0 * (ev - 1.0);
      CHECK(c.grad(0, 0) == doctest::Approx(dlc_dc).epsilon(1e-12));
      CHECK(e.grad(0, 0) == doctest::Approx(dld_de - lambda * dlc_de).epsilon(1e-12));

      nn::Adamax::Options opt;
      opt.clip_norm = 0;
      nn::Adamax adamax({&e, &c}, opt);
      adamax.step(lr);
      const double dc = c.value(0, 0) - cv, de = e.value(0, 0) - ev;
      // First Adamax step moves each coordinate by lr against its gradient sign.
      CHECK(dc * dlc_dc < 0);
      CHECK(de * (dld_de - lambda * dlc_de) < 0);
      CHECK(std::abs(dc) == doctest::Approx(lr).epsilon(1e-4));
    }
  }
}
