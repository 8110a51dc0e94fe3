#include <fstream>

#include "adamrc/checkpoint.hpp"
#include "adamrc/diagnostics.hpp"
#include "adamrc/synthetic.hpp"
#include "doctest.h"

using namespace adamrc;
using namespace adamrc::diag;
using corpus::Domain;

namespace {

std::vector<FeatureSample> gaussian_samples(int n, double mu_s, double mu_t, int dim, Rng& rng) {
  std::vector<FeatureSample> out;
  auto normal = [&] {
    // Box-Muller; the probe tests only need rough normality.
    const double u1 = std::max(rng.uniform(), 1e-300), u2 = rng.uniform();
    return std::sqrt(-2 * std::log(u1)) * std::cos(2 * M_PI * u2);
  };
  for (Domain d : {Domain::source, Domain::target})
    for (int i = 0; i < n; ++i) {
      FeatureSample s;
      s.feature.resize(dim);
      for (int k = 0; k < dim; ++k) s.feature(k) = normal() + (d == Domain::source ? mu_s : mu_t);
      s.domain = d;
      out.push_back(s);
    }
  return out;
}

}  // namespace

TEST_CASE("gaussian KL closed form") {
  Eigen::RowVectorXd m0(1), m1(1), v(1);
  m0 << 0.0;
  m1 << 1.0;
  v << 1.0;
  CHECK(gaussian_kl(m0, v, m1, v) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(0.5 * (gaussian_kl(m0, v, m1, v) + gaussian_kl(m1, v, m0, v)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(gaussian_kl(m0, v, m0, v) == 0.0);
}

TEST_CASE("domain_kl: zero for identical sets, symmetric, non-negative, needs two samples") {
  Rng rng(1);
  auto s = gaussian_samples(30, 0.0, 0.0, 3, rng);
  std::vector<FeatureSample> same;
  for (const auto& x : s)
    if (x.domain == Domain::source) {
      same.push_back(x);
      FeatureSample t = x;
      t.domain = Domain::target;
      same.push_back(t);
    }
  CHECK(domain_kl(same) == doctest::Approx(0.0).epsilon(1e-15));

  auto shifted = gaussian_samples(50, 0.0, 1.0, 2, rng);
  const double kl = domain_kl(shifted);
  CHECK(kl > 0.0);
  auto swapped = shifted;
  for (auto& x : swapped) x.domain = x.domain == Domain::source ? Domain::target : Domain::source;
  CHECK(domain_kl(swapped) == doctest::Approx(kl).epsilon(1e-12));

  std::vector<FeatureSample> one = {shifted.front(), shifted.back(), shifted[1]};
  CHECK_THROWS_AS(domain_kl(one), std::invalid_argument);
}

TEST_CASE("PCA projection on a 5x4 fixture matches numpy eigenvalues") {
  Matrix x(5, 4);
  x << 2.0, 0.5, -1.0, 3.0, 1.0, 1.5, 0.0, 2.0, -0.5, 2.0, 1.0, 0.0, 3.0, -1.0, 2.0, 1.0, 0.0, 0.0, 0.5, -2.0;
  Projection p = pca_project(x);
  // tests/oracles/pca_fixture.py
  CHECK(std::abs(p.eigenvalues(0) - 3.920309163253918) < 1e-9);
  CHECK(std::abs(p.eigenvalues(1) - 2.269649441330384) < 1e-9);
  CHECK(std::abs(p.total_variance - 6.74) < 1e-9);
  CHECK(p.points.rows() == 5);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(p.points.col(k).mean()) < 1e-6);
    const double var = p.points.col(k).squaredNorm() / 5.0;
    CHECK(std::abs(var - p.eigenvalues(k)) < 1e-6);
  }
  const double projected = (p.points.array().square().sum()) / 5.0;
  CHECK(projected <= p.total_variance + 1e-9);
  CHECK(std::abs(projected - (p.eigenvalues(0) + p.eigenvalues(1))) < 1e-6);

  Matrix line(4, 3);
  line << 1, 2, 3, 2, 4, 6, 3, 6, 9, 4, 8, 12;
  Projection pl = pca_project(line);
  CHECK(pl.points.col(1).isZero());
  CHECK_THROWS(pca_project(Matrix::Zero(2, 3)));
}

TEST_CASE("export_projection writes one CSV row per sample") {
  Rng rng(2);
  auto s = gaussian_samples(10, 0, 2, 4, rng);
  auto path = std::filesystem::temp_directory_path() / "adamrc_test_proj.csv";
  export_projection(s, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,y,domain");
  int rows = 0, target = 0;
  while (std::getline(in, line)) {
    ++rows;
    target += line.ends_with(",target");
  }
  CHECK(rows == 20);
  CHECK(target == 10);
}

TEST_CASE("probe accuracy separates shifted clouds and is near chance on identical ones") {
  Rng rng(3);
  CHECK(probe_accuracy(gaussian_samples(100, 0, 3, 4, rng), 1) > 0.95);
  const double chance = probe_accuracy(gaussian_samples(100, 0, 0, 4, rng), 1);
  CHECK(chance < 0.7);
  auto s = gaussian_samples(50, 0, 1, 3, rng);
  CHECK(probe_accuracy(s, 9) == probe_accuracy(s, 9));
}

TEST_CASE("collect_features: 100 per domain, deterministic, length 4m") {
  auto corpora = synthetic::make_synthetic_domains(6, 70);
  std::vector<std::string> tokens = corpus::token_stream(corpora.source.examples);
  for (const auto& t : corpus::token_stream(corpora.target.examples)) tokens.push_back(t);
  auto vocab = corpus::build_vocab(tokens, 1, 100000, 8);
  mrc::MrcConfig mc;
  mc.vocab_size = vocab.size();
  mc.word_dim = 8;
  mc.hidden = 4;
  mc.answer_steps = 2;
  mrc::MrcModel model = mrc::MrcModel::create(mc, 1);
  auto pooler = adversary::DomainClassifier::create(8, 5, 2);
  REQUIRE(corpora.source.examples.size() >= 100);
  REQUIRE(corpora.target.examples.size() >= 100);

  auto a = collect_features(model, pooler, vocab, corpora.source.examples, corpora.target.examples, 100, 4);
  auto b = collect_features(model, pooler, vocab, corpora.source.examples, corpora.target.examples, 100, 4);
  REQUIRE(a.size() == 200);
  int n_target = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    n_target += a[i].domain == Domain::target;
    CHECK(a[i].feature.size() == 16);
    CHECK(a[i].feature.allFinite());
    CHECK(a[i].feature == b[i].feature);
  }
  CHECK(n_target == 100);

  std::vector<corpus::QAExample> few(corpora.target.examples.begin(), corpora.target.examples.begin() + 5);
  auto c = collect_features(model, pooler, vocab, corpora.source.examples, few, 100, 4);
  CHECK(c.size() == 105);

  auto path = std::filesystem::temp_directory_path() / "adamrc_test_features.bin";
  save_features(path, a);
  auto ck = ckpt::load_checkpoint(path);
  CHECK(ck.manifest.kind == "features");
  CHECK(ck.at("features").rows() == 200);
  CHECK(ck.at("domains")(150, 0) == 1.0f);
}
