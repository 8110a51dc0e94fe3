#include "adamrc/diagnostics.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "adamrc/checkpoint.hpp"
#include "adamrc/io.hpp"

namespace adamrc::diag {

namespace {

constexpr double kVarFloor = 1e-6;

void sample_domain(std::vector<FeatureSample>& out, mrc::MrcModel& model, adversary::DomainClassifier& pooler,
                   const corpus::Vocabulary& vocab, const std::vector<corpus::QAExample>& data, int n,
                   std::uint64_t seed, corpus::Domain domain) {
  std::size_t take = static_cast<std::size_t>(n);
  if (take > data.size()) {
    spdlog::warn("collect_features: asked for {} {} examples, only {} available", n, corpus::domain_name(domain),
                 data.size());
    take = data.size();
  }
  for (std::size_t idx : sample_indices(data.size(), take, seed)) {
    const corpus::QAExample& ex = data[idx];
    ag::Graph g(false);
    const mrc::EncoderOutput enc = mrc::encode(g, model, mrc::lexicon_input(vocab, ex.passage->tokens),
                                               mrc::lexicon_input(vocab, ex.question), mrc::Mode::eval);
    const ag::Var pooled = adversary::pool_passage(g, pooler, enc.passage_memory);
    FeatureSample s;
    s.feature.resize(pooled.cols() + enc.question_summary.cols());
    s.feature << pooled.value().row(0), enc.question_summary.value().row(0);
    s.domain = domain;
    out.push_back(std::move(s));
  }
}

struct Moments {
  Eigen::RowVectorXd mean, var;
  std::size_t n = 0;
};

Moments fit(const std::vector<FeatureSample>& samples, corpus::Domain d) {
  Moments m;
  for (const auto& s : samples) {
    if (s.domain != d) continue;
    if (m.n == 0) {
      m.mean = Eigen::RowVectorXd::Zero(s.feature.size());
      m.var = Eigen::RowVectorXd::Zero(s.feature.size());
    }
    if (s.feature.size() != m.mean.size()) throw std::invalid_argument("domain_kl: inconsistent feature lengths");
    m.mean += s.feature;
    ++m.n;
  }
  if (m.n < 2)
    throw std::invalid_argument(std::string("domain_kl: need at least 2 samples of domain ") +
                                std::string(corpus::domain_name(d)));
  m.mean /= static_cast<double>(m.n);
  for (const auto& s : samples)
    if (s.domain == d) m.var += (s.feature - m.mean).array().square().matrix();
  m.var /= static_cast<double>(m.n);
  m.var = m.var.cwiseMax(kVarFloor);
  return m;
}

}  // namespace

std::vector<FeatureSample> collect_features(mrc::MrcModel& model, adversary::DomainClassifier& pooler,
                                            const corpus::Vocabulary& vocab,
                                            const std::vector<corpus::QAExample>& source,
                                            const std::vector<corpus::QAExample>& target, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("collect_features: n must be >= 1");
  std::vector<FeatureSample> out;
  sample_domain(out, model, pooler, vocab, source, n, seed, corpus::Domain::source);
  sample_domain(out, model, pooler, vocab, target, n, seed + 1, corpus::Domain::target);
  return out;
}

double gaussian_kl(const Eigen::RowVectorXd& mu_a, const Eigen::RowVectorXd& var_a, const Eigen::RowVectorXd& mu_b,
                   const Eigen::RowVectorXd& var_b) {
  const auto ra = var_a.array(), rb = var_b.array();
  return 0.5 * ((ra / rb) + (mu_b - mu_a).array().square() / rb - 1.0 + (rb / ra).log()).sum();
}

double domain_kl(const std::vector<FeatureSample>& samples) {
  const Moments a = fit(samples, corpus::Domain::source);
  const Moments b = fit(samples, corpus::Domain::target);
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("domain_kl: inconsistent feature lengths");
  return 0.5 * (gaussian_kl(a.mean, a.var, b.mean, b.var) + gaussian_kl(b.mean, b.var, a.mean, a.var));
}

Projection pca_project(const Matrix& x) {
  if (x.rows() < 3) throw std::invalid_argument("pca_project: need at least 3 samples");
  const Matrix centred = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index d = cov.rows();
  Projection p;
  p.total_variance = cov.trace();
  p.points = Matrix::Zero(x.rows(), 2);
  p.eigenvalues.setZero();
  // Eigenvalues come back ascending.
  const double scale = std::max(1.0, std::abs(es.eigenvalues()(d - 1)));
  int informative = 0;
  for (int k = 0; k < 2 && k < d; ++k) {
    const double ev = es.eigenvalues()(d - 1 - k);
    if (ev <= 1e-12 * scale) break;
    p.points.col(k) = centred * es.eigenvectors().col(d - 1 - k);
    p.eigenvalues(k) = ev;
    ++informative;
  }
  if (informative < 2) spdlog::warn("pca_project: only {} informative direction(s); padding with zeros", informative);
  return p;
}

Projection export_projection(const std::vector<FeatureSample>& samples, const std::filesystem::path& csv_path) {
  if (samples.size() < 3) throw std::invalid_argument("export_projection: need at least 3 samples");
  Matrix x(static_cast<Eigen::Index>(samples.size()), samples.front().feature.size());
  for (std::size_t i = 0; i < samples.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = samples[i].feature;
  Projection p = pca_project(x);
  std::ostringstream csv;
  csv.precision(10);
  csv << "x,y,domain\n";
  for (std::size_t i = 0; i < samples.size(); ++i)
    csv << p.points(static_cast<Eigen::Index>(i), 0) << ',' << p.points(static_cast<Eigen::Index>(i), 1) << ','
        << corpus::domain_name(samples[i].domain) << '\n';
  io::write_file_atomic(csv_path, csv.str());
  return p;
}

double probe_accuracy(const std::vector<FeatureSample>& samples, std::uint64_t seed, int iterations) {
  if (samples.size() < 4) throw std::invalid_argument("probe_accuracy: need at least 4 samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train = samples.size() / 2;
  const Eigen::Index d = samples.front().feature.size();

  Matrix xtr(static_cast<Eigen::Index>(n_train), d);
  Eigen::VectorXd ytr(static_cast<Eigen::Index>(n_train));
  for (std::size_t i = 0; i < n_train; ++i) {
    xtr.row(static_cast<Eigen::Index>(i)) = samples[order[i]].feature;
    ytr(static_cast<Eigen::Index>(i)) = adversary::domain_label(samples[order[i]].domain);
  }
  const Eigen::RowVectorXd mu = xtr.colwise().mean();
  Eigen::RowVectorXd sd = ((xtr.rowwise() - mu).array().square().colwise().mean()).sqrt().matrix();
  sd = sd.cwiseMax(1e-6);
  const auto standardise = [&](const Eigen::RowVectorXd& f) -> Eigen::RowVectorXd {
    return ((f - mu).array() / sd.array()).matrix();
  };
  for (Eigen::Index i = 0; i < xtr.rows(); ++i) xtr.row(i) = standardise(xtr.row(i));

  // Full-batch gradient descent on L2-regularised logistic loss.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  const double lr = 0.1, l2 = 1e-3;
  const double n = static_cast<double>(n_train);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd z = (xtr * w).array() + b;
    const Eigen::VectorXd p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    const Eigen::VectorXd r = p - ytr;
    w -= lr * (xtr.transpose() * r / n + l2 * w);
    b -= lr * r.sum() / n;
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t i = n_train; i < samples.size(); ++i) {
    const double z = standardise(samples[order[i]].feature).dot(w) + b;
    const bool pred_target = z > 0;
    correct += pred_target == (samples[order[i]].domain == corpus::Domain::target);
    ++total;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

void save_features(const std::filesystem::path& path, const std::vector<FeatureSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("save_features: no samples");
  ag::FMatrix feats(static_cast<Eigen::Index>(samples.size()), samples.front().feature.size());
  ag::FMatrix labels(static_cast<Eigen::Index>(samples.size()), 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    feats.row(static_cast<Eigen::Index>(i)) = samples[i].feature.cast<float>();
    labels(static_cast<Eigen::Index>(i), 0) = static_cast<float>(adversary::domain_label(samples[i].domain));
  }
  ckpt::Manifest m;
  m.kind = "features";
  ckpt::save_tensors(path, {{"features", feats}, {"domains", labels}}, m);
}

}  // namespace adamrc::diag
