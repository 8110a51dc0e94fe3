#include "adamrc/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace adamrc::adversary {

DomainClassifier DomainClassifier::create(int memory_dim, int hidden, std::uint64_t seed) {
  if (memory_dim <= 0 || hidden <= 0) throw std::invalid_argument("DomainClassifier: dims must be > 0");
  DomainClassifier c;
  c.pool_score = Parameter("classifier.pool_score", 1, memory_dim);
  c.w1 = Parameter("classifier.w1", 2 * memory_dim, hidden);
  c.b1 = Parameter("classifier.b1", 1, hidden);
  c.w2 = Parameter("classifier.w2", hidden, 1);
  c.b2 = Parameter("classifier.b2", 1, 1);
  Rng rng(seed);
  for (Parameter* p : {&c.pool_score, &c.w1, &c.w2}) ag::init_glorot(*p, rng);
  return c;
}

Var pool_passage(Graph& g, DomainClassifier& c, Var memory, Eigen::Index valid_rows, Var* weights) {
  if (memory.rows() < 1) throw std::invalid_argument("pool_passage: empty memory");
  if (valid_rows == 0 || valid_rows > memory.rows()) throw std::invalid_argument("pool_passage: bad valid_rows");
  Var scores = ag::transpose(ag::matmul(memory, ag::transpose(g.param(c.pool_score))));  // 1 x T
  Var w = ag::softmax_rows(scores, valid_rows);
  if (weights) *weights = w;
  return ag::matmul(w, memory);
}

Var domain_logit(Graph& g, DomainClassifier& c, Var memory, Var summary, Eigen::Index valid_rows) {
  const Var parts[] = {pool_passage(g, c, memory, valid_rows), summary};
  Var hidden = ag::tanh(ag::add_row(ag::matmul(ag::hcat(parts), g.param(c.w1)), g.param(c.b1)));
  return ag::add(ag::matmul(hidden, g.param(c.w2)), g.param(c.b2));
}

Var classify_domain(Graph& g, DomainClassifier& c, Var memory, Var summary, Eigen::Index valid_rows) {
  return ag::sigmoid(domain_logit(g, c, memory, summary, valid_rows));
}

double classify_domain(DomainClassifier& c, const Matrix& memory, const RowVector& summary) {
  Graph g(false);
  return classify_domain(g, c, g.constant(memory), g.constant(summary)).scalar();
}

Var domain_bce(Var logit, corpus::Domain label) { return ag::bce_with_logits(logit, domain_label(label)); }

double domain_loss(const std::vector<double>& probs, const std::vector<corpus::Domain>& labels) {
  if (probs.empty()) throw std::invalid_argument("domain_loss: empty batch");
  if (probs.size() != labels.size()) throw std::invalid_argument("domain_loss: probs/labels length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    const double d = domain_label(labels[i]);
    total -= d * std::log(p) + (1.0 - d) * std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

}  // namespace adamrc::adversary
