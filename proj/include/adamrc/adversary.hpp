#pragma once

// Domain classifier over encoder features and the gradient-reversal hook.

#include <cstdint>
#include <vector>

#include "adamrc/autograd.hpp"
#include "adamrc/corpus.hpp"
#include "adamrc/nn.hpp"

namespace adamrc::adversary {

using ag::Graph;
using ag::Matrix;
using ag::Parameter;
using ag::RowVector;
using ag::Var;

inline constexpr int kDefaultMlpHidden = 125;

class DomainClassifier {
 public:
  DomainClassifier() = default;
  // memory_dim is the width of M^p and M^q (2m).
  static DomainClassifier create(int memory_dim, int hidden, std::uint64_t seed);

  nn::ParamRefs params() { return {&pool_score, &w1, &b1, &w2, &b2}; }
  int memory_dim() const { return static_cast<int>(pool_score.cols()); }
  int hidden() const { return static_cast<int>(b1.cols()); }

  Parameter pool_score;  // 1 x 2m
  Parameter w1, b1;      // 4m x H, 1 x H
  Parameter w2, b2;      // H x 1, 1 x 1
};

// Attention pooling of M^p rows into one 1 x 2m vector. Rows at or past
// valid_rows (padding) get zero weight; -1 means all rows.
Var pool_passage(Graph& g, DomainClassifier& c, Var memory, Eigen::Index valid_rows = -1, Var* weights = nullptr);

// Pre-sigmoid score for "target": w2 . tanh([M^p'; M^q] W1 + b1) + b2.
Var domain_logit(Graph& g, DomainClassifier& c, Var memory, Var summary, Eigen::Index valid_rows = -1);
Var classify_domain(Graph& g, DomainClassifier& c, Var memory, Var summary, Eigen::Index valid_rows = -1);
double classify_domain(DomainClassifier& c, const Matrix& memory, const RowVector& summary);

inline double domain_label(corpus::Domain d) { return d == corpus::Domain::target ? 1.0 : 0.0; }

// BCE of one item, computed from the logit for stability.
Var domain_bce(Var logit, corpus::Domain label);

// Mean BCE over probabilities (clamped to [1e-12, 1 - 1e-12]). Throws on an
// empty or mismatched batch.
double domain_loss(const std::vector<double>& probs, const std::vector<corpus::Domain>& labels);

// Identity forward; gradient scaled by -lambda on the way back.
inline Var gradient_reversal(Var x, double lambda) { return ag::grad_reverse(x, lambda); }

}  // namespace adamrc::adversary
