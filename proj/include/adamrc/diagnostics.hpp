#pragma once

// Feature diagnostics: pooled encoder features per domain, a Gaussian KL
// between the two domain clouds, a PCA projection for plotting, and a
// logistic-regression domain probe.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "adamrc/adversary.hpp"
#include "adamrc/corpus.hpp"
#include "adamrc/mrc.hpp"

namespace adamrc::diag {

using ag::Matrix;

struct FeatureSample {
  Eigen::RowVectorXd feature;  // [pooled M^p; M^q], length 4m
  corpus::Domain domain = corpus::Domain::source;
};

// n examples from each domain (all of a domain, with a warning, when it has
// fewer), sampled deterministically from seed. Source samples come first.
std::vector<FeatureSample> collect_features(mrc::MrcModel& model, adversary::DomainClassifier& pooler,
                                            const corpus::Vocabulary& vocab,
                                            const std::vector<corpus::QAExample>& source,
                                            const std::vector<corpus::QAExample>& target, int n, std::uint64_t seed);

// Symmetrised KL between diagonal Gaussians fitted per domain (MLE variance,
// floored at 1e-6). Throws when a domain has fewer than two samples.
double domain_kl(const std::vector<FeatureSample>& samples);

// Closed-form KL(N(mu_a, diag var_a) || N(mu_b, diag var_b)).
double gaussian_kl(const Eigen::RowVectorXd& mu_a, const Eigen::RowVectorXd& var_a, const Eigen::RowVectorXd& mu_b,
                   const Eigen::RowVectorXd& var_b);

struct Projection {
  Matrix points;                 // N x 2
  Eigen::Vector2d eigenvalues;   // variance captured per axis
  double total_variance = 0.0;   // trace of the input covariance
};

// Mean-centred projection onto the top two principal directions (covariance
// normalised by N). Pads the second axis with zeros when the data has fewer
// than two informative directions.
Projection pca_project(const Matrix& x);
Projection export_projection(const std::vector<FeatureSample>& samples, const std::filesystem::path& csv_path);

// Accuracy of a logistic-regression domain classifier trained on one half of
// the samples (shuffled with seed) and tested on the other half.
double probe_accuracy(const std::vector<FeatureSample>& samples, std::uint64_t seed, int iterations = 500);

void save_features(const std::filesystem::path& path, const std::vector<FeatureSample>& samples);

}  // namespace adamrc::diag
