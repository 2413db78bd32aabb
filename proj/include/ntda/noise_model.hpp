#pragma once

// Unsupervised noise remover: a 1-D two-component Gaussian mixture fitted by
// EM to each source sample's euclidean distance from its labeled prototype.
// Component 0 (smaller mean) models clean samples.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ntda/dataset.hpp"
#include "ntda/model.hpp"

namespace ntda {

inline constexpr double kSigmaFloor = 1e-6;

struct GaussianMixture2 {
  std::array<double, 2> alpha{0.5, 0.5};
  std::array<double, 2> mu{0.0, 1.0};
  std::array<double, 2> sigma{1.0, 1.0};

  // Reorders components so mu[0] <= mu[1].
  void canonicalize();

  friend bool operator==(const GaussianMixture2&, const GaussianMixture2&) = default;
};

struct EmTrace {
  std::size_t iterations = 0;
  std::vector<double> log_likelihood_history;
  bool converged = false;
};

struct EmOptions {
  std::size_t max_iter = 100;
  double tol = 1e-6;
};

struct EmFit {
  GaussianMixture2 mixture;
  EmTrace trace;
};

// Throws DataError when fewer than 4 distances are given, any is negative or
// non-finite, or all are identical.
EmFit fit_em(std::span<const double> distances, EmOptions options = {});

// Mean log-likelihood of the data under g.
double mean_log_likelihood(std::span<const double> distances, const GaussianMixture2& g);

// p(clean | d), evaluated in log space.
double posterior_clean(double d, const GaussianMixture2& g);

// 0 when p_clean <= eta, (p_clean - eta) / (1 - eta) otherwise.
double sample_weight(double p_clean, double eta);

struct SourceWeights {
  std::vector<double> distances;  // euclidean, to the labeled prototype
  std::vector<double> p_clean;
  std::vector<double> weights;
  GaussianMixture2 mixture;
  EmTrace trace;
};

// Distances from precomputed features.
std::vector<double> distances_to_labeled_prototype(const Matrix& features, const Labels& labels,
                                                   const PrototypeSet& protos);

SourceWeights weights_from_distances(std::vector<double> distances, double eta, EmOptions options = {});

SourceWeights compute_weights(const ModelState& model, const Matrix& source_x, const Labels& source_labels,
                              double eta, EmOptions options = {});
SourceWeights compute_weights(const ModelState& model, const DomainDataset& source, double eta,
                              EmOptions options = {});

}  // namespace ntda
