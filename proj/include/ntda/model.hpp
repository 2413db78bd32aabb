#pragma once

// Feature extractor, prototype classifier and the entropy-based domain
// discriminator that shares the classifier's parameters.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ntda/matrix.hpp"

namespace ntda {

using Labels = std::vector<std::size_t>;

struct DenseLayer {
  Matrix weight;             // in x out
  std::vector<double> bias;  // out
};

// Multilayer perceptron with a rectifier after every layer except the last.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  explicit FeatureExtractor(std::vector<DenseLayer> layers);

  // dims = {in, hidden..., out}. Weights uniform in +-sqrt(6 / (in + out)), zero biases.
  static FeatureExtractor init_uniform(std::span<const std::size_t> dims, std::mt19937_64& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t depth() const noexcept { return layers_.size(); }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
};

// Activations retained by a forward pass for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;        // input seen by each layer
  std::vector<Matrix> preactivations;  // affine output of each layer
};

struct ExtractorGrad {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  static ExtractorGrad zeros_like(const FeatureExtractor& extractor);
  ExtractorGrad& operator+=(const ExtractorGrad& other);
};

Matrix extract(const FeatureExtractor& extractor, const Matrix& x);
Matrix extract(const FeatureExtractor& extractor, const Matrix& x, ForwardCache& cache);

// Parameter gradients given dL/d(features). If input_grad is non-null it receives dL/dx.
ExtractorGrad extract_backward(const FeatureExtractor& extractor, const ForwardCache& cache, const Matrix& upstream,
                               Matrix* input_grad = nullptr);

class PrototypeSet {
 public:
  PrototypeSet() = default;
  PrototypeSet(Matrix prototypes, double temperature);

  // N(0, stddev^2) entries.
  static PrototypeSet init_gaussian(std::size_t classes, std::size_t dim, double temperature, std::mt19937_64& rng,
                                    double stddev);

  const Matrix& prototypes() const noexcept { return prototypes_; }
  Matrix& prototypes() noexcept { return prototypes_; }
  double temperature() const noexcept { return temperature_; }
  std::size_t class_count() const noexcept { return prototypes_.rows(); }
  std::size_t dim() const noexcept { return prototypes_.cols(); }

 private:
  Matrix prototypes_;
  double temperature_ = 1.0;
};

struct ModelState {
  FeatureExtractor extractor;
  PrototypeSet prototypes;

  // dims = {in, hidden..., d}; extractor then prototypes drawn from one stream.
  static ModelState initialize(std::span<const std::size_t> dims, std::size_t classes, double temperature,
                               std::uint64_t seed, double prototype_init_std);
};

// Row-wise softmax of -sqdist / T with max-subtraction. Also yields the
// log-probabilities and the (natural-log) entropy of every row, which the
// discriminator and its losses reuse.
struct DistanceSoftmax {
  Matrix prob;
  Matrix log_prob;
  std::vector<double> entropy;
};

DistanceSoftmax softmax_of_distances(const Matrix& sqdist, double temperature);

Matrix class_posteriors(const Matrix& features, const PrototypeSet& protos);

// argmin_j ||f_i - p_j||^2, lowest index on ties.
Labels classify(const Matrix& features, const PrototypeSet& protos);

// Normalized prediction entropy H / ln M per row, in (0, 1].
std::vector<double> discriminate(const Matrix& features, const PrototypeSet& protos);
std::vector<double> normalized_entropy(const DistanceSoftmax& sm);

nlohmann::json to_json(const ModelState& model);
ModelState model_from_json(const nlohmann::json& doc);
void save_model(const std::filesystem::path& path, const ModelState& model);
ModelState load_model(const std::filesystem::path& path);

}  // namespace ntda
