#include "ntda/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "ntda/error.hpp"

namespace ntda {

namespace {

constexpr const char* kModelSchema = "ntda.model/1";

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string(what) + ": non-finite values");
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("FeatureExtractor: at least one layer is required");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.cols()) {
      throw ShapeError("FeatureExtractor: layer " + std::to_string(l) + " bias does not match weight " +
                       layer.weight.shape_str());
    }
    if (l > 0 && layers_[l - 1].weight.cols() != layer.weight.rows()) {
      throw ShapeError("FeatureExtractor: layer " + std::to_string(l) + " input " +
                       std::to_string(layer.weight.rows()) + " does not chain with previous output " +
                       std::to_string(layers_[l - 1].weight.cols()));
    }
  }
}

FeatureExtractor FeatureExtractor::init_uniform(std::span<const std::size_t> dims, std::mt19937_64& rng) {
  if (dims.size() < 2) throw ConfigError("FeatureExtractor: need at least input and output dims");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    if (in == 0 || out == 0) throw ConfigError("FeatureExtractor: zero-width layer");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Matrix(in, out), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.flat()) w = dist(rng);
    layers.push_back(std::move(layer));
  }
  return FeatureExtractor(std::move(layers));
}

std::size_t FeatureExtractor::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.rows(); }

std::size_t FeatureExtractor::output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.cols(); }

ExtractorGrad ExtractorGrad::zeros_like(const FeatureExtractor& extractor) {
  ExtractorGrad g;
  for (const auto& layer : extractor.layers()) {
    g.weight.emplace_back(layer.weight.rows(), layer.weight.cols());
    g.bias.emplace_back(layer.bias.size(), 0.0);
  }
  return g;
}

ExtractorGrad& ExtractorGrad::operator+=(const ExtractorGrad& other) {
  if (other.weight.size() != weight.size()) throw ShapeError("ExtractorGrad: layer count mismatch");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    for (std::size_t j = 0; j < bias[l].size(); ++j) bias[l][j] += other.bias[l][j];
  }
  return *this;
}

Matrix extract(const FeatureExtractor& extractor, const Matrix& x) {
  ForwardCache unused;
  return extract(extractor, x, unused);
}

Matrix extract(const FeatureExtractor& extractor, const Matrix& x, ForwardCache& cache) {
  if (x.cols() != extractor.input_dim()) {
    throw ShapeError("extract: input " + x.shape_str() + " for extractor with input dim " +
                     std::to_string(extractor.input_dim()));
  }
  cache.inputs.clear();
  cache.preactivations.clear();
  const auto& layers = extractor.layers();
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = add_row_bias(matmul(h, layers[l].weight), layers[l].bias);
    cache.inputs.push_back(std::move(h));
    h = (l + 1 < layers.size()) ? relu_forward(z) : z;
    cache.preactivations.push_back(std::move(z));
  }
  return h;
}

ExtractorGrad extract_backward(const FeatureExtractor& extractor, const ForwardCache& cache, const Matrix& upstream,
                               Matrix* input_grad) {
  const auto& layers = extractor.layers();
  if (cache.inputs.size() != layers.size()) throw ShapeError("extract_backward: cache does not match extractor");
  ExtractorGrad g = ExtractorGrad::zeros_like(extractor);
  Matrix grad = upstream;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) grad = relu_backward(cache.preactivations[l], grad);
    g.weight[l] = matmul_tn(cache.inputs[l], grad);
    g.bias[l] = column_sums(grad);
    if (l > 0 || input_grad != nullptr) grad = matmul_nt(grad, layers[l].weight);
  }
  if (input_grad != nullptr) *input_grad = std::move(grad);
  return g;
}

// ---------------------------------------------------------------------------
// PrototypeSet / ModelState

PrototypeSet::PrototypeSet(Matrix prototypes, double temperature)
    : prototypes_(std::move(prototypes)), temperature_(temperature) {
  if (prototypes_.rows() < 2) throw ConfigError("PrototypeSet: at least 2 classes are required");
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) {
    throw ConfigError("PrototypeSet: temperature must be positive and finite");
  }
  require_finite(prototypes_, "PrototypeSet");
}

PrototypeSet PrototypeSet::init_gaussian(std::size_t classes, std::size_t dim, double temperature,
                                         std::mt19937_64& rng, double stddev) {
  if (!(stddev >= 0.0)) throw ConfigError("PrototypeSet: init stddev must be >= 0");
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix p(classes, dim);
  for (double& v : p.flat()) v = dist(rng);
  return PrototypeSet(std::move(p), temperature);
}

ModelState ModelState::initialize(std::span<const std::size_t> dims, std::size_t classes, double temperature,
                                  std::uint64_t seed, double prototype_init_std) {
  std::mt19937_64 rng(seed);
  ModelState state;
  state.extractor = FeatureExtractor::init_uniform(dims, rng);
  state.prototypes = PrototypeSet::init_gaussian(classes, state.extractor.output_dim(), temperature, rng,
                                                  prototype_init_std);
  return state;
}

// ---------------------------------------------------------------------------
// Classifier and discriminator

DistanceSoftmax softmax_of_distances(const Matrix& sqdist, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("softmax_of_distances: temperature must be positive");
  require_finite(sqdist, "softmax_of_distances");
  const std::size_t n = sqdist.rows();
  const std::size_t m = sqdist.cols();
  DistanceSoftmax out{Matrix(n, m), Matrix(n, m), std::vector<double>(n, 0.0)};
  std::vector<double> shifted(m);
  for (std::size_t i = 0; i < n; ++i) {
    auto d = sqdist.row(i);
    // Largest logit belongs to the smallest distance.
    const double dmin = *std::min_element(d.begin(), d.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      shifted[j] = -(d[j] - dmin) / temperature;
      sum += std::exp(shifted[j]);
    }
    const double lse = std::log(sum);
    double weighted_logit = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double lp = shifted[j] - lse;
      const double p = std::exp(lp);
      out.log_prob(i, j) = lp;
      out.prob(i, j) = p;
      weighted_logit += p * shifted[j];
    }
    // H = lse - sum_j P_j z_j; exact ln M when every shifted logit is 0.
    out.entropy[i] = std::clamp(lse - weighted_logit, 0.0, std::log(static_cast<double>(m)));
  }
  return out;
}

Matrix class_posteriors(const Matrix& features, const PrototypeSet& protos) {
  require_finite(features, "class_posteriors");
  return softmax_of_distances(pairwise_sqdist(features, protos.prototypes()), protos.temperature()).prob;
}

Labels classify(const Matrix& features, const PrototypeSet& protos) {
  const Matrix d = pairwise_sqdist(features, protos.prototypes());
  Labels out(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    auto row = d.row(i);
    out[i] = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<double> normalized_entropy(const DistanceSoftmax& sm) {
  const std::size_t m = sm.prob.cols();
  if (m < 2) throw ConfigError("discriminator: at least 2 classes are required");
  const double norm = std::log(static_cast<double>(m));
  std::vector<double> out(sm.entropy.size());
  // A posterior that is one-hot in double precision has a true entropy below the
  // smallest representable value, not zero; rounding can also overshoot ln M.
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(sm.entropy[i] / norm, std::numeric_limits<double>::min(), 1.0);
  }
  return out;
}

std::vector<double> discriminate(const Matrix& features, const PrototypeSet& protos) {
  if (protos.class_count() < 2) throw ConfigError("discriminate: at least 2 classes are required");
  require_finite(features, "discriminate");
  return normalized_entropy(softmax_of_distances(pairwise_sqdist(features, protos.prototypes()), protos.temperature()));
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const ModelState& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.extractor.layers()) {
    layers.push_back({{"in", layer.weight.rows()},
                      {"out", layer.weight.cols()},
                      {"weight", layer.weight.data()},
                      {"bias", layer.bias}});
  }
  const Matrix& p = model.prototypes.prototypes();
  return {{"schema", kModelSchema},
          {"temperature", model.prototypes.temperature()},
          {"layers", std::move(layers)},
          {"prototypes", {{"rows", p.rows()}, {"cols", p.cols()}, {"data", p.data()}}}};
}

ModelState model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != kModelSchema) {
      throw ParseError("model: unsupported schema " + doc.at("schema").dump(), 0);
    }
    std::vector<DenseLayer> layers;
    for (const auto& l : doc.at("layers")) {
      const auto in = l.at("in").get<std::size_t>();
      const auto out = l.at("out").get<std::size_t>();
      layers.push_back({Matrix(in, out, l.at("weight").get<std::vector<double>>()),
                        l.at("bias").get<std::vector<double>>()});
    }
    const auto& p = doc.at("prototypes");
    ModelState state;
    state.extractor = FeatureExtractor(std::move(layers));
    state.prototypes = PrototypeSet(
        Matrix(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>(), p.at("data").get<std::vector<double>>()),
        doc.at("temperature").get<double>());
    if (state.extractor.output_dim() != state.prototypes.dim()) {
      throw ParseError("model: extractor output dim does not match prototype width", 0);
    }
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what(), 0);
  } catch (const ShapeError& e) {
    throw ParseError(std::string("model: ") + e.what(), 0);
  }
}

void save_model(const std::filesystem::path& path, const ModelState& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json(model).dump() << '\n';
}

ModelState load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return model_from_json(doc);
}

}  // namespace ntda
