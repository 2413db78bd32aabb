#pragma once

// Two-phase training loop: supervised warm-up on the prototype objectives,
// then per-epoch noise modelling and cluster-level adversarial adaptation on
// the surviving source samples and the unlabeled target features.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ntda/dataset.hpp"
#include "ntda/model.hpp"
#include "ntda/noise_model.hpp"

namespace ntda {

enum class UpdateMode {
  kSimultaneous,  // both parameter groups stepped from one forward pass
  kAlternating,   // prototypes first, extractor objective re-evaluated against the new prototypes
};

struct TrainConfig {
  std::size_t warmup_epochs = 5;
  std::size_t train_epochs = 10;
  std::size_t batch_size = 64;
  double temperature = 10.0;
  double eta = 0.5;
  double lambda1 = 0.5;
  double lambda2 = 1.0;
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t embed_dim = 16;
  // Prototypes drawn near the origin start with no classifier gradient and the
  // compactness term collapses the embedding; keep it on the scale of the features.
  double prototype_init_std = 2.0;
  // false disables the noise remover: every source sample keeps weight 1.
  bool noise_removal = true;
  UpdateMode update_mode = UpdateMode::kSimultaneous;
  std::size_t em_max_iter = 100;
  double em_tol = 1e-6;

  // Throws ConfigError on the first invalid field.
  void validate() const;
  std::vector<std::size_t> layer_dims(std::size_t in_dim) const;
};

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});

struct SgdHyper {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v.
// Throws NumericError naming `group` if any gradient entry is non-finite; nothing is modified then.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              const SgdHyper& hyper, std::string_view group);

// Momentum buffers for every parameter group of a ModelState.
struct SgdState {
  std::vector<Matrix> weight_velocity;
  std::vector<std::vector<double>> bias_velocity;
  Matrix prototype_velocity;

  static SgdState zeros_like(const ModelState& model);
  void step_extractor(FeatureExtractor& extractor, const ExtractorGrad& grad, const SgdHyper& hyper);
  void step_prototypes(PrototypeSet& protos, const Matrix& grad, const SgdHyper& hyper);
};

enum class Phase { kWarmup, kAdapt };
std::string to_string(Phase phase);

struct EpochRecord {
  std::size_t epoch = 0;
  Phase phase = Phase::kWarmup;
  std::size_t batches = 0;
  double loss_cls = 0.0;
  double loss_reg = 0.0;
  double loss_adv_d = 0.0;
  double loss_adv_f = 0.0;
  double retained_fraction = 1.0;
  std::optional<GaussianMixture2> mixture;
  std::optional<double> mean_target_discriminator;
  std::vector<double> weights;  // per source sample, adapt phase only
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const EpochRecord& record);

struct TrainingState {
  ModelState model;
  SgdState velocity;
  std::mt19937_64 rng;
  std::size_t batches_consumed = 0;
  std::size_t epochs_completed = 0;

  static TrainingState initialize(const TrainConfig& config, std::size_t in_dim, std::size_t classes);
};

struct StepLosses {
  double cls = 0.0;
  double reg = 0.0;
  double adv_d = 0.0;
  double adv_f = 0.0;
};

// One warm-up minibatch: L_cls + lambda1 * L_reg, both parameter groups updated.
StepLosses warmup_step(TrainingState& state, const Matrix& x, const Labels& y, const TrainConfig& config);

// One adaptation minibatch. An empty source batch leaves only the adversarial terms.
StepLosses adapt_step(TrainingState& state, const Matrix& source_x, const Labels& source_y,
                      std::span<const double> source_w, const Matrix& target_x, const TrainConfig& config);

using EpochObserver = std::function<void(const TrainingState&, EpochRecord&)>;

std::vector<EpochRecord> warmup(TrainingState& state, const DomainDataset& source, const TrainConfig& config,
                                const EpochObserver& observer = {});

EpochRecord adapt_epoch(TrainingState& state, const DomainDataset& source, const Matrix& target_features,
                        const TrainConfig& config);

struct TrainResult {
  ModelState model;
  std::vector<EpochRecord> records;
  // Weights used in the last adaptation epoch; empty when train_epochs = 0.
  std::vector<double> final_weights;
};

// Target labels are never passed in; only target features.
TrainResult train(const TrainConfig& config, const DomainDataset& source, const Matrix& target_features,
                  const EpochObserver& observer = {});

double mean_discriminator(const ModelState& model, const Matrix& x);

}  // namespace ntda
