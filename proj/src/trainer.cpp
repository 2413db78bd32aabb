#include "ntda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ntda/error.hpp"
#include "ntda/losses.hpp"
#include "ntda/rng.hpp"

namespace ntda {

namespace {

SgdHyper hyper_of(const TrainConfig& c) { return {c.learning_rate, c.momentum, c.weight_decay}; }

TradeOff tradeoff_of(const TrainConfig& c) { return {c.lambda1, c.lambda2}; }

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// Hands out minibatches from a pool; when `cycle` is set, an exhausted pool is
// reshuffled and iteration continues.
class BatchCursor {
 public:
  BatchCursor(std::vector<std::size_t> pool, std::mt19937_64& rng) : pool_(std::move(pool)), rng_(rng) {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
  }

  std::size_t size() const noexcept { return pool_.size(); }

  std::vector<std::size_t> next(std::size_t batch, bool cycle) {
    std::vector<std::size_t> out;
    if (pool_.empty()) return out;
    const std::size_t want = cycle ? std::min(batch, pool_.size()) : batch;
    while (out.size() < want) {
      if (pos_ == pool_.size()) {
        if (!cycle) break;
        std::shuffle(pool_.begin(), pool_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(pool_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> pool_;
  std::mt19937_64& rng_;
  std::size_t pos_ = 0;
};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

Labels select_labels(const Labels& y, std::span<const std::size_t> idx) {
  Labels out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = y[idx[i]];
  return out;
}

void require_grad_finite(const Matrix& g, std::string_view group) {
  if (!g.all_finite()) throw NumericError("non-finite gradient in parameter group '" + std::string(group) + "'");
}

void require_grad_finite(const ExtractorGrad& g) {
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    require_grad_finite(g.weight[l], "extractor.layer" + std::to_string(l) + ".weight");
    for (double v : g.bias[l]) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite gradient in parameter group 'extractor.layer" + std::to_string(l) + ".bias'");
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (warmup_epochs < 1) throw ConfigError("warmup_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("eta must lie in [0, 1)");
  if (!(lambda1 >= 0.0)) throw ConfigError("lambda1 must be >= 0");
  if (!(lambda2 >= 0.0)) throw ConfigError("lambda2 must be >= 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (!(prototype_init_std >= 0.0)) throw ConfigError("prototype_init_std must be >= 0");
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw ConfigError("hidden_dims entries must be >= 1");
  }
  if (em_max_iter < 1) throw ConfigError("em_max_iter must be >= 1");
  if (!(em_tol > 0.0)) throw ConfigError("em_tol must be > 0");
}

std::vector<std::size_t> TrainConfig::layer_dims(std::size_t in_dim) const {
  std::vector<std::size_t> dims{in_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(embed_dim);
  return dims;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"warmup_epochs", c.warmup_epochs},
          {"train_epochs", c.train_epochs},
          {"batch_size", c.batch_size},
          {"temperature", c.temperature},
          {"eta", c.eta},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"hidden_dims", c.hidden_dims},
          {"embed_dim", c.embed_dim},
          {"prototype_init_std", c.prototype_init_std},
          {"noise_removal", c.noise_removal},
          {"update_mode", c.update_mode == UpdateMode::kSimultaneous ? "simultaneous" : "alternating"},
          {"em_max_iter", c.em_max_iter},
          {"em_tol", c.em_tol}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig c) {
  if (!doc.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "warmup_epochs") c.warmup_epochs = v.get<std::size_t>();
      else if (key == "train_epochs") c.train_epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "eta") c.eta = v.get<double>();
      else if (key == "lambda1") c.lambda1 = v.get<double>();
      else if (key == "lambda2") c.lambda2 = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "hidden_dims") c.hidden_dims = v.get<std::vector<std::size_t>>();
      else if (key == "embed_dim") c.embed_dim = v.get<std::size_t>();
      else if (key == "prototype_init_std") c.prototype_init_std = v.get<double>();
      else if (key == "noise_removal") c.noise_removal = v.get<bool>();
      else if (key == "em_max_iter") c.em_max_iter = v.get<std::size_t>();
      else if (key == "em_tol") c.em_tol = v.get<double>();
      else if (key == "update_mode") {
        const auto mode = v.get<std::string>();
        if (mode == "simultaneous") c.update_mode = UpdateMode::kSimultaneous;
        else if (mode == "alternating") c.update_mode = UpdateMode::kAlternating;
        else throw ConfigError("update_mode must be 'simultaneous' or 'alternating'");
      } else {
        throw ConfigError("unknown train config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// SGD

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              const SgdHyper& hyper, std::string_view group) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: size mismatch in parameter group '" + std::string(group) + "'");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter group '" + std::string(group) + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = hyper.momentum * velocity[i] + grads[i] + hyper.weight_decay * params[i];
    params[i] -= hyper.learning_rate * velocity[i];
  }
}

SgdState SgdState::zeros_like(const ModelState& model) {
  SgdState s;
  for (const auto& layer : model.extractor.layers()) {
    s.weight_velocity.emplace_back(layer.weight.rows(), layer.weight.cols());
    s.bias_velocity.emplace_back(layer.bias.size(), 0.0);
  }
  s.prototype_velocity = Matrix(model.prototypes.class_count(), model.prototypes.dim());
  return s;
}

void SgdState::step_extractor(FeatureExtractor& extractor, const ExtractorGrad& grad, const SgdHyper& hyper) {
  require_grad_finite(grad);
  auto& layers = extractor.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string name = "extractor.layer" + std::to_string(l);
    sgd_step(layers[l].weight.flat(), grad.weight[l].flat(), weight_velocity[l].flat(), hyper, name + ".weight");
    sgd_step(layers[l].bias, grad.bias[l], bias_velocity[l], hyper, name + ".bias");
  }
}

void SgdState::step_prototypes(PrototypeSet& protos, const Matrix& grad, const SgdHyper& hyper) {
  sgd_step(protos.prototypes().flat(), grad.flat(), prototype_velocity.flat(), hyper, "prototypes");
}

// ---------------------------------------------------------------------------
// Records

std::string to_string(Phase phase) { return phase == Phase::kWarmup ? "warmup" : "adapt"; }

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"schema", "ntda.epoch/1"},
                      {"epoch", r.epoch},
                      {"phase", to_string(r.phase)},
                      {"batches", r.batches},
                      {"loss_cls", r.loss_cls},
                      {"loss_reg", r.loss_reg},
                      {"loss_adv_d", r.loss_adv_d},
                      {"loss_adv_f", r.loss_adv_f},
                      {"retained_fraction", r.retained_fraction},
                      {"warnings", r.warnings}};
  j["mean_target_discriminator"] =
      r.mean_target_discriminator ? nlohmann::json(*r.mean_target_discriminator) : nlohmann::json(nullptr);
  if (r.mixture) {
    j["gmm"] = {{"alpha", r.mixture->alpha}, {"mu", r.mixture->mu}, {"sigma", r.mixture->sigma}};
  } else {
    j["gmm"] = nullptr;
  }
  j["weights"] = r.weights;
  return j;
}

// ---------------------------------------------------------------------------
// Training

TrainingState TrainingState::initialize(const TrainConfig& config, std::size_t in_dim, std::size_t classes) {
  config.validate();
  const auto dims = config.layer_dims(in_dim);
  TrainingState s{ModelState::initialize(dims, classes, config.temperature, derive_seed(config.seed, 0),
                                         config.prototype_init_std),
                  {},
                  std::mt19937_64(derive_seed(config.seed, 1)), 0, 0};
  s.velocity = SgdState::zeros_like(s.model);
  return s;
}

StepLosses warmup_step(TrainingState& state, const Matrix& x, const Labels& y, const TrainConfig& config) {
  ForwardCache cache;
  const Matrix f = extract(state.model.extractor, x, cache);
  const auto& protos = state.model.prototypes;
  LossValue cls = loss_cls(f, y, protos);
  LossValue reg = loss_reg(f, y, protos);

  Matrix grad_f = cls.grad_features + config.lambda1 * reg.grad_features;
  Matrix grad_p = cls.grad_prototypes + config.lambda1 * reg.grad_prototypes;
  require_grad_finite(grad_p, "prototypes");
  ExtractorGrad grad_e = extract_backward(state.model.extractor, cache, grad_f);
  require_grad_finite(grad_e);

  const SgdHyper hyper = hyper_of(config);
  state.velocity.step_prototypes(state.model.prototypes, grad_p, hyper);
  state.velocity.step_extractor(state.model.extractor, grad_e, hyper);
  ++state.batches_consumed;
  return {cls.value, reg.value, 0.0, 0.0};
}

StepLosses adapt_step(TrainingState& state, const Matrix& source_x, const Labels& source_y,
                      std::span<const double> source_w, const Matrix& target_x, const TrainConfig& config) {
  ForwardCache src_cache, tgt_cache;
  const Matrix fs = extract(state.model.extractor, source_x, src_cache);
  const Matrix ft = extract(state.model.extractor, target_x, tgt_cache);
  const TradeOff tradeoff = tradeoff_of(config);
  const SourceBatch batch{fs, source_y, source_w};
  const SgdHyper hyper = hyper_of(config);

  ObjectiveValue proto_obj = objective_prototypes(batch, ft, state.model.prototypes, tradeoff);
  require_grad_finite(proto_obj.grad_prototypes, "prototypes");

  auto extractor_grad = [&](const PrototypeSet& protos, ObjectiveValue& obj) {
    obj = objective_extractor(batch, ft, protos, tradeoff);
    ExtractorGrad g = ExtractorGrad::zeros_like(state.model.extractor);
    if (fs.rows() > 0) g += extract_backward(state.model.extractor, src_cache, obj.grad_source_features);
    if (ft.rows() > 0 && tradeoff.lambda_adv > 0.0) {
      g += extract_backward(state.model.extractor, tgt_cache, obj.grad_target_features);
    }
    require_grad_finite(g);
    return g;
  };

  ObjectiveValue ext_obj;
  if (config.update_mode == UpdateMode::kSimultaneous) {
    ExtractorGrad g = extractor_grad(state.model.prototypes, ext_obj);
    state.velocity.step_prototypes(state.model.prototypes, proto_obj.grad_prototypes, hyper);
    state.velocity.step_extractor(state.model.extractor, g, hyper);
  } else {
    state.velocity.step_prototypes(state.model.prototypes, proto_obj.grad_prototypes, hyper);
    ExtractorGrad g = extractor_grad(state.model.prototypes, ext_obj);
    state.velocity.step_extractor(state.model.extractor, g, hyper);
  }
  ++state.batches_consumed;
  return {proto_obj.cls, proto_obj.reg, proto_obj.adv, ext_obj.adv};
}

double mean_discriminator(const ModelState& model, const Matrix& x) {
  if (x.rows() == 0) throw DataError("mean_discriminator: no samples");
  const auto d = discriminate(extract(model.extractor, x), model.prototypes);
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

std::vector<EpochRecord> warmup(TrainingState& state, const DomainDataset& source, const TrainConfig& config,
                                const EpochObserver& observer) {
  config.validate();
  if (source.size() == 0) throw DataError("warmup: empty source dataset");
  std::vector<EpochRecord> records;
  for (std::size_t e = 0; e < config.warmup_epochs; ++e) {
    BatchCursor cursor(iota_indices(source.size()), state.rng);
    EpochRecord rec;
    rec.epoch = state.epochs_completed;
    rec.phase = Phase::kWarmup;
    const std::size_t n_batches = ceil_div(source.size(), config.batch_size);
    for (std::size_t b = 0; b < n_batches; ++b) {
      const auto idx = cursor.next(config.batch_size, false);
      const StepLosses l =
          warmup_step(state, select_rows(source.features, idx), select_labels(source.labels, idx), config);
      rec.loss_cls += l.cls;
      rec.loss_reg += l.reg;
    }
    rec.batches = n_batches;
    rec.loss_cls /= static_cast<double>(n_batches);
    rec.loss_reg /= static_cast<double>(n_batches);
    ++state.epochs_completed;
    if (observer) observer(state, rec);
    records.push_back(std::move(rec));
  }
  return records;
}

EpochRecord adapt_epoch(TrainingState& state, const DomainDataset& source, const Matrix& target_features,
                        const TrainConfig& config) {
  config.validate();
  if (target_features.rows() == 0) throw DataError("adapt_epoch: no target features");
  EpochRecord rec;
  rec.epoch = state.epochs_completed;
  rec.phase = Phase::kAdapt;

  // Noise model is refitted on the full source set with the epoch-start model.
  SourceWeights sw = compute_weights(state.model, source.features, source.labels, config.eta,
                                     {config.em_max_iter, config.em_tol});
  rec.mixture = sw.mixture;
  if (!config.noise_removal) std::fill(sw.weights.begin(), sw.weights.end(), 1.0);

  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < sw.weights.size(); ++i) {
    if (sw.weights[i] > 0.0) survivors.push_back(i);
  }
  rec.retained_fraction = static_cast<double>(survivors.size()) / static_cast<double>(source.size());
  if (survivors.empty()) {
    rec.warnings.push_back("all source weights are zero; epoch runs on adversarial target terms only");
  }

  BatchCursor src(std::move(survivors), state.rng);
  BatchCursor tgt(iota_indices(target_features.rows()), state.rng);
  const std::size_t src_batches = ceil_div(src.size(), config.batch_size);
  const std::size_t tgt_batches = ceil_div(tgt.size(), config.batch_size);
  const std::size_t n_batches = std::max(src_batches, tgt_batches);
  const bool cycle_source = src_batches < tgt_batches;
  const bool cycle_target = tgt_batches < src_batches;

  for (std::size_t b = 0; b < n_batches; ++b) {
    const auto si = src.next(config.batch_size, cycle_source);
    const auto ti = tgt.next(config.batch_size, cycle_target);
    std::vector<double> w(si.size());
    for (std::size_t k = 0; k < si.size(); ++k) w[k] = sw.weights[si[k]];
    const Matrix sx = si.empty() ? Matrix(0, source.features.cols()) : select_rows(source.features, si);
    const StepLosses l =
        adapt_step(state, sx, select_labels(source.labels, si), w, select_rows(target_features, ti), config);
    rec.loss_cls += l.cls;
    rec.loss_reg += l.reg;
    rec.loss_adv_d += l.adv_d;
    rec.loss_adv_f += l.adv_f;
  }
  const double nb = static_cast<double>(std::max<std::size_t>(n_batches, 1));
  rec.batches = n_batches;
  rec.loss_cls /= nb;
  rec.loss_reg /= nb;
  rec.loss_adv_d /= nb;
  rec.loss_adv_f /= nb;
  rec.weights = std::move(sw.weights);
  rec.mean_target_discriminator = mean_discriminator(state.model, target_features);
  ++state.epochs_completed;
  return rec;
}

TrainResult train(const TrainConfig& config, const DomainDataset& source, const Matrix& target_features,
                  const EpochObserver& observer) {
  config.validate();
  source.validate();
  if (target_features.cols() != source.features.cols()) {
    throw ShapeError("train: target features " + target_features.shape_str() + " do not match source input width");
  }
  TrainingState state = TrainingState::initialize(config, source.features.cols(), source.class_count);
  TrainResult result;
  auto with_target_d = [&](const TrainingState& s, EpochRecord& rec) {
    if (target_features.rows() > 0) rec.mean_target_discriminator = mean_discriminator(s.model, target_features);
    if (observer) observer(s, rec);
  };
  result.records = warmup(state, source, config, with_target_d);
  for (std::size_t e = 0; e < config.train_epochs; ++e) {
    EpochRecord rec = adapt_epoch(state, source, target_features, config);
    if (observer) observer(state, rec);
    result.records.push_back(std::move(rec));
  }
  if (config.train_epochs > 0) result.final_weights = result.records.back().weights;
  result.model = std::move(state.model);
  return result;
}

}  // namespace ntda
