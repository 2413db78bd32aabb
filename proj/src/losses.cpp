#include "ntda/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ntda/error.hpp"

namespace ntda {

namespace {

void validate_supervised(const Matrix& features, const Labels& labels, const PrototypeSet& protos,
                         std::span<const double> weights, const char* op) {
  if (features.rows() == 0) throw DataError(std::string(op) + ": empty batch");
  if (labels.size() != features.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(features.rows()) + " samples");
  }
  if (!weights.empty() && weights.size() != features.rows()) {
    throw ShapeError(std::string(op) + ": weight vector length does not match batch");
  }
  for (std::size_t y : labels) {
    if (y >= protos.class_count()) throw DataError(std::string(op) + ": label out of range");
  }
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw DataError(std::string(op) + ": weight outside [0, 1]");
  }
}

double weight_at(std::span<const double> weights, std::size_t i) { return weights.empty() ? 1.0 : weights[i]; }

LossValue from_distance_grad(double value, const Matrix& features, const PrototypeSet& protos, const Matrix& upstream) {
  auto g = pairwise_sqdist_backward(features, protos.prototypes(), upstream);
  return {value, std::move(g.features), std::move(g.prototypes)};
}

enum class AdvSide { kDiscriminator, kExtractor };

LossValue adversarial(const Matrix& target_features, const PrototypeSet& protos, AdvSide side, const char* op) {
  if (target_features.rows() == 0) throw DataError(std::string(op) + ": empty target batch");
  if (protos.class_count() < 2) throw ConfigError(std::string(op) + ": at least 2 classes are required");
  const std::size_t n = target_features.rows();
  const std::size_t m = protos.class_count();
  const double t = protos.temperature();
  const double log_m = std::log(static_cast<double>(m));

  const Matrix sqdist = pairwise_sqdist(target_features, protos.prototypes());
  const DistanceSoftmax sm = softmax_of_distances(sqdist, t);
  const std::vector<double> disc = normalized_entropy(sm);

  double value = 0.0;
  Matrix upstream(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = disc[i];
    const double c = std::clamp(d, kDiscriminatorEps, 1.0 - kDiscriminatorEps);
    double dl_dd = 0.0;
    if (side == AdvSide::kDiscriminator) {
      value -= std::log(c);
      dl_dd = -1.0 / (static_cast<double>(n) * c);
    } else {
      value -= std::log1p(-c);
      dl_dd = 1.0 / (static_cast<double>(n) * (1.0 - c));
    }
    if (d < kDiscriminatorEps || d > 1.0 - kDiscriminatorEps) continue;
    // dD/dsqdist_ij = P_ij (log P_ij + H_i) / (T ln M)
    for (std::size_t j = 0; j < m; ++j) {
      upstream(i, j) = dl_dd * sm.prob(i, j) * (sm.log_prob(i, j) + sm.entropy[i]) / (t * log_m);
    }
  }
  return from_distance_grad(value / static_cast<double>(n), target_features, protos, upstream);
}

struct Terms {
  double cls = 0.0;
  double reg = 0.0;
  double adv = 0.0;
  Matrix src_grad_f;
  Matrix tgt_grad_f;
  Matrix grad_p;
};

Terms combine(const SourceBatch& source, const Matrix& target_features, const PrototypeSet& protos,
              TradeOff tradeoff, AdvSide side) {
  if (!(tradeoff.lambda_reg >= 0.0) || !(tradeoff.lambda_adv >= 0.0)) {
    throw ConfigError("objective: trade-off parameters must be non-negative");
  }
  Terms terms;
  terms.grad_p = Matrix(protos.class_count(), protos.dim());
  terms.src_grad_f = Matrix(source.features.rows(), protos.dim());
  terms.tgt_grad_f = Matrix(target_features.rows(), protos.dim());

  if (source.features.rows() > 0) {
    LossValue cls = loss_cls(source.features, source.labels, protos, source.weights);
    LossValue reg = loss_reg(source.features, source.labels, protos, source.weights);
    terms.cls = cls.value;
    terms.reg = reg.value;
    terms.src_grad_f += cls.grad_features;
    terms.src_grad_f += tradeoff.lambda_reg * reg.grad_features;
    terms.grad_p += cls.grad_prototypes;
    terms.grad_p += tradeoff.lambda_reg * reg.grad_prototypes;
  }
  if (tradeoff.lambda_adv > 0.0) {
    LossValue adv = side == AdvSide::kDiscriminator ? loss_adv_d(target_features, protos)
                                                     : loss_adv_f(target_features, protos);
    terms.adv = adv.value;
    terms.tgt_grad_f += tradeoff.lambda_adv * adv.grad_features;
    terms.grad_p += tradeoff.lambda_adv * adv.grad_prototypes;
  }
  return terms;
}

}  // namespace

LossValue loss_cls(const Matrix& features, const Labels& labels, const PrototypeSet& protos,
                   std::span<const double> weights) {
  validate_supervised(features, labels, protos, weights, "loss_cls");
  const std::size_t n = features.rows();
  const std::size_t m = protos.class_count();
  const double t = protos.temperature();
  const DistanceSoftmax sm = softmax_of_distances(pairwise_sqdist(features, protos.prototypes()), t);

  double value = 0.0;
  Matrix upstream(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weight_at(weights, i);
    if (w == 0.0) continue;
    value -= w * sm.log_prob(i, labels[i]);
    const double scale = w / (static_cast<double>(n) * t);
    for (std::size_t j = 0; j < m; ++j) {
      upstream(i, j) = scale * ((j == labels[i] ? 1.0 : 0.0) - sm.prob(i, j));
    }
  }
  return from_distance_grad(value / static_cast<double>(n), features, protos, upstream);
}

LossValue loss_reg(const Matrix& features, const Labels& labels, const PrototypeSet& protos,
                   std::span<const double> weights) {
  validate_supervised(features, labels, protos, weights, "loss_reg");
  const std::size_t n = features.rows();
  const Matrix& p = protos.prototypes();
  LossValue out{0.0, Matrix(n, p.cols()), Matrix(p.rows(), p.cols())};
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weight_at(weights, i);
    if (w == 0.0) continue;
    auto fi = features.row(i);
    auto py = p.row(labels[i]);
    auto gf = out.grad_features.row(i);
    auto gp = out.grad_prototypes.row(labels[i]);
    double dist = 0.0;
    for (std::size_t k = 0; k < fi.size(); ++k) {
      const double diff = fi[k] - py[k];
      dist += diff * diff;
      const double g = 2.0 * w * diff / static_cast<double>(n);
      gf[k] = g;
      gp[k] -= g;
    }
    out.value += w * dist;
  }
  out.value /= static_cast<double>(n);
  return out;
}

LossValue loss_adv_d(const Matrix& target_features, const PrototypeSet& protos) {
  return adversarial(target_features, protos, AdvSide::kDiscriminator, "loss_adv_d");
}

LossValue loss_adv_f(const Matrix& target_features, const PrototypeSet& protos) {
  return adversarial(target_features, protos, AdvSide::kExtractor, "loss_adv_f");
}

ObjectiveValue objective_prototypes(const SourceBatch& source, const Matrix& target_features,
                                    const PrototypeSet& protos, TradeOff tradeoff) {
  Terms t = combine(source, target_features, protos, tradeoff, AdvSide::kDiscriminator);
  ObjectiveValue out;
  out.cls = t.cls;
  out.reg = t.reg;
  out.adv = t.adv;
  out.value = t.cls + tradeoff.lambda_reg * t.reg + tradeoff.lambda_adv * t.adv;
  out.grad_prototypes = std::move(t.grad_p);
  return out;
}

ObjectiveValue objective_extractor(const SourceBatch& source, const Matrix& target_features,
                                   const PrototypeSet& protos, TradeOff tradeoff) {
  Terms t = combine(source, target_features, protos, tradeoff, AdvSide::kExtractor);
  ObjectiveValue out;
  out.cls = t.cls;
  out.reg = t.reg;
  out.adv = t.adv;
  out.value = t.cls + tradeoff.lambda_reg * t.reg + tradeoff.lambda_adv * t.adv;
  out.grad_source_features = std::move(t.src_grad_f);
  out.grad_target_features = std::move(t.tgt_grad_f);
  return out;
}

}  // namespace ntda
