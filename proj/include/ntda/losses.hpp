#pragma once

// Scalar training objectives with hand-derived gradients with respect to the
// embedded features and the prototypes. Extractor parameter gradients are
// obtained by feeding grad_features into extract_backward.
//
// Weighted variants normalize by the batch size N, not by the sum of weights,
// so a batch with many down-weighted samples contributes a smaller loss.
// An empty weight span means every weight is 1.

#include <span>

#include "ntda/matrix.hpp"
#include "ntda/model.hpp"

namespace ntda {

// Discriminator outputs are clamped to [kDiscriminatorEps, 1 - kDiscriminatorEps]
// before the logarithm; the gradient is zero outside that band.
inline constexpr double kDiscriminatorEps = 1e-7;

struct LossValue {
  double value = 0.0;
  Matrix grad_features;    // N x d
  Matrix grad_prototypes;  // M x d
};

LossValue loss_cls(const Matrix& features, const Labels& labels, const PrototypeSet& protos,
                   std::span<const double> weights = {});

LossValue loss_reg(const Matrix& features, const Labels& labels, const PrototypeSet& protos,
                   std::span<const double> weights = {});

// -mean log D(f): trains the prototypes to keep target entropy high.
LossValue loss_adv_d(const Matrix& target_features, const PrototypeSet& protos);

// -mean log(1 - D(f)): trains the extractor to pull targets onto prototypes.
LossValue loss_adv_f(const Matrix& target_features, const PrototypeSet& protos);

struct SourceBatch {
  const Matrix& features;
  const Labels& labels;
  std::span<const double> weights = {};
};

struct TradeOff {
  double lambda_reg = 0.5;
  double lambda_adv = 1.0;
};

struct ObjectiveValue {
  double value = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double adv = 0.0;
  // Only the gradients for the group being optimized are populated.
  Matrix grad_source_features;
  Matrix grad_target_features;
  Matrix grad_prototypes;
};

// L_cls_w + l1 * L_reg_w + l2 * L_adv_D, differentiated with respect to the prototypes.
// An empty source batch drops the supervised terms; lambda_adv = 0 drops the target term.
ObjectiveValue objective_prototypes(const SourceBatch& source, const Matrix& target_features,
                                    const PrototypeSet& protos, TradeOff tradeoff);

// L_cls_w + l1 * L_reg_w + l2 * L_adv_F, differentiated with respect to source and target features.
ObjectiveValue objective_extractor(const SourceBatch& source, const Matrix& target_features,
                                   const PrototypeSet& protos, TradeOff tradeoff);

}  // namespace ntda
