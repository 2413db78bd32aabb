#include "ntda/metrics.hpp"

#include <nlohmann/json.hpp>

#include "ntda/error.hpp"

namespace ntda {

namespace {

void require_paired(std::span<const std::size_t> pred, std::span<const std::size_t> truth, const char* op) {
  if (pred.empty()) throw DataError(std::string(op) + ": empty input");
  if (pred.size() != truth.size()) throw ShapeError(std::string(op) + ": prediction and truth lengths differ");
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  require_paired(pred, truth, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

MacroPrf macro_prf(std::span<const std::size_t> pred, std::span<const std::size_t> truth, std::size_t classes) {
  require_paired(pred, truth, "macro_prf");
  if (classes == 0) throw ConfigError("macro_prf: class count must be positive");
  std::vector<double> tp(classes, 0.0), predicted(classes, 0.0), actual(classes, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= classes || truth[i] >= classes) throw DataError("macro_prf: label out of range");
    predicted[pred[i]] += 1.0;
    actual[truth[i]] += 1.0;
    if (pred[i] == truth[i]) tp[pred[i]] += 1.0;
  }
  MacroPrf out;
  for (std::size_t c = 0; c < classes; ++c) {
    out.precision += ratio(tp[c], predicted[c]);
    out.recall += ratio(tp[c], actual[c]);
  }
  out.precision /= static_cast<double>(classes);
  out.recall /= static_cast<double>(classes);
  out.f1 = ratio(2.0 * out.precision * out.recall, out.precision + out.recall);
  return out;
}

SelectionPr selection_prf(std::span<const double> weights, const std::vector<bool>& clean_flags) {
  if (weights.size() != clean_flags.size()) throw ShapeError("selection_prf: weight and flag counts differ");
  double selected = 0.0, clean = 0.0, selected_clean = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const bool s = weights[i] > 0.0;
    selected += s ? 1.0 : 0.0;
    clean += clean_flags[i] ? 1.0 : 0.0;
    selected_clean += (s && clean_flags[i]) ? 1.0 : 0.0;
  }
  return {ratio(selected_clean, selected), ratio(selected_clean, clean)};
}

SelectionPr selection_prf(std::span<const double> weights, const std::optional<std::vector<bool>>& clean_flags) {
  if (!clean_flags) throw DataError("selection_prf: not applicable, dataset carries no clean flags");
  return selection_prf(weights, *clean_flags);
}

std::vector<double> per_class_accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                                       std::size_t classes) {
  require_paired(pred, truth, "per_class_accuracy");
  std::vector<double> hits(classes, 0.0), total(classes, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] >= classes) throw DataError("per_class_accuracy: label out of range");
    total[truth[i]] += 1.0;
    hits[truth[i]] += pred[i] == truth[i] ? 1.0 : 0.0;
  }
  for (std::size_t c = 0; c < classes; ++c) hits[c] = ratio(hits[c], total[c]);
  return hits;
}

MetricsReport evaluate(const ModelState& model, const DomainDataset& target, const TrainConfig& config,
                       std::span<const double> source_weights,
                       const std::optional<std::vector<bool>>& source_clean_flags) {
  target.validate();
  const Labels pred = classify(extract(model.extractor, target.features), model.prototypes);
  MetricsReport r;
  r.target_accuracy = accuracy(pred, target.labels);
  r.macro = macro_prf(pred, target.labels, target.class_count);
  r.per_class_accuracy = per_class_accuracy(pred, target.labels, target.class_count);
  if (!source_weights.empty() && source_clean_flags) r.selection = selection_prf(source_weights, *source_clean_flags);
  r.config_echo = config;
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"schema", "ntda.report/1"},
                      {"target_accuracy", r.target_accuracy},
                      {"macro_precision", r.macro.precision},
                      {"macro_recall", r.macro.recall},
                      {"macro_f1", r.macro.f1},
                      {"per_class_accuracy", r.per_class_accuracy},
                      {"config", to_json(r.config_echo)}};
  if (r.selection) {
    j["selection_precision"] = r.selection->precision;
    j["selection_recall"] = r.selection->recall;
  } else {
    j["selection_precision"] = nullptr;
    j["selection_recall"] = nullptr;
  }
  return j;
}

}  // namespace ntda
