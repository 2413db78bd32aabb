#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ntda/dataset.hpp"
#include "ntda/model.hpp"
#include "ntda/trainer.hpp"

namespace ntda {

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth);

struct MacroPrf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-class precision and recall (0/0 counts as 0), unweighted mean over
// classes, F1 = harmonic mean of the two macro averages.
MacroPrf macro_prf(std::span<const std::size_t> pred, std::span<const std::size_t> truth, std::size_t classes);

struct SelectionPr {
  double precision = 0.0;
  double recall = 0.0;
};

// A sample is selected when its weight is > 0. Empty selection gives precision 0.
SelectionPr selection_prf(std::span<const double> weights, const std::vector<bool>& clean_flags);
// Throws DataError when flags are absent.
SelectionPr selection_prf(std::span<const double> weights, const std::optional<std::vector<bool>>& clean_flags);

std::vector<double> per_class_accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                                       std::size_t classes);

struct MetricsReport {
  double target_accuracy = 0.0;
  MacroPrf macro;
  std::optional<SelectionPr> selection;
  std::vector<double> per_class_accuracy;
  TrainConfig config_echo;
};

MetricsReport evaluate(const ModelState& model, const DomainDataset& target, const TrainConfig& config,
                       std::span<const double> source_weights = {},
                       const std::optional<std::vector<bool>>& source_clean_flags = std::nullopt);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace ntda
