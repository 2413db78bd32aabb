#pragma once

// Experiment orchestration: synthetic source/target generation from a data
// spec, single runs of NTDA and its ablations, noise-level sweeps, and the
// CSV/JSON formats they are exchanged in.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ntda/dataset.hpp"
#include "ntda/metrics.hpp"
#include "ntda/trainer.hpp"

namespace ntda {

struct DataSpec {
  std::size_t classes = 4;
  std::size_t n_per_class = 500;
  std::size_t in_dim = 10;
  double class_sep = 10.0;
  double rotation_degrees = 30.0;
  // One value per input coordinate; a single value is broadcast.
  std::vector<double> translation{1.0};
  double scale = 1.0;
  CorruptionKind corruption = CorruptionKind::kMixed;
  double p_noise = 0.4;
  LabelNoiseOptions label_noise;
  FeatureNoiseOptions feature_noise;

  ShiftSpec shift() const;
  void validate() const;
};

nlohmann::json to_json(const DataSpec& spec);
DataSpec data_spec_from_json(const nlohmann::json& doc, DataSpec base = {});

struct ExperimentConfig {
  DataSpec data;
  TrainConfig train;
};

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct DomainPair {
  DomainDataset source;  // corrupted, with clean flags
  DomainDataset target;  // clean, shifted; labels held out for evaluation
};

// Source and target draws and the corruption use independent streams derived from seed.
DomainPair generate_domains(const DataSpec& spec, std::uint64_t seed);

enum class Method {
  kNtda,        // noise removal + adversarial adaptation
  kSourceOnly,  // warm-up only (train_epochs = 0)
  kNoCaa,       // noise removal, lambda2 = 0
  kNoUnr,       // adversarial adaptation, all source weights 1
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);
TrainConfig config_for(Method m, TrainConfig base);

struct RunResult {
  TrainResult training;
  MetricsReport report;
};

RunResult run_method(Method m, const TrainConfig& base, const DomainPair& data);

struct SweepRow {
  std::string kind;
  double level = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::string method;
  double target_accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> selection_precision;
  std::optional<double> selection_recall;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepOptions {
  std::vector<double> levels{0.0, 0.2, 0.4};
  std::vector<CorruptionKind> kinds{CorruptionKind::kMixed};
  std::size_t repeats = 3;
  std::vector<Method> methods{Method::kNtda, Method::kSourceOnly};
  std::size_t jobs = 1;
};

// Repeat r uses seed base.train.seed + r for both data generation and training.
// Rows are ordered kind, level, repeat, method regardless of jobs.
// on_row, when set, is called once per finished cell in that order.
std::vector<SweepRow> sweep(const ExperimentConfig& base, const SweepOptions& options,
                            const std::function<void(const SweepRow&)>& on_row = {});

void write_sweep_header(std::ostream& out);
void write_sweep_row(std::ostream& out, const SweepRow& row);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(std::istream& in);

// CSV: domain,true_label,predicted_label,weight,e0..e{d-1}; weight is empty for target rows.
void export_embeddings(const ModelState& model, const DomainDataset& source, std::span<const double> source_weights,
                       const DomainDataset& target, const std::filesystem::path& path);

}  // namespace ntda
