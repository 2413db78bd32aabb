#pragma once

// Synthetic cross-domain data: Gaussian class blobs, a rigid-plus-scale domain
// shift, and the label / feature / mixed corruption protocols with ground-truth
// clean flags. Every function is a pure function of its inputs and seed.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ntda/matrix.hpp"
#include "ntda/model.hpp"

namespace ntda {

enum class DomainTag { kSource, kTarget };

std::string to_string(DomainTag tag);
DomainTag domain_tag_from_string(const std::string& s);

struct DomainDataset {
  Matrix features;  // N x in
  Labels labels;
  std::size_t class_count = 0;
  // Present iff a corruption pass was applied; true = pristine (features, label).
  std::optional<std::vector<bool>> clean_flags;
  DomainTag domain = DomainTag::kSource;

  std::size_t size() const noexcept { return labels.size(); }
  // Throws DataError if labels are out of range or sizes disagree.
  void validate() const;
};

enum class CorruptionKind { kLabel, kFeature, kMixed };

std::string to_string(CorruptionKind kind);
CorruptionKind corruption_kind_from_string(const std::string& s);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kMixed;
  double p_noise = 0.0;
  std::uint64_t seed = 0;
};

// Knobs of the vector-space analogs of blur and salt-and-pepper noise.
struct FeatureNoiseOptions {
  double gaussian_std_factor = 3.0;   // sigma = factor * per-coordinate data std
  double saturation_rate = 0.1;       // per-coordinate chance of snapping to min/max
};

struct LabelNoiseOptions {
  // When false the redrawn label is uniform over all M classes, the original included.
  bool exclude_original = false;
};

struct ShiftSpec {
  double rotation_degrees = 0.0;
  std::vector<double> translation;  // empty = no translation
  double scale = 1.0;
};

DomainDataset gen_blobs(std::size_t classes, std::size_t n_per_class, std::size_t in_dim, double class_sep,
                        std::uint64_t seed);

DomainDataset apply_shift(const DomainDataset& ds, const ShiftSpec& shift);

DomainDataset corrupt_labels(const DomainDataset& ds, double p_noise, std::uint64_t seed,
                             LabelNoiseOptions options = {});
DomainDataset corrupt_features(const DomainDataset& ds, double p_noise, std::uint64_t seed,
                               FeatureNoiseOptions options = {});
DomainDataset corrupt_mixed(const DomainDataset& ds, double p_noise, std::uint64_t seed,
                            LabelNoiseOptions label_options = {}, FeatureNoiseOptions feature_options = {});
DomainDataset corrupt(const DomainDataset& ds, const CorruptionSpec& spec);

// Which mechanisms fired on each sample; used by rate checks and reports.
struct CorruptionLog {
  std::vector<bool> label_hit;
  std::vector<bool> feature_hit;
};

DomainDataset corrupt_mixed_logged(const DomainDataset& ds, double p_noise, std::uint64_t seed, CorruptionLog& log,
                                   LabelNoiseOptions label_options = {}, FeatureNoiseOptions feature_options = {});

// CSV with header f0..f{k-1},label,clean plus a JSON sidecar at <path>.json.
// The sidecar carries class_count, domain and any provenance passed in.
void save_dataset(const std::filesystem::path& path, const DomainDataset& ds, const nlohmann::json& provenance);
void save_dataset(const std::filesystem::path& path, const DomainDataset& ds);
DomainDataset load_dataset(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace ntda
