#include "ntda/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ntda/error.hpp"
#include "ntda/rng.hpp"

namespace ntda {

namespace {

constexpr const char* kDatasetSchema = "ntda.dataset/1";

void require_probability(double p, const char* op) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(op) + ": p_noise must lie in [0, 1]");
}

std::vector<bool> flags_or_all_clean(const DomainDataset& ds) {
  return ds.clean_flags ? *ds.clean_flags : std::vector<bool>(ds.size(), true);
}

// Centers of a regular simplex with pairwise distance class_sep, written in a
// Fourier basis of the sum-zero subspace so that the first harmonic is a
// regular M-gon in coordinates 0 and 1 (the plane a rotation shift acts on).
// Needs M - 1 <= in_dim; otherwise the centers are evenly spaced on a circle
// in the first two coordinates.
Matrix blob_centers(std::size_t classes, std::size_t in_dim, double class_sep) {
  Matrix centers(classes, in_dim);
  const double m = static_cast<double>(classes);
  if (classes - 1 <= in_dim) {
    // e_j - 1/M has pairwise distance sqrt(2); the basis change is orthonormal.
    const double s = class_sep / std::numbers::sqrt2;
    const std::size_t harmonics = (classes - 1) / 2;
    for (std::size_t j = 0; j < classes; ++j) {
      for (std::size_t k = 1; k <= harmonics; ++k) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(j * k) / m;
        centers(j, 2 * (k - 1)) = s * std::sqrt(2.0 / m) * std::cos(angle);
        centers(j, 2 * (k - 1) + 1) = s * std::sqrt(2.0 / m) * std::sin(angle);
      }
      if (classes % 2 == 0) centers(j, classes - 2) = s * (j % 2 == 0 ? 1.0 : -1.0) / std::sqrt(m);
    }
  } else {
    const double radius = class_sep / (2.0 * std::sin(std::numbers::pi / m));
    for (std::size_t j = 0; j < classes; ++j) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / m;
      centers(j, 0) = radius * std::cos(angle);
      centers(j, 1) = radius * std::sin(angle);
    }
  }
  return centers;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string to_string(DomainTag tag) { return tag == DomainTag::kSource ? "source" : "target"; }

DomainTag domain_tag_from_string(const std::string& s) {
  if (s == "source") return DomainTag::kSource;
  if (s == "target") return DomainTag::kTarget;
  throw ConfigError("unknown domain tag '" + s + "'");
}

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kLabel:
      return "label";
    case CorruptionKind::kFeature:
      return "feature";
    case CorruptionKind::kMixed:
      return "mixed";
  }
  return "mixed";
}

CorruptionKind corruption_kind_from_string(const std::string& s) {
  if (s == "label") return CorruptionKind::kLabel;
  if (s == "feature") return CorruptionKind::kFeature;
  if (s == "mixed") return CorruptionKind::kMixed;
  throw ConfigError("unknown corruption kind '" + s + "' (expected label, feature or mixed)");
}

void DomainDataset::validate() const {
  if (features.rows() != labels.size()) {
    throw DataError("dataset: " + std::to_string(labels.size()) + " labels for " + std::to_string(features.rows()) +
                    " feature rows");
  }
  if (class_count < 2) throw DataError("dataset: class_count must be at least 2");
  for (std::size_t y : labels) {
    if (y >= class_count) throw DataError("dataset: label " + std::to_string(y) + " outside [0, " +
                                          std::to_string(class_count) + ")");
  }
  if (clean_flags && clean_flags->size() != labels.size()) throw DataError("dataset: clean flag count mismatch");
}

DomainDataset gen_blobs(std::size_t classes, std::size_t n_per_class, std::size_t in_dim, double class_sep,
                        std::uint64_t seed) {
  if (classes < 2) throw ConfigError("gen_blobs: at least 2 classes are required");
  if (in_dim < 2) throw ConfigError("gen_blobs: in_dim must be at least 2");
  if (!(class_sep >= 0.0) || !std::isfinite(class_sep)) throw ConfigError("gen_blobs: class_sep must be finite, >= 0");

  const Matrix centers = blob_centers(classes, in_dim, class_sep);
  const std::size_t n = classes * n_per_class;
  DomainDataset ds;
  ds.features = Matrix(n, in_dim);
  ds.labels.resize(n);
  ds.class_count = classes;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % classes;
    ds.labels[i] = y;
    auto row = ds.features.row(i);
    for (std::size_t k = 0; k < in_dim; ++k) row[k] = centers(y, k) + unit(rng);
  }
  return ds;
}

DomainDataset apply_shift(const DomainDataset& ds, const ShiftSpec& shift) {
  const std::size_t dim = ds.features.cols();
  if (!(shift.scale > 0.0)) throw ConfigError("apply_shift: scale must be positive");
  if (!shift.translation.empty() && shift.translation.size() != dim) {
    throw ShapeError("apply_shift: translation of length " + std::to_string(shift.translation.size()) +
                     " for " + std::to_string(dim) + "-dim features");
  }
  const double theta = shift.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  DomainDataset out = ds;
  for (std::size_t i = 0; i < out.features.rows(); ++i) {
    auto row = out.features.row(i);
    if (dim >= 2 && shift.rotation_degrees != 0.0) {
      const double x0 = row[0];
      const double x1 = row[1];
      row[0] = c * x0 - s * x1;
      row[1] = s * x0 + c * x1;
    }
    for (std::size_t k = 0; k < dim; ++k) {
      row[k] *= shift.scale;
      if (!shift.translation.empty()) row[k] += shift.translation[k];
    }
  }
  return out;
}

DomainDataset corrupt_labels(const DomainDataset& ds, double p_noise, std::uint64_t seed, LabelNoiseOptions options) {
  require_probability(p_noise, "corrupt_labels");
  ds.validate();
  const std::size_t m = ds.class_count;
  DomainDataset out = ds;
  std::vector<bool> flags = flags_or_all_clean(ds);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_class(0, m - 1);
  std::uniform_int_distribution<std::size_t> other_class(0, m - 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Both draws are taken for every sample so the stream does not depend on p_noise.
    const double u = coin(rng);
    std::size_t redrawn = options.exclude_original ? other_class(rng) : any_class(rng);
    if (options.exclude_original && redrawn >= ds.labels[i]) ++redrawn;
    if (u < p_noise && redrawn != ds.labels[i]) {
      out.labels[i] = redrawn;
      flags[i] = false;
    }
  }
  out.clean_flags = std::move(flags);
  return out;
}

DomainDataset corrupt_features(const DomainDataset& ds, double p_noise, std::uint64_t seed,
                               FeatureNoiseOptions options) {
  require_probability(p_noise, "corrupt_features");
  if (ds.size() == 0) throw DataError("corrupt_features: empty dataset");
  const std::size_t n = ds.features.rows();
  const std::size_t dim = ds.features.cols();

  std::vector<double> mean(dim, 0.0), sd(dim, 0.0), lo(dim), hi(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    lo[k] = hi[k] = ds.features(0, k);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = ds.features(i, k);
      mean[k] += v;
      lo[k] = std::min(lo[k], v);
      hi[k] = std::max(hi[k], v);
    }
  }
  for (double& v : mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = ds.features(i, k) - mean[k];
      sd[k] += d * d;
    }
  }
  for (double& v : sd) v = std::sqrt(v / static_cast<double>(n));

  DomainDataset out = ds;
  std::vector<bool> flags = flags_or_all_clean(ds);
  std::mt19937_64 select_rng(seed);
  std::mt19937_64 noise_rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (coin(select_rng) >= p_noise) continue;
    auto row = out.features.row(i);
    for (std::size_t k = 0; k < dim; ++k) {
      row[k] += options.gaussian_std_factor * sd[k] * unit(noise_rng);
      if (coin(noise_rng) < options.saturation_rate) row[k] = coin(noise_rng) < 0.5 ? lo[k] : hi[k];
    }
    flags[i] = false;
  }
  out.clean_flags = std::move(flags);
  return out;
}

DomainDataset corrupt_mixed_logged(const DomainDataset& ds, double p_noise, std::uint64_t seed, CorruptionLog& log,
                                   LabelNoiseOptions label_options, FeatureNoiseOptions feature_options) {
  require_probability(p_noise, "corrupt_mixed");
  const double half = p_noise / 2.0;
  DomainDataset labelled = corrupt_labels(ds, half, derive_seed(seed, 10), label_options);
  // Feature noise statistics come from the pristine features; labels do not affect them.
  DomainDataset out = corrupt_features(labelled, half, derive_seed(seed, 11), feature_options);
  log.label_hit.assign(ds.size(), false);
  log.feature_hit.assign(ds.size(), false);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    log.label_hit[i] = labelled.labels[i] != ds.labels[i];
    log.feature_hit[i] = !std::equal(out.features.row(i).begin(), out.features.row(i).end(),
                                     ds.features.row(i).begin());
  }
  return out;
}

DomainDataset corrupt_mixed(const DomainDataset& ds, double p_noise, std::uint64_t seed,
                            LabelNoiseOptions label_options, FeatureNoiseOptions feature_options) {
  CorruptionLog unused;
  return corrupt_mixed_logged(ds, p_noise, seed, unused, label_options, feature_options);
}

DomainDataset corrupt(const DomainDataset& ds, const CorruptionSpec& spec) {
  switch (spec.kind) {
    case CorruptionKind::kLabel:
      return corrupt_labels(ds, spec.p_noise, spec.seed);
    case CorruptionKind::kFeature:
      return corrupt_features(ds, spec.p_noise, spec.seed);
    case CorruptionKind::kMixed:
      return corrupt_mixed(ds, spec.p_noise, spec.seed);
  }
  throw ConfigError("corrupt: unknown corruption kind");
}

// ---------------------------------------------------------------------------
// Persistence

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p += ".json";
  return p;
}

void save_dataset(const std::filesystem::path& path, const DomainDataset& ds) {
  save_dataset(path, ds, nlohmann::json::object());
}

void save_dataset(const std::filesystem::path& path, const DomainDataset& ds, const nlohmann::json& provenance) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::size_t dim = ds.features.cols();
  for (std::size_t k = 0; k < dim; ++k) out << 'f' << k << ',';
  out << "label,clean\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto row = ds.features.row(i);
    for (std::size_t k = 0; k < dim; ++k) out << format_double(row[k]) << ',';
    out << ds.labels[i] << ',';
    if (ds.clean_flags) out << ((*ds.clean_flags)[i] ? '1' : '0');
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());

  nlohmann::json side = {{"schema", kDatasetSchema},
                         {"rows", ds.size()},
                         {"in_dim", dim},
                         {"class_count", ds.class_count},
                         {"domain", to_string(ds.domain)},
                         {"has_clean_flags", ds.clean_flags.has_value()},
                         {"provenance", provenance}};
  std::ofstream sout(sidecar_path(path));
  if (!sout) throw std::runtime_error("cannot open " + sidecar_path(path).string() + " for writing");
  sout << side.dump(2) << '\n';
}

DomainDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream side_in(sidecar_path(path));
  if (!side_in) throw ParseError("missing sidecar " + sidecar_path(path).string(), 0);
  nlohmann::json side;
  try {
    side_in >> side;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(sidecar_path(path).string() + ": " + e.what(), 0);
  }
  std::size_t expected_rows = 0, dim = 0, classes = 0;
  bool has_flags = false;
  DomainTag domain = DomainTag::kSource;
  try {
    if (side.at("schema").get<std::string>() != kDatasetSchema) throw ParseError("unsupported dataset schema", 0);
    expected_rows = side.at("rows").get<std::size_t>();
    dim = side.at("in_dim").get<std::size_t>();
    classes = side.at("class_count").get<std::size_t>();
    has_flags = side.at("has_clean_flags").get<bool>();
    domain = domain_tag_from_string(side.at("domain").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(sidecar_path(path).string() + ": " + e.what(), 0);
  }

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty file, header expected", line_no);
  {
    std::string expected;
    for (std::size_t k = 0; k < dim; ++k) expected += "f" + std::to_string(k) + ",";
    expected += "label,clean";
    if (line != expected) throw ParseError("header does not match sidecar in_dim", line_no);
  }

  std::vector<double> values;
  values.reserve(expected_rows * dim);
  Labels labels;
  std::vector<bool> flags;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t field = 0;
    std::size_t start = 0;
    const std::size_t fields = dim + 2;
    while (field < fields) {
      const std::size_t comma = line.find(',', start);
      const bool last = field + 1 == fields;
      if (!last && comma == std::string::npos) throw ParseError("expected " + std::to_string(fields) + " fields", line_no);
      if (last && comma != std::string::npos) throw ParseError("too many fields", line_no);
      const std::string_view tok(line.data() + start, (last ? line.size() : comma) - start);
      const char* b = tok.data();
      const char* e = tok.data() + tok.size();
      if (field < dim) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || p != e || !std::isfinite(v)) {
          throw ParseError("bad feature value '" + std::string(tok) + "'", line_no);
        }
        values.push_back(v);
      } else if (field == dim) {
        std::size_t y = 0;
        auto [p, ec] = std::from_chars(b, e, y);
        if (ec != std::errc() || p != e) throw ParseError("bad label '" + std::string(tok) + "'", line_no);
        if (y >= classes) {
          throw ParseError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")", line_no);
        }
        labels.push_back(y);
      } else if (has_flags) {
        if (tok != "0" && tok != "1") throw ParseError("clean flag must be 0 or 1", line_no);
        flags.push_back(tok == "1");
      } else if (!tok.empty()) {
        throw ParseError("clean flag present but sidecar declares none", line_no);
      }
      start = comma + 1;
      ++field;
    }
  }
  if (labels.size() != expected_rows) {
    throw ParseError("truncated: " + std::to_string(labels.size()) + " rows read, sidecar declares " +
                         std::to_string(expected_rows),
                     line_no);
  }

  DomainDataset ds;
  ds.features = Matrix(expected_rows, dim, std::move(values));
  ds.labels = std::move(labels);
  ds.class_count = classes;
  ds.domain = domain;
  if (has_flags) ds.clean_flags = std::move(flags);
  ds.validate();
  return ds;
}

}  // namespace ntda
