#include "ntda/experiment.hpp"

#include <charconv>
#include <fstream>
#include <future>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ntda/error.hpp"
#include "ntda/rng.hpp"

namespace ntda {

namespace {

constexpr const char* kConfigSchema = "ntda.config/1";
// CSV outputs start with a schema line, then the column header.
constexpr const char* kSweepSchemaLine = "#schema=ntda.sweep/1";
constexpr const char* kEmbeddingsSchemaLine = "#schema=ntda.embeddings/1";
constexpr const char* kSweepHeader =
    "kind,level,repeat,seed,method,target_accuracy,macro_precision,macro_recall,macro_f1,selection_precision,"
    "selection_recall";

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("bad number '" + s + "'", line);
  return v;
}

template <typename Int>
Int parse_int(const std::string& s, std::size_t line) {
  Int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("bad integer '" + s + "'", line);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// DataSpec

ShiftSpec DataSpec::shift() const {
  ShiftSpec s;
  s.rotation_degrees = rotation_degrees;
  s.scale = scale;
  if (translation.size() == 1) {
    s.translation.assign(in_dim, translation.front());
  } else {
    s.translation = translation;
  }
  return s;
}

void DataSpec::validate() const {
  if (classes < 2) throw ConfigError("data.classes must be >= 2");
  if (in_dim < 2) throw ConfigError("data.in_dim must be >= 2");
  if (!(class_sep >= 0.0)) throw ConfigError("data.class_sep must be >= 0");
  if (!(scale > 0.0)) throw ConfigError("data.scale must be > 0");
  if (translation.size() != 1 && translation.size() != in_dim) {
    throw ConfigError("data.translation must hold 1 or in_dim values");
  }
  if (!(p_noise >= 0.0 && p_noise <= 1.0)) throw ConfigError("data.p_noise must lie in [0, 1]");
  if (!(feature_noise.saturation_rate >= 0.0 && feature_noise.saturation_rate <= 1.0)) {
    throw ConfigError("data.saturation_rate must lie in [0, 1]");
  }
  if (!(feature_noise.gaussian_std_factor >= 0.0)) throw ConfigError("data.gaussian_std_factor must be >= 0");
}

nlohmann::json to_json(const DataSpec& s) {
  return {{"classes", s.classes},
          {"n_per_class", s.n_per_class},
          {"in_dim", s.in_dim},
          {"class_sep", s.class_sep},
          {"rotation_degrees", s.rotation_degrees},
          {"translation", s.translation},
          {"scale", s.scale},
          {"corruption", to_string(s.corruption)},
          {"p_noise", s.p_noise},
          {"exclude_original_label", s.label_noise.exclude_original},
          {"gaussian_std_factor", s.feature_noise.gaussian_std_factor},
          {"saturation_rate", s.feature_noise.saturation_rate}};
}

DataSpec data_spec_from_json(const nlohmann::json& doc, DataSpec s) {
  if (!doc.is_object()) throw ConfigError("data config must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "classes") s.classes = v.get<std::size_t>();
      else if (key == "n_per_class") s.n_per_class = v.get<std::size_t>();
      else if (key == "in_dim") s.in_dim = v.get<std::size_t>();
      else if (key == "class_sep") s.class_sep = v.get<double>();
      else if (key == "rotation_degrees") s.rotation_degrees = v.get<double>();
      else if (key == "translation") s.translation = v.is_array() ? v.get<std::vector<double>>()
                                                                  : std::vector<double>{v.get<double>()};
      else if (key == "scale") s.scale = v.get<double>();
      else if (key == "corruption") s.corruption = corruption_kind_from_string(v.get<std::string>());
      else if (key == "p_noise") s.p_noise = v.get<double>();
      else if (key == "exclude_original_label") s.label_noise.exclude_original = v.get<bool>();
      else if (key == "gaussian_std_factor") s.feature_noise.gaussian_std_factor = v.get<double>();
      else if (key == "saturation_rate") s.feature_noise.saturation_rate = v.get<double>();
      else throw ConfigError("unknown data config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("data config: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"schema", kConfigSchema}, {"data", to_json(c.data)}, {"train", to_json(c.train)}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, v] : doc.items()) {
    if (key == "schema") {
      if (v != kConfigSchema) throw ConfigError("unsupported config schema " + v.dump());
    } else if (key == "data") {
      c.data = data_spec_from_json(v);
    } else if (key == "train") {
      c.train = train_config_from_json(v);
    } else {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Runs

DomainPair generate_domains(const DataSpec& spec, std::uint64_t seed) {
  spec.validate();
  DomainPair pair;
  DomainDataset clean_source =
      gen_blobs(spec.classes, spec.n_per_class, spec.in_dim, spec.class_sep, derive_seed(seed, 20));
  const std::uint64_t noise_seed = derive_seed(seed, 22);
  switch (spec.corruption) {
    case CorruptionKind::kLabel:
      pair.source = corrupt_labels(clean_source, spec.p_noise, noise_seed, spec.label_noise);
      break;
    case CorruptionKind::kFeature:
      pair.source = corrupt_features(clean_source, spec.p_noise, noise_seed, spec.feature_noise);
      break;
    case CorruptionKind::kMixed:
      pair.source = corrupt_mixed(clean_source, spec.p_noise, noise_seed, spec.label_noise, spec.feature_noise);
      break;
  }
  pair.source.domain = DomainTag::kSource;
  pair.target = apply_shift(gen_blobs(spec.classes, spec.n_per_class, spec.in_dim, spec.class_sep,
                                      derive_seed(seed, 21)),
                            spec.shift());
  pair.target.domain = DomainTag::kTarget;
  return pair;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kNtda:
      return "ntda";
    case Method::kSourceOnly:
      return "source_only";
    case Method::kNoCaa:
      return "ntda_no_caa";
    case Method::kNoUnr:
      return "ntda_no_unr";
  }
  return "ntda";
}

Method method_from_string(const std::string& s) {
  if (s == "ntda") return Method::kNtda;
  if (s == "source_only") return Method::kSourceOnly;
  if (s == "ntda_no_caa") return Method::kNoCaa;
  if (s == "ntda_no_unr") return Method::kNoUnr;
  throw ConfigError("unknown method '" + s + "'");
}

TrainConfig config_for(Method m, TrainConfig c) {
  switch (m) {
    case Method::kNtda:
      break;
    case Method::kSourceOnly:
      c.train_epochs = 0;
      break;
    case Method::kNoCaa:
      c.lambda2 = 0.0;
      break;
    case Method::kNoUnr:
      c.noise_removal = false;
      break;
  }
  return c;
}

RunResult run_method(Method m, const TrainConfig& base, const DomainPair& data) {
  const TrainConfig config = config_for(m, base);
  RunResult r;
  r.training = train(config, data.source, data.target.features);
  r.report = evaluate(r.training.model, data.target, config, r.training.final_weights, data.source.clean_flags);
  return r;
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, const SweepOptions& options,
                            const std::function<void(const SweepRow&)>& on_row) {
  if (options.repeats < 1) throw ConfigError("sweep: repeats must be >= 1");
  if (options.levels.empty() || options.kinds.empty() || options.methods.empty()) {
    throw ConfigError("sweep: levels, kinds and methods must be non-empty");
  }
  struct Cell {
    CorruptionKind kind;
    double level;
    std::size_t repeat;
    Method method;
  };
  std::vector<Cell> cells;
  for (auto kind : options.kinds) {
    for (double level : options.levels) {
      for (std::size_t r = 0; r < options.repeats; ++r) {
        for (auto m : options.methods) cells.push_back({kind, level, r, m});
      }
    }
  }

  auto run_cell = [&](const Cell& cell) {
    DataSpec spec = base.data;
    spec.corruption = cell.kind;
    spec.p_noise = cell.level;
    TrainConfig train_cfg = base.train;
    train_cfg.seed = base.train.seed + cell.repeat;
    const DomainPair data = generate_domains(spec, train_cfg.seed);
    const RunResult res = run_method(cell.method, train_cfg, data);
    SweepRow row;
    row.kind = to_string(cell.kind);
    row.level = cell.level;
    row.repeat = cell.repeat;
    row.seed = train_cfg.seed;
    row.method = to_string(cell.method);
    row.target_accuracy = res.report.target_accuracy;
    row.macro_precision = res.report.macro.precision;
    row.macro_recall = res.report.macro.recall;
    row.macro_f1 = res.report.macro.f1;
    if (res.report.selection) {
      row.selection_precision = res.report.selection->precision;
      row.selection_recall = res.report.selection->recall;
    }
    return row;
  };

  std::vector<SweepRow> rows(cells.size());
  const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
  for (std::size_t start = 0; start < cells.size(); start += jobs) {
    const std::size_t end = std::min(cells.size(), start + jobs);
    std::vector<std::future<SweepRow>> pending;
    for (std::size_t i = start; i < end; ++i) {
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_cell, cells[i]));
    }
    for (std::size_t i = start; i < end; ++i) {
      rows[i] = pending[i - start].get();
      if (on_row) on_row(rows[i]);
    }
  }
  return rows;
}

void write_sweep_header(std::ostream& out) { out << kSweepSchemaLine << '\n' << kSweepHeader << '\n'; }

void write_sweep_row(std::ostream& out, const SweepRow& r) {
  out << r.kind << ',' << fmt(r.level) << ',' << r.repeat << ',' << r.seed << ',' << r.method << ','
      << fmt(r.target_accuracy) << ',' << fmt(r.macro_precision) << ',' << fmt(r.macro_recall) << ','
      << fmt(r.macro_f1) << ',' << (r.selection_precision ? fmt(*r.selection_precision) : "") << ','
      << (r.selection_recall ? fmt(*r.selection_recall) : "") << '\n';
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  write_sweep_header(out);
  for (const auto& r : rows) write_sweep_row(out, r);
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kSweepSchemaLine) throw ParseError("missing or unsupported sweep schema line", line_no);
  ++line_no;
  if (!std::getline(in, line) || line != kSweepHeader) throw ParseError("sweep CSV header mismatch", line_no);
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw ParseError("expected 11 fields, got " + std::to_string(f.size()), line_no);
    SweepRow r;
    r.kind = f[0];
    r.level = parse_double(f[1], line_no);
    r.repeat = parse_int<std::size_t>(f[2], line_no);
    r.seed = parse_int<std::uint64_t>(f[3], line_no);
    r.method = f[4];
    r.target_accuracy = parse_double(f[5], line_no);
    r.macro_precision = parse_double(f[6], line_no);
    r.macro_recall = parse_double(f[7], line_no);
    r.macro_f1 = parse_double(f[8], line_no);
    if (!f[9].empty()) r.selection_precision = parse_double(f[9], line_no);
    if (!f[10].empty()) r.selection_recall = parse_double(f[10], line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

void export_embeddings(const ModelState& model, const DomainDataset& source, std::span<const double> source_weights,
                       const DomainDataset& target, const std::filesystem::path& path) {
  if (!source_weights.empty() && source_weights.size() != source.size()) {
    throw ShapeError("export_embeddings: weight count does not match source size");
  }
  const std::size_t d = model.prototypes.dim();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kEmbeddingsSchemaLine << '\n' << "domain,true_label,predicted_label,weight";
  for (std::size_t k = 0; k < d; ++k) out << ",e" << k;
  out << '\n';

  auto dump = [&](const DomainDataset& ds, std::span<const double> weights) {
    const Matrix emb = extract(model.extractor, ds.features);
    const Labels pred = classify(emb, model.prototypes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      out << to_string(ds.domain) << ',' << ds.labels[i] << ',' << pred[i] << ',';
      if (!weights.empty()) out << fmt(weights[i]);
      for (double v : emb.row(i)) out << ',' << fmt(v);
      out << '\n';
    }
  };
  dump(source, source_weights);
  dump(target, {});
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace ntda
