// ntda: command-line front end for data generation, training, evaluation,
// noise-level sweeps, embedding export and the gradient audit.
//
// Errors are reported as a single JSON line on stderr and a nonzero exit code:
//   2 usage / configuration, 3 data / parse / I-O, 4 numeric, 1 gradient check failed or internal.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ntda/error.hpp"
#include "ntda/experiment.hpp"
#include "ntda/gradient_suite.hpp"
#include "ntda/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ntda;

namespace {

constexpr const char* kWeightsSchema = "ntda.weights/1";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GradcheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration: --config file, then --set section.key=value overrides, then --seed.

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Experiment config JSON (keys: schema, data, train)");
  cmd->add_option("--set", o.overrides, "Override one config value, e.g. train.learning_rate=0.01 (repeatable)");
  cmd->add_option("--seed", o.seed, "Seed for data generation and training");
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;  // bare strings such as mixed or alternating
  }
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  json doc = o.config_path.empty() ? to_json(ExperimentConfig{}) : to_json(load_experiment_config(o.config_path));
  for (const std::string& item : o.overrides) {
    const auto eq = item.find('=');
    const auto dot = item.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("--set expects section.key=value, got '" + item + "'");
    }
    const std::string section = item.substr(0, dot);
    if (section != "data" && section != "train") throw ConfigError("--set: unknown section '" + section + "'");
    doc[section][item.substr(dot + 1, eq - dot - 1)] = parse_override_value(item.substr(eq + 1));
  }
  if (o.seed) doc["train"]["seed"] = *o.seed;
  return experiment_config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Output staging: files are written under a hidden sibling directory and only
// moved into place once the command has succeeded.

class Staging {
 public:
  explicit Staging(fs::path final_dir) : final_(std::move(final_dir)) {
    const fs::path parent = final_.has_parent_path() ? final_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    staging_ = parent / ("." + final_.filename().string() + ".staging");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;
  ~Staging() {
    std::error_code ec;
    if (!committed_) fs::remove_all(staging_, ec);
  }

  fs::path path(const std::string& name) const { return staging_ / name; }

  void commit() {
    fs::create_directories(final_);
    for (const auto& entry : fs::recursive_directory_iterator(staging_)) {
      const fs::path rel = fs::relative(entry.path(), staging_);
      if (entry.is_directory()) {
        fs::create_directories(final_ / rel);
      } else {
        fs::rename(entry.path(), final_ / rel);
      }
    }
    fs::remove_all(staging_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path staging_;
  bool committed_ = false;
};

// Single-file variant of Staging: write to <path>.tmp, rename on commit.
class StagedFile {
 public:
  explicit StagedFile(fs::path final_path) : final_(std::move(final_path)), tmp_(final_.string() + ".tmp") {
    if (final_.has_parent_path()) fs::create_directories(final_.parent_path());
  }
  StagedFile(const StagedFile&) = delete;
  StagedFile& operator=(const StagedFile&) = delete;
  ~StagedFile() {
    std::error_code ec;
    if (!committed_) fs::remove(tmp_, ec);
  }
  const fs::path& path() const { return tmp_; }
  void commit() {
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path tmp_;
  bool committed_ = false;
};

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing required path: ") + what);
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

std::vector<double> load_weights(const std::string& path) {
  require_file(path, "--weights");
  const json doc = read_json(path);
  try {
    if (doc.at("schema").get<std::string>() != kWeightsSchema) throw ParseError("unsupported weights schema", 0);
    return doc.at("weights").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

void print_report(const MetricsReport& report, const std::string& out_path) {
  const json doc = to_json(report);
  if (out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  StagedFile f(out_path);
  write_json(f.path(), doc);
  f.commit();
}

// ---------------------------------------------------------------------------
// Commands

struct GenerateArgs {
  CommonOptions common;
  std::string out_dir;
};

void cmd_generate(const GenerateArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.common);
  const std::uint64_t seed = cfg.train.seed;
  const DomainPair data = generate_domains(cfg.data, seed);
  const json provenance = {{"seed", seed}, {"data", to_json(cfg.data)}};
  Staging stage(a.out_dir);
  save_dataset(stage.path("source.csv"), data.source, provenance);
  save_dataset(stage.path("target.csv"), data.target, provenance);
  stage.commit();
  std::cout << json{{"source", (fs::path(a.out_dir) / "source.csv").string()},
                    {"target", (fs::path(a.out_dir) / "target.csv").string()},
                    {"source_rows", data.source.size()},
                    {"target_rows", data.target.size()}}
                   .dump()
            << '\n';
}

struct TrainArgs {
  CommonOptions common;
  std::string source_path, target_path, out_dir;
  std::size_t checkpoint_every = 0;
};

void cmd_train(const TrainArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.common);
  if (a.source_path.empty() != a.target_path.empty()) {
    throw ConfigError("--source and --target must be given together");
  }
  DomainPair data;
  if (a.source_path.empty()) {
    data = generate_domains(cfg.data, cfg.train.seed);
  } else {
    require_file(a.source_path, "--source");
    require_file(a.target_path, "--target");
    data.source = load_dataset(a.source_path);
    data.target = load_dataset(a.target_path);
  }

  Staging stage(a.out_dir);
  write_json(stage.path("config.json"), to_json(cfg));
  std::ofstream records(stage.path("records.jsonl"));
  if (a.checkpoint_every > 0) fs::create_directories(stage.path("checkpoints"));
  auto observer = [&](const TrainingState& state, EpochRecord& rec) {
    records << to_json(rec).dump() << '\n';
    records.flush();
    if (a.checkpoint_every > 0 && state.epochs_completed % a.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.json", state.epochs_completed);
      save_model(stage.path("checkpoints") / name, state.model);
    }
  };
  // Target labels stay out of training; only the features are passed.
  const TrainResult result = train(cfg.train, data.source, data.target.features, observer);
  records.close();
  if (!records) throw IoError("write failed for records.jsonl");

  const MetricsReport report =
      evaluate(result.model, data.target, cfg.train, result.final_weights, data.source.clean_flags);
  save_model(stage.path("model.json"), result.model);
  write_json(stage.path("weights.json"), {{"schema", kWeightsSchema}, {"weights", result.final_weights}});
  write_json(stage.path("report.json"), to_json(report));
  stage.commit();
  std::cout << to_json(report).dump() << '\n';
}

struct EvalArgs {
  CommonOptions common;
  std::string model_path, target_path, source_path, weights_path, out_path;
};

void cmd_eval(const EvalArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.common);
  require_file(a.model_path, "--model");
  require_file(a.target_path, "--target");
  const ModelState model = load_model(a.model_path);
  const DomainDataset target = load_dataset(a.target_path);
  std::vector<double> weights;
  std::optional<std::vector<bool>> flags;
  if (!a.weights_path.empty()) {
    weights = load_weights(a.weights_path);
    if (a.source_path.empty()) throw ConfigError("--weights needs --source for the clean flags");
  }
  if (!a.source_path.empty()) {
    require_file(a.source_path, "--source");
    flags = load_dataset(a.source_path).clean_flags;
  }
  print_report(evaluate(model, target, cfg.train, weights, weights.empty() ? std::nullopt : flags), a.out_path);
}

struct SweepArgs {
  CommonOptions common;
  std::vector<double> levels{0.0, 0.2, 0.4};
  std::vector<std::string> kinds{"mixed"};
  std::vector<std::string> methods{"ntda", "source_only"};
  std::size_t repeats = 3;
  std::size_t jobs = 1;
  std::string out_path;
};

void cmd_sweep(const SweepArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.common);
  SweepOptions o;
  o.levels = a.levels;
  o.repeats = a.repeats;
  o.jobs = a.jobs;
  o.kinds.clear();
  for (const auto& k : a.kinds) o.kinds.push_back(corruption_kind_from_string(k));
  o.methods.clear();
  for (const auto& m : a.methods) o.methods.push_back(method_from_string(m));

  // Rows are streamed as cells finish so a failure keeps the completed ones.
  std::ofstream file;
  if (!a.out_path.empty()) {
    if (fs::path(a.out_path).has_parent_path()) fs::create_directories(fs::path(a.out_path).parent_path());
    file.open(a.out_path);
    if (!file) throw IoError("cannot open " + a.out_path + " for writing");
  }
  std::ostream& out = a.out_path.empty() ? std::cout : file;
  write_sweep_header(out);
  sweep(cfg, o, [&](const SweepRow& row) {
    write_sweep_row(out, row);
    out.flush();
  });
  if (!out) throw IoError("write failed for sweep output");
}

struct ExportArgs {
  CommonOptions common;
  std::string model_path, source_path, target_path, weights_path, out_path;
};

void cmd_export(const ExportArgs& a) {
  resolve_config(a.common);  // validates --config / --set even though only the model is used
  require_file(a.model_path, "--model");
  require_file(a.source_path, "--source");
  require_file(a.target_path, "--target");
  if (a.out_path.empty()) throw ConfigError("missing required path: --out");
  const ModelState model = load_model(a.model_path);
  const DomainDataset source = load_dataset(a.source_path);
  const DomainDataset target = load_dataset(a.target_path);
  const std::vector<double> weights = a.weights_path.empty() ? std::vector<double>{} : load_weights(a.weights_path);
  StagedFile f(a.out_path);
  export_embeddings(model, source, weights, target, f.path());
  f.commit();
}

struct GradcheckArgs {
  CommonOptions common;
  std::size_t states = 100;
  double h = 1e-4;
  double tol = 1e-4;
};

void cmd_gradcheck(const GradcheckArgs& a) {
  resolve_config(a.common);
  const auto results = run_gradient_suite({a.states, a.common.seed.value_or(0), a.h, a.tol});
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::cout << json{{"case", r.name}, {"states", r.states}, {"max_relative_error", r.max_relative_error},
                      {"passed", r.passed}}
                     .dump()
              << '\n';
    failed += !r.passed;
  }
  if (failed > 0) throw GradcheckFailed(std::to_string(failed) + " gradient case(s) exceed tolerance");
}

// ---------------------------------------------------------------------------

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-tolerant domain adaptation on synthetic data"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate source and target datasets from the data config");
  add_common(g, gen.common);
  g->add_option("--out-dir", gen.out_dir, "Directory for source.csv and target.csv")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model; writes model, records, report and checkpoints");
  add_common(t, tr.common);
  t->add_option("--source", tr.source_path, "Source dataset CSV (default: generate from config)");
  t->add_option("--target", tr.target_path, "Target dataset CSV (default: generate from config)");
  t->add_option("--out-dir", tr.out_dir, "Output directory")->required();
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Save the model every N epochs (0 = never)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a saved model on a target dataset");
  add_common(e, ev.common);
  e->add_option("--model", ev.model_path, "Model JSON")->required();
  e->add_option("--target", ev.target_path, "Target dataset CSV")->required();
  e->add_option("--source", ev.source_path, "Source dataset CSV, for selection metrics");
  e->add_option("--weights", ev.weights_path, "Source weights JSON written by train");
  e->add_option("--out", ev.out_path, "Report path (default: stdout)");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Noise-level sweep; CSV rows per kind, level, repeat and method");
  add_common(s, sw.common);
  s->add_option("--levels", sw.levels, "Noise levels")->delimiter(',');
  s->add_option("--kinds", sw.kinds, "Corruption kinds: label, feature, mixed")->delimiter(',');
  s->add_option("--methods", sw.methods, "Methods: ntda, source_only, ntda_no_caa, ntda_no_unr")->delimiter(',');
  s->add_option("--repeats", sw.repeats, "Repeats per cell");
  s->add_option("--jobs", sw.jobs, "Worker threads");
  s->add_option("--out", sw.out_path, "CSV path (default: stdout)");

  ExportArgs ex;
  auto* x = app.add_subcommand("export-embeddings", "Write per-sample embeddings and predictions as CSV");
  add_common(x, ex.common);
  x->add_option("--model", ex.model_path, "Model JSON")->required();
  x->add_option("--source", ex.source_path, "Source dataset CSV")->required();
  x->add_option("--target", ex.target_path, "Target dataset CSV")->required();
  x->add_option("--weights", ex.weights_path, "Source weights JSON");
  x->add_option("--out", ex.out_path, "CSV path")->required();

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference audit of every loss and objective");
  add_common(c, gc.common);
  c->add_option("--states", gc.states, "Random states per case");
  c->add_option("--step", gc.h, "Central-difference step");
  c->add_option("--tol", gc.tol, "Relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    return fail("usage", err.what(), 2);
  }

  try {
    if (*g) cmd_generate(gen);
    if (*t) cmd_train(tr);
    if (*e) cmd_eval(ev);
    if (*s) cmd_sweep(sw);
    if (*x) cmd_export(ex);
    if (*c) cmd_gradcheck(gc);
  } catch (const ConfigError& err) {
    return fail("config", err.what(), 2);
  } catch (const ShapeError& err) {
    return fail("shape", err.what(), 3);
  } catch (const ParseError& err) {
    return fail("parse", err.what(), 3);
  } catch (const DataError& err) {
    return fail("data", err.what(), 3);
  } catch (const IoError& err) {
    return fail("io", err.what(), 3);
  } catch (const fs::filesystem_error& err) {
    return fail("io", err.what(), 3);
  } catch (const NumericError& err) {
    return fail("numeric", err.what(), 4);
  } catch (const GradcheckFailed& err) {
    return fail("gradcheck", err.what(), 1);
  } catch (const std::exception& err) {
    return fail("internal", err.what(), 1);
  }
  return 0;
}
