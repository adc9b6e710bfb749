#include "sdadda/cli.hpp"

#include "sdadda/config.hpp"
#include "sdadda/data_io.hpp"
#include "sdadda/error.hpp"
#include "sdadda/evaluation.hpp"
#include "sdadda/net.hpp"
#include "sdadda/signal_features.hpp"
#include "sdadda/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace sdadda::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<long long> seed;
  std::string out = ".";
  std::string variant;
  std::string protocol;
  std::optional<int> jobs;
  std::optional<int> batch_size;
  std::optional<int> epochs;
  std::optional<double> tau_h, tau_l, rho0, rho1, conf1, conf2;

  // command specific
  std::string data = "synth";
  std::string model;
  std::string input;
  std::string holdout;
  std::string source, target;
  double window_seconds = 1.0;
  std::optional<int> label;
  int classes = 0;
  std::string output_name;
  bool binary = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "Run config file (key = value)");
  cmd->add_option("--seed", o.seed, "Random seed (default 3)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--tau-h", o.tau_h, "Initial MMD weight");
  cmd->add_option("--tau-l", o.tau_l, "Final MMD weight");
  cmd->add_option("--rho0", o.rho0, "Lower CMMD-weight breakpoint");
  cmd->add_option("--rho1", o.rho1, "Upper CMMD-weight breakpoint");
  cmd->add_option("--conf1", o.conf1, "Confidence threshold, middle stage");
  cmd->add_option("--conf2", o.conf2, "Confidence threshold, late stage");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

config::RunConfig resolve(const Options& o) {
  config::RunConfig cfg = o.config_path.empty() ? config::parse_config_text("") : config::parse_config(o.config_path);
  auto set = [&](const char* key, const std::string& v) { config::set_value(cfg, key, v); };
  if (o.seed) set("seed", std::to_string(*o.seed));
  if (!o.variant.empty() && o.variant != "all") set("variant", o.variant);
  if (!o.protocol.empty()) set("protocol", o.protocol);
  if (o.jobs) set("jobs", std::to_string(*o.jobs));
  if (o.batch_size) set("batch_size", std::to_string(*o.batch_size));
  if (o.epochs) set("epochs", std::to_string(*o.epochs));
  if (o.tau_h) set("tau_h", num(*o.tau_h));
  if (o.tau_l) set("tau_l", num(*o.tau_l));
  if (o.rho0) set("rho0", num(*o.rho0));
  if (o.rho1) set("rho1", num(*o.rho1));
  if (o.conf1) set("conf1", num(*o.conf1));
  if (o.conf2) set("conf2", num(*o.conf2));
  config::validate(cfg);
  return cfg;
}

fs::path prepare_out(const Options& o, const config::RunConfig& cfg) {
  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::ofstream os(dir / "config.resolved");
  if (!os) throw IoError("cannot write " + (dir / "config.resolved").string());
  os << config::to_text(cfg);
  return dir;
}

std::string file_hash(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (is.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SubjectDataset load_subjects(const Options& o, const config::RunConfig& cfg) {
  if (o.data == "synth") return io::generate_synth_subjects(cfg.synth, cfg.synth_subjects, cfg.synth_sessions);
  return io::load_dataset(o.data);
}

std::size_t subject_index(const SubjectDataset& data, const std::string& id) {
  if (id.empty()) return data.subjects.size() - 1;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    if (data.subjects[i].id == id) return i;
  }
  throw ValidationError("unknown subject '" + id + "'");
}

void print_metrics(std::ostream& out, const eval::Metrics& m) {
  out << "accuracy=" << num(m.accuracy) << " n=" << m.count << "\nconfusion (rows true, cols predicted):\n";
  for (Eigen::Index i = 0; i < m.confusion.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.confusion.cols(); ++j) out << (j ? " " : "  ") << m.confusion(i, j);
    out << '\n';
  }
}

int cmd_extract(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const fs::path dir = prepare_out(o, cfg);
  if (o.input.empty()) throw ValidationError("--input is required");
  const auto rec = io::read_recording(o.input);
  const auto bands = features::default_bands();
  io::FeatureFile f;
  f.features = features::extract_windows(rec, bands, o.window_seconds);
  if (o.label) {
    if (o.classes < 1 || *o.label < 0 || *o.label >= o.classes) {
      throw ValidationError("--label must be in [0, --classes)");
    }
    f.labels = std::vector<int>(static_cast<std::size_t>(f.features.rows()), *o.label);
  }
  f.classes = o.classes;
  const fs::path path = dir / (o.output_name.empty() ? (o.binary ? "features.bin" : "features.csv") : o.output_name);
  io::write_features(f, path);
  out << "wrote " << f.features.rows() << " x " << f.features.cols() << " features to " << path.string() << '\n';
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const fs::path dir = prepare_out(o, cfg);
  const auto data = io::generate_synth_subjects(cfg.synth, cfg.synth_subjects, cfg.synth_sessions);
  io::save_dataset(data, dir / "manifest.csv", o.binary ? io::Encoding::binary : io::Encoding::text);
  out << "wrote " << data.subjects.size() << " subjects to " << (dir / "manifest.csv").string() << '\n';
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const fs::path dir = prepare_out(o, cfg);
  out << "seed=" << cfg.train.seed << " variant=" << eval::to_string(cfg.variant) << '\n';

  LabeledSet source;
  eval::HeldOut target;
  int classes = 0;
  if (o.data == "synth") {
    auto pair = io::generate_synth_shift(cfg.synth);
    source = std::move(pair.source);
    target = {std::move(pair.target), std::move(pair.target_labels)};
    classes = cfg.synth.classes;
  } else {
    const auto data = io::load_dataset(o.data);
    auto split = eval::loso_split(data, subject_index(data, o.holdout), cfg.protocol,
                                  static_cast<std::size_t>(cfg.session - 1));
    source = std::move(split.source);
    target = std::move(split.target);
    classes = data.classes;
  }
  auto result = trainer::train(source, target.features, classes, cfg.train);
  const fs::path ckpt = dir / "model.ckpt";
  net::save_checkpoint(result.params, ckpt);
  trainer::write_history_csv(result.history, dir / "history.csv");
  const auto m = eval::evaluate(result.params, target.features.features, target.labels);
  out << "checkpoint=" << ckpt.string() << " hash=" << file_hash(ckpt) << '\n';
  out << "target ";
  print_metrics(out, m);
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const fs::path dir = prepare_out(o, cfg);
  if (o.model.empty()) throw ValidationError("--model is required");
  if (o.data.empty() || o.data == "synth") throw ValidationError("--data must name a labeled feature file");
  const auto params = net::load_checkpoint(o.model);
  const auto f = io::read_features(o.data);
  if (!f.labels) throw ValidationError(o.data + ": evaluation needs labels");
  if (f.features.cols() != params.input_dim()) {
    throw ValidationError("dimension mismatch: data has " + std::to_string(f.features.cols()) +
                          " features, model expects " + std::to_string(params.input_dim()));
  }
  const auto m = eval::evaluate(params, f.features, *f.labels);
  print_metrics(out, m);
  nlohmann::json j{{"accuracy", m.accuracy}, {"count", m.count}};
  for (Eigen::Index i = 0; i < m.confusion.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) r.push_back(m.confusion(i, c));
    j["confusion"].push_back(r);
  }
  std::ofstream(dir / "metrics.json") << j.dump(2) << '\n';
  return 0;
}

int run_variants(const Options& o, std::ostream& out, const std::vector<eval::Variant>& variants) {
  const auto cfg = resolve(o);
  const fs::path dir = prepare_out(o, cfg);
  out << "seed=" << cfg.train.seed << " protocol=" << eval::to_string(cfg.protocol) << '\n';
  const auto data = load_subjects(o, cfg);
  for (const auto v : variants) {
    const fs::path vdir = variants.size() == 1 ? dir : dir / eval::to_string(v);
    fs::create_directories(vdir);
    eval::ProtocolOptions opts;
    opts.protocol = cfg.protocol;
    opts.session = static_cast<std::size_t>(cfg.session - 1);
    opts.jobs = cfg.jobs;
    opts.out_dir = vdir;
    const auto summary = eval::run_protocol(data, cfg.train, v, opts);
    eval::write_summary_json(summary, config::hash(cfg), vdir / "summary.json");
    eval::write_summary_csv(summary, vdir / "summary.csv");
    out << summary.variant << ' ' << summary.protocol << ' ' << eval::format_mean_std(summary.mean, summary.stddev)
        << '\n';
  }
  return 0;
}

int cmd_protocol(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  return run_variants(o, out, {cfg.variant});
}

int cmd_ablate(const Options& o, std::ostream& out) {
  if (o.variant.empty() || o.variant == "all") {
    return run_variants(o, out, {eval::Variant::exp1, eval::Variant::exp2, eval::Variant::exp3, eval::Variant::exp4,
                                 eval::Variant::exp5, eval::Variant::exp6});
  }
  return run_variants(o, out, {eval::parse_variant(o.variant)});
}

int cmd_dump(const Options& o, std::ostream& out) {
  const auto cfg = resolve(o);
  const fs::path dir = prepare_out(o, cfg);
  if (o.model.empty()) throw ValidationError("--model is required");
  const auto params = net::load_checkpoint(o.model);
  std::vector<eval::EmbeddingInput> inputs;
  auto add = [&](const std::string& path, int domain) {
    if (path.empty()) return;
    auto f = io::read_features(path);
    if (f.features.cols() != params.input_dim()) {
      throw ValidationError("dimension mismatch: " + path + " has " + std::to_string(f.features.cols()) +
                            " features, model expects " + std::to_string(params.input_dim()));
    }
    inputs.push_back({std::move(f.features), f.labels.value_or(std::vector<int>{}), domain});
  };
  add(o.source, 0);
  add(o.target, 1);
  if (inputs.empty()) throw ValidationError("give --source and/or --target feature files");
  const fs::path path = dir / (o.output_name.empty() ? "embeddings.csv" : o.output_name);
  eval::dump_embeddings(params, inputs, path);
  out << "wrote embeddings to " << path.string() << '\n';
  return 0;
}

void report(std::ostream& err, const char* kind, const std::string& msg) {
  std::string one_line = msg;
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  err << "sdadda: error[" << kind << "]: " << one_line << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised domain adaptation with dynamic distribution alignment", "sdadda"};
  app.require_subcommand(1, 1);
  Options o;

  auto* extract = app.add_subcommand("extract-features", "Differential-entropy features from a raw recording");
  add_common(extract, o);
  extract->add_option("--input", o.input, "Recording file (.csv or .bin)")->required();
  extract->add_option("--window-seconds", o.window_seconds, "Feature window length in seconds");
  extract->add_option("--label", o.label, "Label every window with this class");
  extract->add_option("--classes", o.classes, "Class count written to the header");
  extract->add_option("--name", o.output_name, "Output file name inside --out");
  extract->add_flag("--binary", o.binary, "Write the binary encoding");

  auto* synth = app.add_subcommand("synth", "Write a synthetic multi-subject shift dataset");
  add_common(synth, o);
  synth->add_flag("--binary", o.binary, "Write the binary encoding");

  auto* train = app.add_subcommand("train", "Train one model");
  add_common(train, o);
  train->add_option("--data", o.data, "'synth' or a manifest file");
  train->add_option("--holdout", o.holdout, "Target subject id (default: last)");
  train->add_option("--variant", o.variant, "EXP1..EXP6");
  train->add_option("--protocol", o.protocol, "single-session or cross-session");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a labeled feature file");
  add_common(evaluate, o);
  evaluate->add_option("--model", o.model, "Checkpoint")->required();
  evaluate->add_option("--data", o.data, "Labeled feature file")->required();

  auto* protocol = app.add_subcommand("protocol", "Leave-one-subject-out run of one variant");
  add_common(protocol, o);
  protocol->add_option("--data", o.data, "'synth' or a manifest file");
  protocol->add_option("--variant", o.variant, "EXP1..EXP6");
  protocol->add_option("--protocol", o.protocol, "single-session or cross-session");
  protocol->add_option("--jobs", o.jobs, "Folds to run concurrently");

  auto* ablate = app.add_subcommand("ablate", "Leave-one-subject-out runs of ablation variants");
  add_common(ablate, o);
  ablate->add_option("--data", o.data, "'synth' or a manifest file");
  ablate->add_option("--variant", o.variant, "EXP1..EXP6 or all");
  ablate->add_option("--protocol", o.protocol, "single-session or cross-session");
  ablate->add_option("--jobs", o.jobs, "Folds to run concurrently");

  auto* dump = app.add_subcommand("dump-embeddings", "Write eval-mode features for external projection");
  add_common(dump, o);
  dump->add_option("--model", o.model, "Checkpoint")->required();
  dump->add_option("--source", o.source, "Source-domain feature file");
  dump->add_option("--target", o.target, "Target-domain feature file");
  dump->add_option("--name", o.output_name, "Output file name inside --out");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report(err, "usage", e.what());
    return 2;
  }

  try {
    if (extract->parsed()) return cmd_extract(o, out);
    if (synth->parsed()) return cmd_synth(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (evaluate->parsed()) return cmd_evaluate(o, out);
    if (protocol->parsed()) return cmd_protocol(o, out);
    if (ablate->parsed()) return cmd_ablate(o, out);
    if (dump->parsed()) return cmd_dump(o, out);
  } catch (const ValidationError& e) {
    report(err, "validation", e.what());
    return 3;
  } catch (const std::exception& e) {
    report(err, "runtime", e.what());
    return 1;
  }
  report(err, "usage", "no command given");
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace sdadda::cli
