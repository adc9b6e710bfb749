#include "sdadda/evaluation.hpp"

#include "sdadda/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>

namespace sdadda::eval {

std::string to_string(Protocol p) { return p == Protocol::single_session ? "single-session" : "cross-session"; }

Protocol parse_protocol(const std::string& s) {
  if (s == "single-session" || s == "single_session") return Protocol::single_session;
  if (s == "cross-session" || s == "cross_session") return Protocol::cross_session;
  throw ValidationError("unknown protocol '" + s + "' (expected single-session or cross-session)");
}

std::string to_string(Variant v) { return "EXP" + std::to_string(static_cast<int>(v)); }

Variant parse_variant(const std::string& s) {
  std::string u;
  for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u.size() == 4 && u.starts_with("EXP") && u[3] >= '1' && u[3] <= '6') return static_cast<Variant>(u[3] - '0');
  throw ValidationError("unknown variant '" + s + "' (expected EXP1..EXP6)");
}

trainer::Ablation ablation_for(Variant v) {
  switch (v) {
    case Variant::exp1: return {false, false, false, false};
    case Variant::exp2: return {true, false, false, false};
    case Variant::exp3: return {false, true, false, false};
    case Variant::exp4: return {true, true, false, false};
    case Variant::exp5: return {true, true, true, false};
    case Variant::exp6: return {true, true, true, true};
  }
  throw ValidationError("bad variant");
}

Split loso_split(const SubjectDataset& data, std::size_t held_out, Protocol protocol, std::size_t session) {
  if (held_out >= data.subjects.size()) {
    throw ValidationError("unknown subject index " + std::to_string(held_out) + " (dataset has " +
                          std::to_string(data.subjects.size()) + " subjects)");
  }
  if (data.subjects.size() < 2) throw ValidationError("leave-one-subject-out needs at least 2 subjects");

  std::vector<const LabeledSet*> source_parts;
  std::vector<const LabeledSet*> target_parts;
  for (std::size_t s = 0; s < data.subjects.size(); ++s) {
    const Subject& subj = data.subjects[s];
    auto& parts = s == held_out ? target_parts : source_parts;
    if (protocol == Protocol::single_session) {
      if (session >= subj.sessions.size()) {
        throw ValidationError("subject '" + subj.id + "' has no session index " + std::to_string(session));
      }
      parts.push_back(&subj.sessions[session].data);
    } else {
      if (subj.sessions.empty()) throw ValidationError("subject '" + subj.id + "' has no sessions");
      for (const auto& sess : subj.sessions) parts.push_back(&sess.data);
    }
  }
  Split split;
  split.source = concat(source_parts);
  LabeledSet target = concat(target_parts);
  split.target.features.features = std::move(target.features);
  split.target.labels = std::move(target.labels);
  return split;
}

Metrics metrics_from_predictions(std::span<const int> truth, std::span<const int> predicted, int classes) {
  if (truth.size() != predicted.size()) throw ValidationError("prediction count does not match label count");
  Metrics m;
  m.confusion = Eigen::MatrixXi::Zero(classes, classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes) {
      throw ValidationError("label " + std::to_string(truth[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    ++m.confusion(truth[i], predicted[i]);
  }
  m.count = static_cast<long long>(truth.size());
  m.accuracy = m.count == 0 ? 0.0 : static_cast<double>(m.confusion.trace()) / static_cast<double>(m.count);
  for (int c = 0; c < classes; ++c) {
    const int row = m.confusion.row(c).sum();
    m.recall.push_back(row == 0 ? std::numeric_limits<double>::quiet_NaN()
                                : static_cast<double>(m.confusion(c, c)) / static_cast<double>(row));
  }
  return m;
}

Metrics evaluate(const net::ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& features,
                 std::span<const int> labels) {
  if (features.cols() != params.input_dim()) {
    throw ValidationError("data dimension " + std::to_string(features.cols()) + " does not match model input " +
                          std::to_string(params.input_dim()));
  }
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw ValidationError("label count does not match rows");
  }
  std::vector<int> predicted;
  if (features.rows() > 0) {
    const Eigen::MatrixXd probs = net::predict_proba(features, params);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < probs.cols(); ++c) {
        if (probs(i, c) > probs(i, best)) best = c;
      }
      predicted.push_back(static_cast<int>(best));
    }
  }
  return metrics_from_predictions(labels, predicted, params.classes());
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%05.2f", 100.0 * mean, 100.0 * stddev);
  return buf;
}

ProtocolSummary run_protocol(const SubjectDataset& data, const trainer::TrainConfig& cfg, Variant variant,
                             const ProtocolOptions& options) {
  const std::size_t n = data.subjects.size();
  if (n < 2) throw ValidationError("protocol needs at least 2 subjects");
  trainer::TrainConfig base = cfg;
  base.ablation = ablation_for(variant);
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  std::vector<FoldResult> folds(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t s = next++; s < n; s = next++) {
      try {
        Split split = loso_split(data, s, options.protocol, options.session);
        trainer::TrainConfig fold_cfg = base;
        fold_cfg.seed = cfg.seed + s;
        auto result = trainer::train(split.source, split.target.features, data.classes, fold_cfg);
        if (options.out_dir) {
          trainer::write_history_csv(result.history,
                                     *options.out_dir / ("history_" + data.subjects[s].id + ".csv"));
        }
        folds[s] = {data.subjects[s].id, evaluate(result.params, split.target.features.features, split.target.labels)};
      } catch (...) {
        errors[s] = std::current_exception();
      }
    }
  };
  const int jobs = std::clamp(options.jobs, 1, static_cast<int>(n));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t s = 0; s < n; ++s) {
    if (!errors[s]) continue;
    const std::string fold = "fold " + std::to_string(s) + " (subject '" + data.subjects[s].id + "')";
    try {
      std::rethrow_exception(errors[s]);
    } catch (const ValidationError& e) {
      throw ValidationError(fold + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError(fold + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(fold + ": " + e.what());
    }
  }

  ProtocolSummary summary;
  summary.variant = to_string(variant);
  summary.protocol = to_string(options.protocol);
  summary.folds = std::move(folds);
  std::vector<double> acc;
  for (const auto& f : summary.folds) acc.push_back(f.metrics.accuracy);
  std::tie(summary.mean, summary.stddev) = mean_std(acc);
  return summary;
}

void write_summary_csv(const ProtocolSummary& summary, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write summary: " + path.string());
  os << "subject,accuracy,count,confusion\n";
  char buf[64];
  for (const auto& f : summary.folds) {
    std::snprintf(buf, sizeof buf, "%.17g", f.metrics.accuracy);
    os << f.subject << ',' << buf << ',' << f.metrics.count << ',';
    // Confusion flattened row-major, ';'-separated.
    for (Eigen::Index i = 0; i < f.metrics.confusion.rows(); ++i) {
      for (Eigen::Index j = 0; j < f.metrics.confusion.cols(); ++j) {
        if (i || j) os << ';';
        os << f.metrics.confusion(i, j);
      }
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g", summary.mean);
  os << "mean," << buf << ",,\n";
  std::snprintf(buf, sizeof buf, "%.17g", summary.stddev);
  os << "std," << buf << ",,\n";
}

void write_summary_json(const ProtocolSummary& summary, const std::string& config_hash,
                        const std::filesystem::path& path) {
  nlohmann::json j;
  j["variant"] = summary.variant;
  j["protocol"] = summary.protocol;
  j["config_hash"] = config_hash;
  j["mean"] = summary.mean;
  j["std"] = summary.stddev;
  j["formatted"] = format_mean_std(summary.mean, summary.stddev);
  auto& folds = j["folds"] = nlohmann::json::array();
  for (const auto& f : summary.folds) {
    nlohmann::json conf = nlohmann::json::array();
    for (Eigen::Index i = 0; i < f.metrics.confusion.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < f.metrics.confusion.cols(); ++c) row.push_back(f.metrics.confusion(i, c));
      conf.push_back(row);
    }
    folds.push_back({{"subject", f.subject}, {"accuracy", f.metrics.accuracy}, {"count", f.metrics.count},
                     {"confusion", conf}});
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot write summary: " + path.string());
  os << j.dump(2) << '\n';
}

void dump_embeddings(const net::ModelParams& params, const std::vector<EmbeddingInput>& inputs,
                     const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write embeddings: " + path.string());
  for (int k = 0; k < params.feature_dim(); ++k) os << 'f' << k << ',';
  os << "domain,label\n";
  Rng unused(0);
  char buf[32];
  for (const auto& in : inputs) {
    if (in.features.rows() == 0) continue;
    if (!in.labels.empty() && static_cast<Eigen::Index>(in.labels.size()) != in.features.rows()) {
      throw ValidationError("embedding labels do not match rows");
    }
    const auto trace = net::forward_features(in.features, params, net::Mode::eval, unused);
    for (Eigen::Index i = 0; i < trace.features.rows(); ++i) {
      for (Eigen::Index k = 0; k < trace.features.cols(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", trace.features(i, k));
        os << buf << ',';
      }
      os << in.domain << ',' << (in.labels.empty() ? -1 : in.labels[static_cast<std::size_t>(i)]) << '\n';
    }
  }
  if (!os) throw IoError("failed writing embeddings: " + path.string());
}

}  // namespace sdadda::eval
