#pragma once

#include "sdadda/dataset.hpp"
#include "sdadda/net.hpp"
#include "sdadda/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sdadda::eval {

enum class Protocol { single_session, cross_session };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& s);  // "single-session" / "cross-session"

// EXP1 bare classifier, EXP2 +MMD, EXP3 +CMMD only, EXP4 MMD+CMMD with static
// weights, EXP5 dynamic weights without filtering, EXP6 everything.
enum class Variant { exp1 = 1, exp2, exp3, exp4, exp5, exp6 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);  // "EXP1".."EXP6", case-insensitive
trainer::Ablation ablation_for(Variant v);

struct Metrics {
  double accuracy = 0.0;
  Eigen::MatrixXi confusion;  // rows true, columns predicted
  std::vector<double> recall;  // per class; NaN for classes with no samples
  long long count = 0;
};

struct FoldResult {
  std::string subject;
  Metrics metrics;
};

struct ProtocolSummary {
  std::string variant;
  std::string protocol;
  std::vector<FoldResult> folds;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

// Target side of a split. Labels stay here and are never passed to training.
struct HeldOut {
  UnlabeledSet features;
  std::vector<int> labels;
};

struct Split {
  LabeledSet source;
  HeldOut target;
};

// Leave-one-subject-out. single_session uses session `session` of every
// subject on both sides; cross_session takes all of the held-out subject's
// sessions as target and pools every session of the others as source.
Split loso_split(const SubjectDataset& data, std::size_t held_out, Protocol protocol, std::size_t session = 0);

Metrics metrics_from_predictions(std::span<const int> truth, std::span<const int> predicted, int classes);

Metrics evaluate(const net::ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& features,
                 std::span<const int> labels);

// Mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

struct ProtocolOptions {
  Protocol protocol = Protocol::single_session;
  std::size_t session = 0;
  int jobs = 1;
  // When set, per-fold history CSVs are written here.
  std::optional<std::filesystem::path> out_dir;
};

// One model per held-out subject (seed + subject index), evaluated on that
// subject, gathered in subject order.
ProtocolSummary run_protocol(const SubjectDataset& data, const trainer::TrainConfig& cfg, Variant variant,
                             const ProtocolOptions& options);

void write_summary_csv(const ProtocolSummary& summary, const std::filesystem::path& path);
void write_summary_json(const ProtocolSummary& summary, const std::string& config_hash,
                        const std::filesystem::path& path);

// "87.27±07.55" style, in percent.
std::string format_mean_std(double mean, double stddev);

// Eval-mode 64-d features, one row per sample: f_0..f_k, domain, label.
// Domain 0 is source, 1 target; label -1 when unknown.
struct EmbeddingInput {
  Eigen::MatrixXd features;
  std::vector<int> labels;  // may be empty
  int domain = 0;
};
void dump_embeddings(const net::ModelParams& params, const std::vector<EmbeddingInput>& inputs,
                     const std::filesystem::path& path);

}  // namespace sdadda::eval
