#pragma once

#include "sdadda/kernel_stats.hpp"
#include "sdadda/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace sdadda::net {

struct Architecture {
  int input_dim = 310;
  int hidden1 = 64;
  int hidden2 = 64;
  int classes = 3;
  double dropout = 0.25;
};

// Extractor: relu(x W1 + b1) -> dropout -> relu(. W2 + b2) -> dropout.
// Classifier: softmax(h Wc + bc). Row vectors are samples.
struct ModelParams {
  Eigen::MatrixXd w1;  // [input x hidden1]
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // [hidden1 x hidden2]
  Eigen::VectorXd b2;
  Eigen::MatrixXd wc;  // [hidden2 x classes]
  Eigen::VectorXd bc;

  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static ModelParams init(const Architecture& arch, Rng& rng);
  static ModelParams zeros_like(const ModelParams& other);

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int feature_dim() const { return static_cast<int>(w2.cols()); }
  int classes() const { return static_cast<int>(wc.cols()); }

  // FNV-1a over the raw bytes of every tensor.
  std::uint64_t fingerprint() const;

  // Visits (name, flat values, is_weight, is_classifier) for every tensor in
  // a fixed order.
  template <typename F>
  void for_each(F&& f) {
    f(std::string_view("w1"), std::span<double>(w1.data(), static_cast<std::size_t>(w1.size())), true, false);
    f(std::string_view("b1"), std::span<double>(b1.data(), static_cast<std::size_t>(b1.size())), false, false);
    f(std::string_view("w2"), std::span<double>(w2.data(), static_cast<std::size_t>(w2.size())), true, false);
    f(std::string_view("b2"), std::span<double>(b2.data(), static_cast<std::size_t>(b2.size())), false, false);
    f(std::string_view("wc"), std::span<double>(wc.data(), static_cast<std::size_t>(wc.size())), true, true);
    f(std::string_view("bc"), std::span<double>(bc.data(), static_cast<std::size_t>(bc.size())), false, true);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each([&](std::string_view n, std::span<double> v, bool w, bool c) {
      f(n, std::span<const double>(v.data(), v.size()), w, c);
    });
  }
};

long long parameter_count(const ModelParams& params);
long long parameter_count(const Architecture& arch);

// Throws ValidationError on inconsistent shapes.
void validate(const ModelParams& params);

enum class Mode { train, eval };

struct ForwardTrace {
  Eigen::MatrixXd input;
  Eigen::MatrixXd pre1;   // x W1 + b1
  Eigen::MatrixXd mask1;  // empty when no dropout was applied
  Eigen::MatrixXd drop1;  // relu(pre1) * mask1
  Eigen::MatrixXd pre2;
  Eigen::MatrixXd mask2;
  Eigen::MatrixXd features;  // relu(pre2) * mask2
  std::uint64_t params_fingerprint = 0;
};

// Dropout is inverted (kept units scaled by 1/(1-p)) and only active in
// train mode with p > 0.
ForwardTrace forward_features(const Eigen::Ref<const Eigen::MatrixXd>& x, const ModelParams& params, Mode mode,
                              Rng& rng, double dropout = 0.25);

Eigen::MatrixXd logits(const Eigen::Ref<const Eigen::MatrixXd>& features, const ModelParams& params);

// Row-wise softmax of the classifier logits.
Eigen::MatrixXd forward_logits(const Eigen::Ref<const Eigen::MatrixXd>& features, const ModelParams& params);

Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits);

// Mean negative log-likelihood with log clamped at 1e-12.
double cross_entropy(const Eigen::Ref<const Eigen::MatrixXd>& probs, std::span<const int> labels);

// Eval-mode class probabilities for a batch of raw inputs.
Eigen::MatrixXd predict_proba(const Eigen::Ref<const Eigen::MatrixXd>& x, const ModelParams& params);

// Loss weights for one step. When dynamic_beta is set, beta is recomputed
// from the step's source loss with the given breakpoints.
struct LossSettings {
  double alpha = 1.0;
  double beta = 1.0;
  double tau = 0.0;
  bool use_mmd = true;
  bool use_cmmd = true;
  bool dynamic_beta = false;
  double rho0 = 0.10;
  double rho1 = 0.15;
  double dropout = 0.25;
};

struct LossBreakdown {
  double l_ds = 0.0;
  double l_mmd = 0.0;
  double l_cmmd = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double mmd_raw = 0.0;
  double cmmd_raw = 0.0;
  double sigma = 0.0;
  int n_pseudo_retained = 0;
  bool target_empty = false;
};

// Everything backward() needs: the pooled forward pass (source rows first)
// plus the step's discrete choices, which are constants of the step.
struct LossTrace {
  ForwardTrace forward;
  Eigen::Index n_source = 0;
  std::vector<int> source_labels;
  Eigen::MatrixXd source_probs;
  std::vector<Eigen::Index> retained_target_rows;  // rows within the target batch
  std::vector<int> retained_pseudo_labels;
  LossBreakdown breakdown;
  bool use_mmd = false;
  bool use_cmmd = false;
  // alpha * d mmd / d features + beta * d cmmd / d features, pooled rows.
  Eigen::MatrixXd alignment_grad;
};

struct LossResult {
  LossBreakdown breakdown;
  LossTrace trace;
};

LossResult total_loss(const Eigen::Ref<const Eigen::MatrixXd>& source, std::span<const int> source_labels,
                      const Eigen::Ref<const Eigen::MatrixXd>& target, const ModelParams& params,
                      const LossSettings& settings, const kernel::KernelConfig& kernel_cfg, Rng& rng);

// Exact gradient of trace.breakdown.total with respect to every parameter.
// Pseudo-labels, the confidence mask and the kernel bandwidth are held fixed.
// Throws std::logic_error if params changed since the forward pass.
ModelParams backward(const LossTrace& trace, const ModelParams& params);

// Flat binary checkpoint: "SDAM" magic, u32 version, u32 tensor count, then per
// tensor u64 rows, u64 cols, row-major little-endian doubles.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace sdadda::net
