#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace sdadda::kernel {

// k(u, v) = exp(-||u - v||^2 / sigma). Note sigma divides the squared
// distance directly; there is no factor of two.
struct KernelConfig {
  enum class SigmaMode { fixed, median_heuristic };
  SigmaMode mode = SigmaMode::median_heuristic;
  double sigma = 1.0;  // used in fixed mode

  static KernelConfig fixed(double sigma) { return {SigmaMode::fixed, sigma}; }
  static KernelConfig median() { return {SigmaMode::median_heuristic, 1.0}; }
};

// Rows are samples.
struct LabeledBatch {
  Eigen::MatrixXd features;
  std::vector<int> labels;
};

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v,
                       double sigma);
double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v,
                       const KernelConfig& cfg);

Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& y,
                              double sigma);

// Median of the squared distances over all distinct row pairs; 1.0 if that
// median is zero. An even pair count averages the two middle values.
double median_bandwidth(const Eigen::Ref<const Eigen::MatrixXd>& pooled);

// Bandwidth for a source/target pair under `cfg`: cfg.sigma when fixed,
// otherwise the median heuristic on the stacked rows.
double resolve_sigma(const KernelConfig& cfg, const Eigen::Ref<const Eigen::MatrixXd>& xs,
                     const Eigen::Ref<const Eigen::MatrixXd>& xt);

struct Discrepancy {
  double value = 0.0;  // clamped to >= 0
  double raw = 0.0;    // before clamping
  Eigen::MatrixXd grad_source;  // d value / d xs, same shape as xs (empty unless requested)
  Eigen::MatrixXd grad_target;
};

// (1/n^2) sum K_ss + (1/m^2) sum K_tt - (2/nm) sum K_st.
double mmd(const Eigen::Ref<const Eigen::MatrixXd>& xs, const Eigen::Ref<const Eigen::MatrixXd>& xt,
           const KernelConfig& cfg);

Discrepancy mmd_with_gradient(const Eigen::Ref<const Eigen::MatrixXd>& xs,
                              const Eigen::Ref<const Eigen::MatrixXd>& xt, double sigma);

// Class-conditional MMD averaged over the classes present in both batches.
// Classes missing from either side are skipped; returns 0 when none remain.
double cmmd(const LabeledBatch& source, const LabeledBatch& target, const KernelConfig& cfg, int classes);

Discrepancy cmmd_with_gradient(const Eigen::Ref<const Eigen::MatrixXd>& xs, std::span<const int> source_labels,
                               const Eigen::Ref<const Eigen::MatrixXd>& xt, std::span<const int> target_labels,
                               int classes, double sigma);

// Number of classes that occur in both label sets.
int shared_class_count(std::span<const int> source_labels, std::span<const int> target_labels, int classes);

}  // namespace sdadda::kernel
