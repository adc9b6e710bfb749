#include "sdadda/kernel_stats.hpp"

#include "sdadda/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sdadda::kernel {

namespace {

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("kernel bandwidth must be positive and finite, got " + std::to_string(sigma));
  }
}

void check_same_dim(Eigen::Index a, Eigen::Index b) {
  if (a != b) {
    throw ValidationError("feature dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

void check_labels(std::span<const int> labels, Eigen::Index rows, int classes, const char* side) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw ValidationError(std::string(side) + " labels do not match row count");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ValidationError(std::string(side) + " label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
  }
}

// Adds the gradient of sum_ij weights(i,j) * k(a_i, b_j) to grad_a and grad_b.
void accumulate_block_gradient(const Eigen::MatrixXd& weighted, const Eigen::Ref<const Eigen::MatrixXd>& a,
                               const Eigen::Ref<const Eigen::MatrixXd>& b, double sigma, Eigen::MatrixXd& grad_a,
                               Eigen::MatrixXd& grad_b) {
  const double scale = -2.0 / sigma;
  grad_a += scale * (weighted.rowwise().sum().asDiagonal() * a - weighted * b);
  grad_b += scale * (weighted.colwise().sum().transpose().asDiagonal() * b - weighted.transpose() * a);
}

Discrepancy block_discrepancy(const Eigen::Ref<const Eigen::MatrixXd>& xs, const Eigen::Ref<const Eigen::MatrixXd>& xt,
                              double sigma, bool with_gradient) {
  const auto n = static_cast<double>(xs.rows());
  const auto m = static_cast<double>(xt.rows());
  const Eigen::MatrixXd kss = kernel_matrix(xs, xs, sigma);
  const Eigen::MatrixXd ktt = kernel_matrix(xt, xt, sigma);
  const Eigen::MatrixXd kst = kernel_matrix(xs, xt, sigma);

  Discrepancy out;
  out.raw = kss.sum() / (n * n) + ktt.sum() / (m * m) - 2.0 * kst.sum() / (n * m);
  out.value = std::max(out.raw, 0.0);
  if (!with_gradient) return out;

  // Gradient of the raw value; callers zero it when the value is clamped.
  out.grad_source = Eigen::MatrixXd::Zero(xs.rows(), xs.cols());
  out.grad_target = Eigen::MatrixXd::Zero(xt.rows(), xt.cols());
  accumulate_block_gradient(kss / (n * n), xs, xs, sigma, out.grad_source, out.grad_source);
  accumulate_block_gradient(ktt / (m * m), xt, xt, sigma, out.grad_target, out.grad_target);
  accumulate_block_gradient(kst * (-2.0 / (n * m)), xs, xt, sigma, out.grad_source, out.grad_target);
  return out;
}

Eigen::MatrixXd gather_rows(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<std::vector<Eigen::Index>> rows_by_class(std::span<const int> labels, int classes) {
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v,
                       double sigma) {
  check_same_dim(u.size(), v.size());
  check_sigma(sigma);
  if (!u.allFinite() || !v.allFinite()) throw ValidationError("non-finite kernel input");
  return std::exp(-(u - v).squaredNorm() / sigma);
}

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v,
                       const KernelConfig& cfg) {
  if (cfg.mode != KernelConfig::SigmaMode::fixed) {
    throw ValidationError("gaussian_kernel needs a resolved bandwidth (fixed mode)");
  }
  return gaussian_kernel(u, v, cfg.sigma);
}

Eigen::MatrixXd kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& y,
                              double sigma) {
  check_same_dim(x.cols(), y.cols());
  check_sigma(sigma);
  // Samples as contiguous columns; each entry is still one direct pair distance.
  const Eigen::MatrixXd xt = x.transpose();
  const Eigen::MatrixXd yt = y.transpose();
  Eigen::MatrixXd k(x.rows(), y.rows());
  for (Eigen::Index j = 0; j < y.rows(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      k(i, j) = std::exp(-(xt.col(i) - yt.col(j)).squaredNorm() / sigma);
    }
  }
  return k;
}

double median_bandwidth(const Eigen::Ref<const Eigen::MatrixXd>& pooled) {
  const Eigen::Index n = pooled.rows();
  if (n < 2) throw ValidationError("median bandwidth needs at least 2 rows");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  const Eigen::MatrixXd cols = pooled.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((cols.col(i) - cols.col(j)).squaredNorm());
  }
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double median = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return median > 0.0 ? median : 1.0;
}

double resolve_sigma(const KernelConfig& cfg, const Eigen::Ref<const Eigen::MatrixXd>& xs,
                     const Eigen::Ref<const Eigen::MatrixXd>& xt) {
  if (cfg.mode == KernelConfig::SigmaMode::fixed) {
    check_sigma(cfg.sigma);
    return cfg.sigma;
  }
  check_same_dim(xs.cols(), xt.cols());
  Eigen::MatrixXd pooled(xs.rows() + xt.rows(), xs.cols());
  pooled << xs, xt;
  return median_bandwidth(pooled);
}

double mmd(const Eigen::Ref<const Eigen::MatrixXd>& xs, const Eigen::Ref<const Eigen::MatrixXd>& xt,
           const KernelConfig& cfg) {
  if (xs.rows() < 1 || xt.rows() < 1) throw ValidationError("empty domain passed to mmd");
  check_same_dim(xs.cols(), xt.cols());
  return block_discrepancy(xs, xt, resolve_sigma(cfg, xs, xt), false).value;
}

Discrepancy mmd_with_gradient(const Eigen::Ref<const Eigen::MatrixXd>& xs,
                              const Eigen::Ref<const Eigen::MatrixXd>& xt, double sigma) {
  if (xs.rows() < 1 || xt.rows() < 1) throw ValidationError("empty domain passed to mmd");
  check_same_dim(xs.cols(), xt.cols());
  Discrepancy out = block_discrepancy(xs, xt, sigma, true);
  if (out.raw < 0.0) {
    out.grad_source.setZero();
    out.grad_target.setZero();
  }
  return out;
}

int shared_class_count(std::span<const int> source_labels, std::span<const int> target_labels, int classes) {
  std::vector<char> in_s(static_cast<std::size_t>(classes), 0), in_t(static_cast<std::size_t>(classes), 0);
  for (int y : source_labels) in_s[static_cast<std::size_t>(y)] = 1;
  for (int y : target_labels) in_t[static_cast<std::size_t>(y)] = 1;
  int shared = 0;
  for (std::size_t c = 0; c < in_s.size(); ++c) shared += in_s[c] && in_t[c];
  return shared;
}

Discrepancy cmmd_with_gradient(const Eigen::Ref<const Eigen::MatrixXd>& xs, std::span<const int> source_labels,
                               const Eigen::Ref<const Eigen::MatrixXd>& xt, std::span<const int> target_labels,
                               int classes, double sigma) {
  if (classes < 1) throw ValidationError("class count must be >= 1");
  check_same_dim(xs.cols(), xt.cols());
  check_labels(source_labels, xs.rows(), classes, "source");
  check_labels(target_labels, xt.rows(), classes, "target");

  Discrepancy out;
  out.grad_source = Eigen::MatrixXd::Zero(xs.rows(), xs.cols());
  out.grad_target = Eigen::MatrixXd::Zero(xt.rows(), xt.cols());
  const auto src_rows = rows_by_class(source_labels, classes);
  const auto tgt_rows = rows_by_class(target_labels, classes);
  const int shared = shared_class_count(source_labels, target_labels, classes);
  if (shared == 0) return out;

  std::vector<Discrepancy> per_class;
  for (std::size_t c = 0; c < src_rows.size(); ++c) {
    if (src_rows[c].empty() || tgt_rows[c].empty()) continue;
    const Eigen::MatrixXd cs = gather_rows(xs, src_rows[c]);
    const Eigen::MatrixXd ct = gather_rows(xt, tgt_rows[c]);
    const Discrepancy d = block_discrepancy(cs, ct, sigma, true);
    out.raw += d.raw;
    for (std::size_t i = 0; i < src_rows[c].size(); ++i) {
      out.grad_source.row(src_rows[c][i]) += d.grad_source.row(static_cast<Eigen::Index>(i));
    }
    for (std::size_t i = 0; i < tgt_rows[c].size(); ++i) {
      out.grad_target.row(tgt_rows[c][i]) += d.grad_target.row(static_cast<Eigen::Index>(i));
    }
  }
  out.raw /= static_cast<double>(shared);
  out.value = std::max(out.raw, 0.0);
  if (out.raw < 0.0) {
    out.grad_source.setZero();
    out.grad_target.setZero();
  } else {
    out.grad_source /= static_cast<double>(shared);
    out.grad_target /= static_cast<double>(shared);
  }
  return out;
}

double cmmd(const LabeledBatch& source, const LabeledBatch& target, const KernelConfig& cfg, int classes) {
  if (classes < 1) throw ValidationError("class count must be >= 1");
  check_same_dim(source.features.cols(), target.features.cols());
  check_labels(source.labels, source.features.rows(), classes, "source");
  check_labels(target.labels, target.features.rows(), classes, "target");
  if (source.features.rows() == 0 || target.features.rows() == 0) return 0.0;
  const double sigma = resolve_sigma(cfg, source.features, target.features);
  return cmmd_with_gradient(source.features, source.labels, target.features, target.labels, classes, sigma).value;
}

}  // namespace sdadda::kernel
