#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's kernel or gradient code.

#include "sdadda/net.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

inline double kernel(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j, double sigma) {
  double d2 = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const double diff = a(i, k) - b(j, k);
    d2 += diff * diff;
  }
  return std::exp(-d2 / sigma);
}

// Triple-sum form of the squared RKHS distance between empirical means.
inline double mmd(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& xt, double sigma) {
  const double n = static_cast<double>(xs.rows()), m = static_cast<double>(xt.rows());
  double ss = 0.0, tt = 0.0, st = 0.0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    for (Eigen::Index j = 0; j < xs.rows(); ++j) ss += kernel(xs, i, xs, j, sigma);
  for (Eigen::Index i = 0; i < xt.rows(); ++i)
    for (Eigen::Index j = 0; j < xt.rows(); ++j) tt += kernel(xt, i, xt, j, sigma);
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    for (Eigen::Index j = 0; j < xt.rows(); ++j) st += kernel(xs, i, xt, j, sigma);
  return ss / (n * n) + tt / (m * m) - 2.0 * st / (n * m);
}

// Per-class double loops, averaged over classes present on both sides.
inline double cmmd(const Eigen::MatrixXd& xs, const std::vector<int>& ys, const Eigen::MatrixXd& xt,
                   const std::vector<int>& yt, int classes, double sigma) {
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    double ns = 0, nt = 0, ss = 0, tt = 0, st = 0;
    for (std::size_t i = 0; i < ys.size(); ++i) ns += ys[i] == c;
    for (std::size_t j = 0; j < yt.size(); ++j) nt += yt[j] == c;
    if (ns == 0 || nt == 0) continue;
    ++present;
    for (std::size_t i = 0; i < ys.size(); ++i)
      for (std::size_t j = 0; j < ys.size(); ++j)
        if (ys[i] == c && ys[j] == c) ss += kernel(xs, static_cast<Eigen::Index>(i), xs, static_cast<Eigen::Index>(j), sigma);
    for (std::size_t i = 0; i < yt.size(); ++i)
      for (std::size_t j = 0; j < yt.size(); ++j)
        if (yt[i] == c && yt[j] == c) tt += kernel(xt, static_cast<Eigen::Index>(i), xt, static_cast<Eigen::Index>(j), sigma);
    for (std::size_t i = 0; i < ys.size(); ++i)
      for (std::size_t j = 0; j < yt.size(); ++j)
        if (ys[i] == c && yt[j] == c) st += kernel(xs, static_cast<Eigen::Index>(i), xt, static_cast<Eigen::Index>(j), sigma);
    total += ss / (ns * ns) + tt / (nt * nt) - 2.0 * st / (ns * nt);
  }
  return present == 0 ? 0.0 : total / present;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(gen);
  return m;
}

// Central differences of `loss` with respect to every parameter entry.
inline sdadda::net::ModelParams finite_difference(sdadda::net::ModelParams params,
                                                  const std::function<double(const sdadda::net::ModelParams&)>& loss,
                                                  double eps = 1e-5) {
  auto grad = sdadda::net::ModelParams::zeros_like(params);
  std::vector<std::span<double>> out;
  grad.for_each([&](std::string_view, std::span<double> v, bool, bool) { out.push_back(v); });
  std::size_t k = 0;
  params.for_each([&](std::string_view, std::span<double> v, bool, bool) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + eps;
      const double up = loss(params);
      v[i] = keep - eps;
      const double down = loss(params);
      v[i] = keep;
      out[k][i] = (up - down) / (2.0 * eps);
    }
    ++k;
  });
  return grad;
}

// max |a - b| / max(|a|, |b|, floor) over every entry.
inline double max_relative_error(const sdadda::net::ModelParams& a, const sdadda::net::ModelParams& b,
                                 double floor = 1e-6) {
  std::vector<std::span<const double>> bs;
  b.for_each([&](std::string_view, std::span<const double> v, bool, bool) { bs.push_back(v); });
  double worst = 0.0;
  std::size_t k = 0;
  a.for_each([&](std::string_view, std::span<const double> v, bool, bool) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double denom = std::max({std::abs(v[i]), std::abs(bs[k][i]), floor});
      worst = std::max(worst, std::abs(v[i] - bs[k][i]) / denom);
    }
    ++k;
  });
  return worst;
}

}  // namespace oracle

namespace oracle {

struct FrozenTarget {
  std::vector<Eigen::Index> rows;  // retained target rows
  std::vector<int> labels;         // their pseudo-labels
};

// Dropout-free forward written out with plain loops.
inline Eigen::MatrixXd extract(const Eigen::MatrixXd& x, const sdadda::net::ModelParams& p) {
  auto dense_relu = [](const Eigen::MatrixXd& in, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
    Eigen::MatrixXd out(in.rows(), w.cols());
    for (Eigen::Index i = 0; i < in.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        double s = b(j);
        for (Eigen::Index k = 0; k < in.cols(); ++k) s += in(i, k) * w(k, j);
        out(i, j) = s > 0.0 ? s : 0.0;
      }
    return out;
  };
  return dense_relu(dense_relu(x, p.w1, p.b1), p.w2, p.b2);
}

inline double total_loss(const sdadda::net::ModelParams& p, const Eigen::MatrixXd& xs, const std::vector<int>& ys,
                         const Eigen::MatrixXd& xt, const FrozenTarget& frozen, double alpha, double beta,
                         double sigma, int classes) {
  const Eigen::MatrixXd fs = extract(xs, p);
  const Eigen::MatrixXd ft = extract(xt, p);
  double ce = 0.0;
  for (Eigen::Index i = 0; i < fs.rows(); ++i) {
    std::vector<double> z(static_cast<std::size_t>(classes));
    double zmax = -1e300;
    for (int c = 0; c < classes; ++c) {
      double s = p.bc(c);
      for (Eigen::Index k = 0; k < fs.cols(); ++k) s += fs(i, k) * p.wc(k, c);
      z[static_cast<std::size_t>(c)] = s;
      zmax = std::max(zmax, s);
    }
    double norm = 0.0;
    for (double v : z) norm += std::exp(v - zmax);
    ce -= (z[static_cast<std::size_t>(ys[static_cast<std::size_t>(i)])] - zmax) - std::log(norm);
  }
  ce /= static_cast<double>(fs.rows());
  double total = ce;
  if (alpha != 0.0) total += alpha * std::max(mmd(fs, ft, sigma), 0.0);
  if (beta != 0.0 && !frozen.rows.empty()) {
    Eigen::MatrixXd kept(static_cast<Eigen::Index>(frozen.rows.size()), ft.cols());
    for (std::size_t i = 0; i < frozen.rows.size(); ++i) kept.row(static_cast<Eigen::Index>(i)) = ft.row(frozen.rows[i]);
    total += beta * std::max(cmmd(fs, ys, kept, frozen.labels, classes, sigma), 0.0);
  }
  return total;
}

}  // namespace oracle
