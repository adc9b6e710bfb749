#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "sdadda/error.hpp"
#include "sdadda/net.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace sdadda;
using namespace sdadda::net;

namespace {

const Architecture tiny{6, 4, 4, 3, 0.0};

struct TinyProblem {
  ModelParams params;
  Eigen::MatrixXd xs, xt;
  std::vector<int> ys;
};

TinyProblem tiny_problem(std::uint64_t seed) {
  Rng rng(seed);
  std::mt19937_64 gen(seed);
  TinyProblem p{ModelParams::init(tiny, rng), oracle::random_matrix(5, 6, gen), oracle::random_matrix(5, 6, gen, 1.5), {0, 1, 2, 1, 0}};
  // Nonzero biases keep units away from the ReLU kink at initialisation.
  p.params.b1.setConstant(0.3);
  p.params.b2.setConstant(0.2);
  p.params.bc << 0.1, -0.2, 0.05;
  return p;
}

double gradient_error(const TinyProblem& p, const LossSettings& s, const kernel::KernelConfig& kcfg) {
  Rng rng(1);
  const auto r = total_loss(p.xs, p.ys, p.xt, p.params, s, kcfg, rng);
  const auto analytic = backward(r.trace, p.params);
  const oracle::FrozenTarget frozen{r.trace.retained_target_rows, r.trace.retained_pseudo_labels};
  const double alpha = r.trace.use_mmd ? r.breakdown.alpha : 0.0;
  const double beta = r.trace.use_cmmd ? r.breakdown.beta : 0.0;
  const double sigma = r.breakdown.sigma;
  const double oracle_total = oracle::total_loss(p.params, p.xs, p.ys, p.xt, frozen, alpha, beta, sigma, 3);
  CHECK(r.breakdown.total == doctest::Approx(oracle_total).epsilon(1e-10));
  const auto numeric = oracle::finite_difference(p.params, [&](const ModelParams& q) {
    return oracle::total_loss(q, p.xs, p.ys, p.xt, frozen, alpha, beta, sigma, 3);
  });
  return oracle::max_relative_error(analytic, numeric);
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(parameter_count(Architecture{310, 64, 64, 3}) == 310 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
  CHECK(parameter_count(Architecture{310, 64, 64, 4}) == 310 * 64 + 64 + 64 * 64 + 64 + 64 * 4 + 4);
  CHECK(parameter_count(Architecture{1, 1, 1, 1}) == 6);
  Rng rng(3);
  CHECK(parameter_count(ModelParams::init(Architecture{}, rng)) == 24259);
}

TEST_CASE("initialisation bounds") {
  Rng rng(9);
  const auto p = ModelParams::init(Architecture{}, rng);
  CHECK(p.w1.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / (310 + 64)));
  CHECK(p.w2.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 128.0));
  CHECK(p.b1.isZero());
  CHECK(p.bc.isZero());
  Rng again(9);
  CHECK(ModelParams::init(Architecture{}, again).fingerprint() == p.fingerprint());
}

TEST_CASE("forward pass") {
  Rng rng(2);
  const auto p = ModelParams::init(Architecture{}, rng);
  const auto zero = forward_features(Eigen::MatrixXd::Zero(2, 310), p, Mode::eval, rng);
  CHECK(zero.features.isZero());

  std::mt19937_64 gen(4);
  const auto x = oracle::random_matrix(7, 310, gen);
  const auto a = forward_features(x, p, Mode::eval, rng).features;
  const auto b = forward_features(x, p, Mode::eval, rng).features;
  CHECK(a == b);
  CHECK(a.isApprox(oracle::extract(x, p), 1e-13));
  CHECK_THROWS_AS(forward_features(Eigen::MatrixXd::Zero(2, 309), p, Mode::eval, rng), ValidationError);
}

TEST_CASE("dropout masks drop about a quarter of the units") {
  Rng rng(5);
  auto p = ModelParams::init(Architecture{}, rng);
  p.b1.setConstant(10.0);
  p.b2.setConstant(10.0);
  const auto t = forward_features(Eigen::MatrixXd::Zero(200, 310), p, Mode::train, rng, 0.25);
  for (const auto* mask : {&t.mask1, &t.mask2}) {
    const double dropped = static_cast<double>((mask->array() == 0.0).count()) / static_cast<double>(mask->size());
    CHECK(dropped == doctest::Approx(0.25).epsilon(0.2));
    CHECK(mask->maxCoeff() == doctest::Approx(1.0 / 0.75));
  }
}

TEST_CASE("softmax and cross entropy") {
  const auto uniform = softmax_rows(Eigen::MatrixXd::Constant(2, 3, 0.7));
  CHECK(uniform.isApproxToConstant(1.0 / 3.0, 1e-15));

  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(1, 3);
  big(0, 1) = 1000.0;
  const auto onehot = softmax_rows(big);
  CHECK(std::abs(onehot(0, 1) - 1.0) <= 1e-9);
  CHECK(onehot(0, 0) <= 1e-9);

  std::mt19937_64 gen(6);
  const auto probs = softmax_rows(oracle::random_matrix(10, 5, gen, 4.0));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) CHECK(std::abs(probs.row(i).sum() - 1.0) <= 1e-12);
  CHECK(probs.minCoeff() >= 0.0);

  Eigen::MatrixXd perfect = Eigen::MatrixXd::Zero(2, 3);
  perfect(0, 2) = perfect(1, 0) = 1.0;
  CHECK(cross_entropy(perfect, std::vector<int>{2, 0}) == 0.0);
  CHECK(cross_entropy(uniform, std::vector<int>{0, 2}) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  Eigen::MatrixXd two(2, 3);
  two << 0.5, 0.25, 0.25, 0.5, 0.25, 0.25;
  CHECK(cross_entropy(two, std::vector<int>{0, 1}) == doctest::Approx(1.0397207708399179).epsilon(1e-14));
  CHECK(std::isfinite(cross_entropy(perfect, std::vector<int>{0, 1})));
}

TEST_CASE("loss composition") {
  const auto p = tiny_problem(31);
  const auto kcfg = kernel::KernelConfig::median();
  Rng rng(1);
  const auto none = total_loss(p.xs, p.ys, p.xt, p.params, {.alpha = 0.0, .beta = 0.0, .dropout = 0.0}, kcfg, rng);
  CHECK(none.breakdown.total == none.breakdown.l_ds);

  const auto r = total_loss(p.xs, p.ys, p.xt, p.params, {.alpha = 0.6, .beta = 0.3, .dropout = 0.0}, kcfg, rng);
  const auto& b = r.breakdown;
  CHECK(std::abs(b.total - (b.l_ds + 0.6 * b.l_mmd + 0.3 * b.l_cmmd)) <= 1e-9);
  const auto fs = oracle::extract(p.xs, p.params), ft = oracle::extract(p.xt, p.params);
  CHECK(b.l_mmd == doctest::Approx(oracle::mmd(fs, ft, b.sigma)).epsilon(1e-10));

  // Same batch and labels on both sides: alignment terms vanish.
  const auto same = total_loss(p.xs, p.ys, p.xs, p.params, {.dropout = 0.0}, kcfg, rng);
  CHECK(same.breakdown.l_mmd <= 1e-12);

  const auto empty = total_loss(p.xs, p.ys, Eigen::MatrixXd(0, 6), p.params, {.dropout = 0.0}, kcfg, rng);
  CHECK(empty.breakdown.target_empty);
  CHECK(empty.breakdown.total == empty.breakdown.l_ds);
  CHECK_THROWS_AS(total_loss(Eigen::MatrixXd(0, 6), {}, p.xt, p.params, {}, kcfg, rng), ValidationError);
}

TEST_CASE("identical domains with identical labels give zero alignment loss") {
  auto p = tiny_problem(41);
  Rng rng(1);
  // Make the source labels equal to the pseudo-labels the model assigns.
  const auto probs = predict_proba(p.xs, p.params);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) probs.row(i).maxCoeff(&p.ys[static_cast<std::size_t>(i)]);
  const auto r = total_loss(p.xs, p.ys, p.xs, p.params, {.dropout = 0.0}, kernel::KernelConfig::median(), rng);
  CHECK(r.breakdown.l_mmd <= 1e-12);
  CHECK(r.breakdown.l_cmmd <= 1e-12);
}

TEST_CASE("backward matches finite differences on the tiny net") {
  const auto kcfg = kernel::KernelConfig::median();
  for (std::uint64_t seed : {101u, 202u, 303u}) {
    const auto p = tiny_problem(seed);
    CAPTURE(seed);
    CHECK(gradient_error(p, {.alpha = 0.7, .beta = 0.4, .dropout = 0.0}, kcfg) <= 1e-4);
    CHECK(gradient_error(p, {.alpha = 0.0, .beta = 0.0, .dropout = 0.0}, kcfg) <= 1e-4);
    CHECK(gradient_error(p, {.alpha = 1.0, .beta = 0.0, .use_cmmd = false, .dropout = 0.0}, kcfg) <= 1e-4);
    CHECK(gradient_error(p, {.alpha = 0.0, .beta = 1.0, .use_mmd = false, .dropout = 0.0}, kcfg) <= 1e-4);
    CHECK(gradient_error(p, {.alpha = 1.0, .beta = 1.0, .dropout = 0.0}, kernel::KernelConfig::fixed(0.5)) <= 1e-4);
  }
}

TEST_CASE("gradient is zero at the loss minimum") {
  ModelParams p = ModelParams::zeros_like(tiny_problem(1).params);
  p.bc << 0.0, 100.0, 0.0;
  Rng rng(1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 6);
  const auto r = total_loss(x, std::vector<int>{1}, x, p, {.alpha = 0.0, .beta = 0.0, .dropout = 0.0},
                            kernel::KernelConfig::median(), rng);
  const auto g = backward(r.trace, p);
  CHECK(oracle::max_relative_error(g, ModelParams::zeros_like(p), 1.0) <= 1e-12);
}

TEST_CASE("duplicating the source batch leaves the gradient unchanged") {
  const auto p = tiny_problem(55);
  Eigen::MatrixXd xs2(10, 6);
  xs2 << p.xs, p.xs;
  std::vector<int> ys2 = p.ys;
  ys2.insert(ys2.end(), p.ys.begin(), p.ys.end());
  // Fixed bandwidth: duplicating rows would move a median-heuristic bandwidth.
  const auto kcfg = kernel::KernelConfig::fixed(1.3);
  const LossSettings s{.alpha = 0.8, .beta = 0.5, .dropout = 0.0};
  Rng rng(1);
  const auto a = total_loss(p.xs, p.ys, p.xt, p.params, s, kcfg, rng);
  const auto b = total_loss(xs2, ys2, p.xt, p.params, s, kcfg, rng);
  CHECK(std::abs(a.breakdown.total - b.breakdown.total) <= 1e-10);
  CHECK(oracle::max_relative_error(backward(a.trace, p.params), backward(b.trace, p.params), 1e-3) <= 1e-10);
}

TEST_CASE("repeated forward/backward is bit-identical") {
  const auto p = tiny_problem(77);
  auto run = [&] {
    Rng rng(5);
    const auto r = total_loss(p.xs, p.ys, p.xt, p.params, {.dropout = 0.0}, kernel::KernelConfig::median(), rng);
    return backward(r.trace, p.params);
  };
  CHECK(run().fingerprint() == run().fingerprint());
}

TEST_CASE("stale traces are rejected") {
  auto p = tiny_problem(88);
  Rng rng(1);
  const auto r = total_loss(p.xs, p.ys, p.xt, p.params, {.dropout = 0.0}, kernel::KernelConfig::median(), rng);
  p.params.w1(0, 0) += 1e-3;
  CHECK_THROWS_AS(backward(r.trace, p.params), std::logic_error);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(12);
  const auto p = ModelParams::init(Architecture{}, rng);
  const auto path = std::filesystem::temp_directory_path() / "sdadda_test_net.ckpt";
  save_checkpoint(p, path);
  const auto q = load_checkpoint(path);
  CHECK(q.fingerprint() == p.fingerprint());
  CHECK(q.w1 == p.w1);
  CHECK(std::filesystem::file_size(path) == 4 + 4 + 4 + 6 * 16 + 24259 * 8);
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "nope";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
}
