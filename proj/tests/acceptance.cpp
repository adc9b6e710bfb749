// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include "oracles.hpp"
#include "sdadda/cli.hpp"
#include "sdadda/config.hpp"
#include "sdadda/data_io.hpp"
#include "sdadda/evaluation.hpp"
#include "sdadda/kernel_stats.hpp"
#include "sdadda/schedules.hpp"
#include "sdadda/signal_features.hpp"
#include "sdadda/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>

using namespace sdadda;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

enum class Status { pass, fail, deviation, skip };

int failures = 0;

void report(int id, Status status, const std::string& detail) {
  const char* tag = status == Status::pass        ? "PASS"
                    : status == Status::fail      ? "FAIL"
                    : status == Status::deviation ? "DEVIATION"
                                                  : "SKIP";
  if (status == Status::fail) ++failures;
  std::printf("%-9s criterion %d: %s\n", tag, id, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Relative error with a 1e-6 floor on the denominator so exact zeros compare
// absolutely.
double rel(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-6); }

void kernel_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20240601);
  std::uniform_int_distribution<Eigen::Index> size(1, 16), dim(1, 8);
  std::uniform_int_distribution<int> label(0, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = size(gen), m = size(gen), d = dim(gen);
    const auto xs = oracle::random_matrix(n, d, gen), xt = oracle::random_matrix(m, d, gen, 1.5);
    std::vector<int> ys(static_cast<std::size_t>(n)), yt(static_cast<std::size_t>(m));
    for (auto& y : ys) y = label(gen);
    for (auto& y : yt) y = label(gen);
    const double sigma = kernel::resolve_sigma(kernel::KernelConfig::median(), xs, xt);
    const auto cfg = kernel::KernelConfig::fixed(sigma);
    worst = std::max(worst, rel(kernel::mmd(xs, xt, cfg), std::max(oracle::mmd(xs, xt, sigma), 0.0)));
    worst = std::max(worst, rel(kernel::cmmd({xs, ys}, {xt, yt}, cfg, 3),
                                std::max(oracle::cmmd(xs, ys, xt, yt, 3, sigma), 0.0)));
  }
  const double secs = seconds_since(t0);
  report(1, worst <= 1e-10 && secs < 5.0 ? Status::pass : Status::fail,
         fmt("mmd/cmmd vs brute force over 200 pairs, max rel err %.2e (<= 1e-10), %.2f s (< 5 s)", worst, secs));
}

void gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(7);
  auto params = net::ModelParams::init({6, 4, 4, 3, 0.0}, rng);
  params.b1.setConstant(0.3);
  params.b2.setConstant(0.2);
  std::mt19937_64 gen(7);
  const auto xs = oracle::random_matrix(5, 6, gen), xt = oracle::random_matrix(5, 6, gen, 1.5);
  const std::vector<int> ys{0, 1, 2, 1, 0};
  struct Case {
    const char* name;
    net::LossSettings settings;
  };
  const Case cases[] = {
      {"total", {.alpha = 0.7, .beta = 0.4, .dropout = 0.0}},
      {"mmd (alpha=1, beta=0)", {.alpha = 1.0, .beta = 0.0, .use_cmmd = false, .dropout = 0.0}},
      {"cmmd (alpha=0, beta=1)", {.alpha = 0.0, .beta = 1.0, .use_mmd = false, .dropout = 0.0}},
  };
  double worst = 0.0;
  std::string parts;
  for (const auto& c : cases) {
    Rng step_rng(1);
    const auto r = net::total_loss(xs, ys, xt, params, c.settings, kernel::KernelConfig::median(), step_rng);
    const auto analytic = net::backward(r.trace, params);
    const oracle::FrozenTarget frozen{r.trace.retained_target_rows, r.trace.retained_pseudo_labels};
    const double a = r.trace.use_mmd ? r.breakdown.alpha : 0.0, b = r.trace.use_cmmd ? r.breakdown.beta : 0.0;
    const auto numeric = oracle::finite_difference(params, [&](const net::ModelParams& q) {
      return oracle::total_loss(q, xs, ys, xt, frozen, a, b, r.breakdown.sigma, 3);
    });
    const double err = oracle::max_relative_error(analytic, numeric);
    worst = std::max(worst, err);
    parts += fmt("%s%s %.1e", parts.empty() ? "" : ", ", c.name, err);
  }
  const double secs = seconds_since(t0);
  report(2, worst <= 1e-4 && secs < 10.0 ? Status::pass : Status::fail,
         fmt("backward vs central differences on 6-4-4 net: %s (<= 1e-4), %.2f s (< 10 s)", parts.c_str(), secs));
}

void schedule_tables() {
  const schedule::ScheduleConfig cfg;
  const bool conf = schedule::confidence_threshold(5, cfg) == 0.0 && schedule::confidence_threshold(20, cfg) == 0.5 &&
                    schedule::confidence_threshold(50, cfg) == 0.75 && schedule::confidence_threshold(90, cfg) == 1.0;
  const bool beta = schedule::beta_of(0.05, cfg) == 1.0 && schedule::beta_of(0.12, cfg) == 0.5 &&
                    schedule::beta_of(0.20, cfg) == 0.0;
  const bool alpha = schedule::alpha_at(0, cfg) == 1.0 && schedule::alpha_at(cfg.total_epochs - 1, cfg) == 0.01;
  report(3, conf && beta && alpha ? Status::pass : Status::fail,
         fmt("confidence_threshold %s, beta_of %s, alpha_at endpoints %s (exact)", conf ? "ok" : "wrong",
             beta ? "ok" : "wrong", alpha ? "ok" : "wrong"));
}

void feature_extraction() {
  Rng rng(4);
  features::RawWindow w{Eigen::MatrixXd(1, 2000), 200.0};
  for (Eigen::Index i = 0; i < w.samples.cols(); ++i) w.samples(0, i) = rng.normal();
  double worst = 0.0;
  for (const auto& band : features::default_bands()) {
    const double v = features::band_variance(w, band, 0);
    const double de = features::build_feature_vector(w, {band}).values(0);
    worst = std::max(worst, std::abs(de - 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * v)));
  }
  const double full = features::differential_entropy(features::band_variance(w, {"full", 0.5, 100.0}, 0));
  features::RawWindow eeg{Eigen::MatrixXd(62, 400), 200.0};
  for (Eigen::Index i = 0; i < eeg.samples.size(); ++i) eeg.samples.data()[i] = rng.normal();
  const auto length = features::build_feature_vector(eeg, features::default_bands()).values.size();
  const bool ok = worst <= 1e-12 && std::abs(full - 1.419) <= 0.05 && length == 310;
  report(4, ok ? Status::pass : Status::fail,
         fmt("per-band DE vs closed form max err %.1e (<= 1e-12), full-band DE %.4f (1.419 +- 0.05), "
             "62 channels -> %lld features (310)",
             worst, full, static_cast<long long>(length)));
}

config::RunConfig synth_config() {
  return config::parse_config(fs::path(SDADDA_SOURCE_DIR) / "configs" / "synth_shift.cfg");
}

void adaptation_gain() {
  const auto t0 = Clock::now();
  const auto base = synth_config();
  auto mean_accuracy = [&](eval::Variant v) {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto cfg = base;
      cfg.train.seed = seed;
      cfg.synth.seed = seed;
      cfg.train.ablation = eval::ablation_for(v);
      const auto task = io::generate_synth_shift(cfg.synth);
      const auto result = trainer::train(task.source, task.target, cfg.synth.classes, cfg.train);
      sum += eval::evaluate(result.params, task.target.features, task.target_labels).accuracy;
    }
    return sum / 5.0;
  };
  const double e1 = mean_accuracy(eval::Variant::exp1);
  const double e2 = mean_accuracy(eval::Variant::exp2);
  const double e6 = mean_accuracy(eval::Variant::exp6);
  const double secs = seconds_since(t0);
  const bool ok = e1 >= 0.60 && e1 <= 0.75 && e6 - e1 >= 0.05 && e2 - e1 >= 0.02 && secs < 300.0;
  report(5, ok ? Status::pass : Status::fail,
         fmt("synthetic shift, 5 seeds: EXP1 %.1f%% (60-75), EXP2 %+.1f pts (>= 2), EXP6 %+.1f pts (>= 5), "
             "%.0f s (< 300 s)",
             100 * e1, 100 * (e2 - e1), 100 * (e6 - e1), secs));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / "sdadda_acceptance_determinism";
  fs::remove_all(dir);
  const std::string cfg = (fs::path(SDADDA_SOURCE_DIR) / "configs" / "synth_shift.cfg").string();
  std::ostringstream out, err;
  const int a = cli::run({"train", "--config", cfg, "--seed", "3", "--out", (dir / "a").string()}, out, err);
  const int b = cli::run({"train", "--config", cfg, "--seed", "3", "--out", (dir / "b").string()}, out, err);
  const auto ca = slurp(dir / "a" / "model.ckpt"), cb = slurp(dir / "b" / "model.ckpt");
  const bool ok = a == 0 && b == 0 && !ca.empty() && ca == cb;
  report(6, ok ? Status::pass : Status::fail,
         fmt("two train runs, seed 3: checkpoints %s (%zu bytes)", ca == cb ? "byte-identical" : "differ", ca.size()));
  fs::remove_all(dir);
}

void efficiency() {
  Rng rng(3);
  const auto params = net::ModelParams::init(net::Architecture{}, rng);
  std::mt19937_64 gen(3);
  const auto batch = oracle::random_matrix(128, 310, gen);
  std::vector<double> times;
  for (int i = 0; i < 50; ++i) {
    const auto t0 = Clock::now();
    const auto p = net::predict_proba(batch, params);
    times.push_back(1e3 * seconds_since(t0));
    if (!p.allFinite()) times.back() = 1e9;
  }
  std::sort(times.begin(), times.end());
  const double median_ms = times[times.size() / 2];
  const long long count = net::parameter_count(net::Architecture{310, 64, 64, 3});
  const long long itemised = 310 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3;
  const std::string detail = fmt("eval forward of 128 x 310 batch %.3f ms median (< 20 ms); parameter_count %lld", median_ms, count);
  if (median_ms >= 20.0 || count != itemised) {
    report(7, Status::fail, detail + fmt(" (itemised sum %lld)", itemised));
  } else if (count != 24131) {
    report(7, Status::deviation,
           detail + " equals the itemised sum 310*64+64 + 64*64+64 + 64*3+3; the stated total 24131 omits the "
                    "hidden-layer biases (see decisions ledger)");
  } else {
    report(7, Status::pass, detail);
  }
}

void seed_features() {
  const char* manifest = std::getenv("SDADDA_SEED_MANIFEST");
  if (manifest == nullptr || *manifest == '\0') {
    report(8, Status::skip, "set SDADDA_SEED_MANIFEST to a manifest of SEED-format DE features to run");
    return;
  }
  try {
    const auto data = io::load_dataset(manifest);
    const auto cfg = config::parse_config_text("");
    auto train_cfg = cfg.train;
    eval::ProtocolOptions opts;
    opts.protocol = eval::Protocol::single_session;
    opts.session = static_cast<std::size_t>(cfg.session - 1);
    opts.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const auto s = eval::run_protocol(data, train_cfg, eval::Variant::exp6, opts);
    report(8, Status::pass,
           fmt("%zu-subject single-session LOSO, EXP6: %s", s.folds.size(), eval::format_mean_std(s.mean, s.stddev).c_str()));
  } catch (const std::exception& e) {
    report(8, Status::fail, std::string("protocol run failed: ") + e.what());
  }
}

}  // namespace

int main() {
  kernel_oracle();
  gradient_check();
  schedule_tables();
  feature_extraction();
  adaptation_gain();
  determinism();
  efficiency();
  seed_features();
  return failures == 0 ? 0 : 1;
}
