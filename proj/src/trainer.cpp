#include "sdadda/trainer.hpp"

#include "sdadda/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

namespace sdadda::trainer {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

// Endless seeded reshuffled pass over [0, n).
class IndexCycle {
 public:
  IndexCycle(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
  }

  std::vector<std::size_t> take(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

}  // namespace

PseudoLabelSet pseudo_labels_from_probs(const Eigen::Ref<const Eigen::MatrixXd>& probs) {
  PseudoLabelSet out;
  out.indices.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = c;
    }
    out.indices.push_back(i);
    out.labels.push_back(static_cast<int>(best));
    out.confidences.push_back(std::clamp(probs(i, best), 0.0, 1.0));
  }
  return out;
}

PseudoLabelSet generate_pseudo_labels(const Eigen::Ref<const Eigen::MatrixXd>& target, const net::ModelParams& params) {
  if (target.rows() == 0) return {};
  return pseudo_labels_from_probs(net::predict_proba(target, params));
}

PseudoLabelSet filter_pseudo_labels(const PseudoLabelSet& set, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("confidence threshold must be in [0, 1]");
  const double cut = tau >= 1.0 ? 1.0 - 1e-9 : tau;
  PseudoLabelSet out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.confidences[i] < cut) continue;
    out.indices.push_back(set.indices[i]);
    out.labels.push_back(set.labels[i]);
    out.confidences.push_back(set.confidences[i]);
  }
  return out;
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw ValidationError("batch_size must be >= 2");
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (cfg.hidden1 < 1 || cfg.hidden2 < 1) throw ValidationError("hidden sizes must be >= 1");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
  if (cfg.kernel.mode == kernel::KernelConfig::SigmaMode::fixed && !(cfg.kernel.sigma > 0.0)) {
    throw ValidationError("kernel_sigma must be > 0");
  }
  auto sched = cfg.schedule;
  sched.total_epochs = cfg.epochs;
  schedule::validate(sched);
}

void sgd_step(net::ModelParams& params, const net::ModelParams& grads, OptimizerState& state, double lr_extractor,
              double lr_classifier, double momentum, double weight_decay) {
  std::vector<std::span<const double>> g;
  grads.for_each([&](std::string_view, std::span<const double> v, bool, bool) { g.push_back(v); });
  std::vector<std::span<double>> vel;
  state.velocity.for_each([&](std::string_view, std::span<double> v, bool, bool) { vel.push_back(v); });

  std::size_t k = 0;
  params.for_each([&](std::string_view name, std::span<double> p, bool is_weight, bool is_classifier) {
    const auto& gk = g[k];
    auto& vk = vel[k];
    ++k;
    if (gk.size() != p.size() || vk.size() != p.size()) {
      throw ValidationError("gradient/optimizer shape mismatch for " + std::string(name));
    }
    const double lr = is_classifier ? lr_classifier : lr_extractor;
    const double decay = is_weight ? weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(gk[i])) throw NumericError("non-finite gradient in " + std::string(name));
      vk[i] = momentum * vk[i] + (gk[i] + decay * p[i]);
      p[i] -= lr * vk[i];
    }
  });
}

TrainResult train(const LabeledSet& source, const UnlabeledSet& target, int classes, const TrainConfig& cfg,
                  const StepObserver& observer) {
  validate(cfg);
  if (classes < 1) throw ValidationError("class count must be >= 1");
  validate(source, classes);
  if (target.size() == 0) throw ValidationError("empty target set");
  if (target.features.cols() != source.features.cols()) {
    throw ValidationError("source dimension " + std::to_string(source.features.cols()) + " != target dimension " +
                          std::to_string(target.features.cols()));
  }

  schedule::ScheduleConfig sched = cfg.schedule;
  sched.total_epochs = cfg.epochs;

  Rng init_rng(splitmix(cfg.seed));
  const net::Architecture arch{static_cast<int>(source.features.cols()), cfg.hidden1, cfg.hidden2, classes,
                               cfg.dropout};
  TrainResult result{net::ModelParams::init(arch, init_rng), {}};
  auto& params = result.params;
  OptimizerState opt = OptimizerState::zeros_like(params);

  Rng source_rng(splitmix(cfg.seed ^ 0x5151ULL));
  Rng dropout_rng(splitmix(cfg.seed ^ 0xD7D7ULL));
  IndexCycle target_cycle(static_cast<std::size_t>(target.size()), splitmix(cfg.seed ^ 0x7A7AULL));

  const auto n_source = static_cast<std::size_t>(source.size());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t target_batch = std::min(batch, static_cast<std::size_t>(target.size()));
  std::vector<std::size_t> order(n_source);
  std::iota(order.begin(), order.end(), std::size_t{0});

  const auto& ab = cfg.ablation;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    source_rng.shuffle(order);
    schedule::ScheduleState state;
    state.epoch = epoch;
    state.alpha = ab.dynamic_weights ? schedule::alpha_at(epoch, sched) : 1.0;
    state.tau = ab.confidence_filter ? schedule::confidence_threshold(epoch, sched) : 0.0;
    state.lr_extractor = schedule::learning_rate(epoch, sched.lr_extractor, sched);
    state.lr_classifier = schedule::learning_rate(epoch, sched.lr_classifier, sched);

    for (std::size_t start = 0; start < n_source; start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, n_source - start));
      const Eigen::MatrixXd xs = gather_rows(source.features, rows);
      std::vector<int> ys(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) ys[i] = source.labels[rows[i]];
      const auto target_rows = target_cycle.take(target_batch);
      const Eigen::MatrixXd xt = gather_rows(target.features, target_rows);

      net::LossSettings settings;
      settings.alpha = state.alpha;
      settings.beta = 1.0;
      settings.tau = state.tau;
      settings.use_mmd = ab.use_mmd;
      settings.use_cmmd = ab.use_cmmd;
      settings.dynamic_beta = ab.dynamic_weights;
      settings.rho0 = sched.rho0;
      settings.rho1 = sched.rho1;
      settings.dropout = cfg.dropout;

      net::LossResult loss;
      net::ModelParams grads;
      try {
        loss = net::total_loss(xs, ys, xt, params, settings, cfg.kernel, dropout_rng);
        grads = net::backward(loss.trace, params);
        sgd_step(params, grads, opt, state.lr_extractor, state.lr_classifier, cfg.momentum, cfg.weight_decay);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + " (epoch " + std::to_string(epoch) + "): " + e.what());
      }

      StepRecord rec;
      rec.step = step++;
      rec.epoch = epoch;
      rec.loss = loss.breakdown;
      rec.schedule = state;
      rec.schedule.beta = loss.breakdown.beta;
      result.history.push_back(rec);
      if (observer) observer(rec);
    }
  }
  return result;
}

void write_history_csv(const std::vector<StepRecord>& history, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write history file: " + path.string());
  os << "step,epoch,l_ds,l_mmd,l_cmmd,total,alpha,beta,tau,lr_extractor,lr_classifier,n_pseudo_retained,sigma\n";
  char buf[512];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n", r.step,
                  r.epoch, r.loss.l_ds, r.loss.l_mmd, r.loss.l_cmmd, r.loss.total, r.loss.alpha, r.loss.beta,
                  r.schedule.tau, r.schedule.lr_extractor, r.schedule.lr_classifier, r.loss.n_pseudo_retained,
                  r.loss.sigma);
    os << buf;
  }
  if (!os) throw IoError("failed writing history file: " + path.string());
}

}  // namespace sdadda::trainer
