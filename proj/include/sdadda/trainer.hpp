#pragma once

#include "sdadda/dataset.hpp"
#include "sdadda/kernel_stats.hpp"
#include "sdadda/net.hpp"
#include "sdadda/pseudo_labels.hpp"
#include "sdadda/schedules.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace sdadda::trainer {

struct Ablation {
  bool use_mmd = true;
  bool use_cmmd = true;
  bool dynamic_weights = true;   // off: alpha = beta = 1 at every step
  bool confidence_filter = true;  // off: tau = 0, every pseudo-label kept
};

struct TrainConfig {
  int batch_size = 128;
  int epochs = 100;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 3;
  int hidden1 = 64;
  int hidden2 = 64;
  double dropout = 0.25;
  kernel::KernelConfig kernel;
  schedule::ScheduleConfig schedule;  // total_epochs is taken from `epochs`
  Ablation ablation;
};

void validate(const TrainConfig& cfg);

// Momentum buffers, one per parameter tensor.
struct OptimizerState {
  net::ModelParams velocity;

  static OptimizerState zeros_like(const net::ModelParams& params) { return {net::ModelParams::zeros_like(params)}; }
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  net::LossBreakdown loss;
  schedule::ScheduleState schedule;
};

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
// Weight decay applies to weight matrices only. The extractor and classifier
// use their own learning rates.
void sgd_step(net::ModelParams& params, const net::ModelParams& grads, OptimizerState& state, double lr_extractor,
              double lr_classifier, double momentum, double weight_decay);

struct TrainResult {
  net::ModelParams params;
  std::vector<StepRecord> history;
};

// Called after every step; used for progress reporting.
using StepObserver = std::function<void(const StepRecord&)>;

TrainResult train(const LabeledSet& source, const UnlabeledSet& target, int classes, const TrainConfig& cfg,
                  const StepObserver& observer = {});

// CSV: step,epoch,l_ds,l_mmd,l_cmmd,total,alpha,beta,tau,lr_extractor,lr_classifier,n_pseudo_retained,sigma
void write_history_csv(const std::vector<StepRecord>& history, const std::filesystem::path& path);

}  // namespace sdadda::trainer
