#pragma once

#include <array>

namespace sdadda::schedule {

enum class AlphaDecay { linear, exponential };

struct ScheduleConfig {
  // MMD weight endpoints.
  double tau_h = 1.0;
  double tau_l = 0.01;
  AlphaDecay alpha_decay = AlphaDecay::linear;
  // CMMD weight breakpoints on the source classification loss.
  double rho0 = 0.10;
  double rho1 = 0.15;
  // Confidence threshold stages: [0, e1) -> 0, [e1, e2) -> c1, [e2, e3] -> c2, beyond -> 1.
  std::array<int, 3> stage_epochs{10, 40, 85};
  double conf1 = 0.5;
  double conf2 = 0.75;
  int total_epochs = 100;
  // Base learning rates per parameter group.
  double lr_extractor = 0.001;
  double lr_classifier = 0.01;
};

struct ScheduleState {
  int epoch = 0;
  double alpha = 1.0;
  double beta = 1.0;
  double tau = 0.0;
  double lr_extractor = 0.0;
  double lr_classifier = 0.0;
};

// Throws ValidationError naming the offending field.
void validate(const ScheduleConfig& cfg);

// Decays from tau_h at epoch 0 to tau_l at the last epoch.
double alpha_at(int epoch, const ScheduleConfig& cfg);

// 1 below rho0, 0.5 on [rho0, rho1), 0 from rho1 upwards.
double beta_of(double source_loss, const ScheduleConfig& cfg);

double confidence_threshold(int epoch, const ScheduleConfig& cfg);

// base_lr / (1 + 10 p)^0.75 with p = epoch / total_epochs.
double learning_rate(int epoch, double base_lr, const ScheduleConfig& cfg);

}  // namespace sdadda::schedule
