#include "sdadda/schedules.hpp"

#include "sdadda/error.hpp"

#include <cmath>
#include <string>

namespace sdadda::schedule {

void validate(const ScheduleConfig& cfg) {
  if (!(cfg.tau_l > 0.0)) throw ValidationError("tau_l must be > 0");
  if (!(cfg.tau_h >= cfg.tau_l)) throw ValidationError("tau_h must be >= tau_l");
  if (!(cfg.rho0 > 0.0)) throw ValidationError("rho0 must be > 0");
  if (!(cfg.rho1 > cfg.rho0)) throw ValidationError("rho1 must be > rho0");
  const auto& e = cfg.stage_epochs;
  if (!(e[0] >= 0 && e[0] < e[1] && e[1] < e[2])) throw ValidationError("stage_epochs must be strictly increasing");
  if (!(cfg.conf1 >= 0.0 && cfg.conf1 <= cfg.conf2 && cfg.conf2 <= 1.0)) {
    throw ValidationError("conf1/conf2 must satisfy 0 <= conf1 <= conf2 <= 1");
  }
  if (cfg.total_epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(cfg.lr_extractor > 0.0)) throw ValidationError("lr_extractor must be > 0");
  if (!(cfg.lr_classifier > 0.0)) throw ValidationError("lr_classifier must be > 0");
}

double alpha_at(int epoch, const ScheduleConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.total_epochs) {
    throw ValidationError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.total_epochs) + ")");
  }
  if (cfg.total_epochs == 1 || epoch == 0) return cfg.tau_h;
  if (epoch == cfg.total_epochs - 1) return cfg.tau_l;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.total_epochs - 1);
  if (cfg.alpha_decay == AlphaDecay::exponential) return cfg.tau_h * std::pow(cfg.tau_l / cfg.tau_h, t);
  return cfg.tau_h - (cfg.tau_h - cfg.tau_l) * t;
}

double beta_of(double source_loss, const ScheduleConfig& cfg) {
  if (source_loss < cfg.rho0) return 1.0;
  if (source_loss < cfg.rho1) return 0.5;
  return 0.0;
}

double confidence_threshold(int epoch, const ScheduleConfig& cfg) {
  const auto& e = cfg.stage_epochs;
  if (epoch < e[0]) return 0.0;
  if (epoch < e[1]) return cfg.conf1;
  if (epoch <= e[2]) return cfg.conf2;
  return 1.0;
}

double learning_rate(int epoch, double base_lr, const ScheduleConfig& cfg) {
  const double p = static_cast<double>(epoch) / static_cast<double>(cfg.total_epochs);
  return base_lr / std::pow(1.0 + 10.0 * p, 0.75);
}

}  // namespace sdadda::schedule
