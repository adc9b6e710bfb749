#include "sdadda/config.hpp"

#include "sdadda/error.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace sdadda::config {

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ValidationError("config key '" + key + "': expected a number, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw ValidationError("config key '" + key + "': expected an integer, got '" + v + "'");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ValidationError("config key '" + key + "' out of range: " + what);
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
  using K = kernel::KernelConfig::SigmaMode;
  static const std::vector<Key> table = {
      {"batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = static_cast<int>(to_int("batch_size", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = static_cast<int>(to_int("epochs", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = to_double("momentum", v); },
       [](const RunConfig& c) { return num(c.train.momentum); }},
      {"weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = to_double("weight_decay", v); },
       [](const RunConfig& c) { return num(c.train.weight_decay); }},
      {"seed",
       [](RunConfig& c, const std::string& v) {
         const long long s = to_int("seed", v);
         require(s >= 0, "seed", "must be >= 0");
         c.train.seed = static_cast<std::uint64_t>(s);
       },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"hidden1", [](RunConfig& c, const std::string& v) { c.train.hidden1 = static_cast<int>(to_int("hidden1", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.hidden1); }},
      {"hidden2", [](RunConfig& c, const std::string& v) { c.train.hidden2 = static_cast<int>(to_int("hidden2", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.hidden2); }},
      {"dropout", [](RunConfig& c, const std::string& v) { c.train.dropout = to_double("dropout", v); },
       [](const RunConfig& c) { return num(c.train.dropout); }},
      {"kernel_sigma_mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "median") c.train.kernel.mode = K::median_heuristic;
         else if (v == "fixed") c.train.kernel.mode = K::fixed;
         else throw ValidationError("config key 'kernel_sigma_mode': expected median or fixed, got '" + v + "'");
       },
       [](const RunConfig& c) { return std::string(c.train.kernel.mode == K::fixed ? "fixed" : "median"); }},
      {"kernel_sigma", [](RunConfig& c, const std::string& v) { c.train.kernel.sigma = to_double("kernel_sigma", v); },
       [](const RunConfig& c) { return num(c.train.kernel.sigma); }},
      {"tau_h", [](RunConfig& c, const std::string& v) { c.train.schedule.tau_h = to_double("tau_h", v); },
       [](const RunConfig& c) { return num(c.train.schedule.tau_h); }},
      {"tau_l", [](RunConfig& c, const std::string& v) { c.train.schedule.tau_l = to_double("tau_l", v); },
       [](const RunConfig& c) { return num(c.train.schedule.tau_l); }},
      {"alpha_decay",
       [](RunConfig& c, const std::string& v) {
         if (v == "linear") c.train.schedule.alpha_decay = schedule::AlphaDecay::linear;
         else if (v == "exponential") c.train.schedule.alpha_decay = schedule::AlphaDecay::exponential;
         else throw ValidationError("config key 'alpha_decay': expected linear or exponential, got '" + v + "'");
       },
       [](const RunConfig& c) {
         return std::string(c.train.schedule.alpha_decay == schedule::AlphaDecay::linear ? "linear" : "exponential");
       }},
      {"rho0", [](RunConfig& c, const std::string& v) { c.train.schedule.rho0 = to_double("rho0", v); },
       [](const RunConfig& c) { return num(c.train.schedule.rho0); }},
      {"rho1", [](RunConfig& c, const std::string& v) { c.train.schedule.rho1 = to_double("rho1", v); },
       [](const RunConfig& c) { return num(c.train.schedule.rho1); }},
      {"stage1_epoch", [](RunConfig& c, const std::string& v) { c.train.schedule.stage_epochs[0] = static_cast<int>(to_int("stage1_epoch", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.schedule.stage_epochs[0]); }},
      {"stage2_epoch", [](RunConfig& c, const std::string& v) { c.train.schedule.stage_epochs[1] = static_cast<int>(to_int("stage2_epoch", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.schedule.stage_epochs[1]); }},
      {"stage3_epoch", [](RunConfig& c, const std::string& v) { c.train.schedule.stage_epochs[2] = static_cast<int>(to_int("stage3_epoch", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.schedule.stage_epochs[2]); }},
      {"conf1", [](RunConfig& c, const std::string& v) { c.train.schedule.conf1 = to_double("conf1", v); },
       [](const RunConfig& c) { return num(c.train.schedule.conf1); }},
      {"conf2", [](RunConfig& c, const std::string& v) { c.train.schedule.conf2 = to_double("conf2", v); },
       [](const RunConfig& c) { return num(c.train.schedule.conf2); }},
      {"lr_extractor", [](RunConfig& c, const std::string& v) { c.train.schedule.lr_extractor = to_double("lr_extractor", v); },
       [](const RunConfig& c) { return num(c.train.schedule.lr_extractor); }},
      {"lr_classifier", [](RunConfig& c, const std::string& v) { c.train.schedule.lr_classifier = to_double("lr_classifier", v); },
       [](const RunConfig& c) { return num(c.train.schedule.lr_classifier); }},
      {"variant",
       [](RunConfig& c, const std::string& v) {
         c.variant = eval::parse_variant(v);
         c.train.ablation = eval::ablation_for(c.variant);
       },
       [](const RunConfig& c) { return eval::to_string(c.variant); }},
      {"protocol", [](RunConfig& c, const std::string& v) { c.protocol = eval::parse_protocol(v); },
       [](const RunConfig& c) { return eval::to_string(c.protocol); }},
      {"session", [](RunConfig& c, const std::string& v) { c.session = static_cast<int>(to_int("session", v)); },
       [](const RunConfig& c) { return std::to_string(c.session); }},
      {"jobs", [](RunConfig& c, const std::string& v) { c.jobs = static_cast<int>(to_int("jobs", v)); },
       [](const RunConfig& c) { return std::to_string(c.jobs); }},
      {"synth_classes", [](RunConfig& c, const std::string& v) { c.synth.classes = static_cast<int>(to_int("synth_classes", v)); },
       [](const RunConfig& c) { return std::to_string(c.synth.classes); }},
      {"synth_dim", [](RunConfig& c, const std::string& v) { c.synth.dim = static_cast<int>(to_int("synth_dim", v)); },
       [](const RunConfig& c) { return std::to_string(c.synth.dim); }},
      {"synth_n_per_class_source", [](RunConfig& c, const std::string& v) { c.synth.n_per_class_source = static_cast<int>(to_int("synth_n_per_class_source", v)); },
       [](const RunConfig& c) { return std::to_string(c.synth.n_per_class_source); }},
      {"synth_n_per_class_target", [](RunConfig& c, const std::string& v) { c.synth.n_per_class_target = static_cast<int>(to_int("synth_n_per_class_target", v)); },
       [](const RunConfig& c) { return std::to_string(c.synth.n_per_class_target); }},
      {"synth_class_sep", [](RunConfig& c, const std::string& v) { c.synth.class_sep = to_double("synth_class_sep", v); },
       [](const RunConfig& c) { return num(c.synth.class_sep); }},
      {"synth_domain_shift", [](RunConfig& c, const std::string& v) { c.synth.domain_shift = to_double("synth_domain_shift", v); },
       [](const RunConfig& c) { return num(c.synth.domain_shift); }},
      {"synth_rotation_deg", [](RunConfig& c, const std::string& v) { c.synth.rotation_deg = to_double("synth_rotation_deg", v); },
       [](const RunConfig& c) { return num(c.synth.rotation_deg); }},
      {"synth_noise", [](RunConfig& c, const std::string& v) { c.synth.noise = to_double("synth_noise", v); },
       [](const RunConfig& c) { return num(c.synth.noise); }},
      {"synth_seed",
       [](RunConfig& c, const std::string& v) {
         const long long s = to_int("synth_seed", v);
         require(s >= 0, "synth_seed", "must be >= 0");
         c.synth.seed = static_cast<std::uint64_t>(s);
       },
       [](const RunConfig& c) { return std::to_string(c.synth.seed); }},
      {"synth_subjects", [](RunConfig& c, const std::string& v) { c.synth_subjects = static_cast<int>(to_int("synth_subjects", v)); },
       [](const RunConfig& c) { return std::to_string(c.synth_subjects); }},
      {"synth_sessions", [](RunConfig& c, const std::string& v) { c.synth_sessions = static_cast<int>(to_int("synth_sessions", v)); },
       [](const RunConfig& c) { return std::to_string(c.synth_sessions); }},
  };
  return table;
}

void apply_preset(RunConfig& c, const std::string& v) {
  if (v == "paper-setup") {
    c.train.batch_size = 32;
    c.train.epochs = 10;
  } else if (v == "default") {
    c.train.batch_size = 128;
    c.train.epochs = 100;
  } else {
    throw ValidationError("config key 'preset': expected default or paper-setup, got '" + v + "'");
  }
}

}  // namespace

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "preset") return apply_preset(cfg, value);
  for (const auto& k : keys()) {
    if (k.name == key) return k.set(cfg, value);
  }
  throw ValidationError("unknown config key '" + key + "'");
}

void validate(const RunConfig& c) {
  const auto& t = c.train;
  require(t.batch_size >= 2, "batch_size", "must be >= 2");
  require(t.epochs >= 1, "epochs", "must be >= 1");
  require(t.momentum >= 0.0 && t.momentum < 1.0, "momentum", "must be in [0, 1)");
  require(t.weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(t.hidden1 >= 1, "hidden1", "must be >= 1");
  require(t.hidden2 >= 1, "hidden2", "must be >= 1");
  require(t.dropout >= 0.0 && t.dropout < 1.0, "dropout", "must be in [0, 1)");
  require(t.kernel.sigma > 0.0, "kernel_sigma", "must be > 0");
  const auto& s = t.schedule;
  require(s.tau_l > 0.0, "tau_l", "must be > 0");
  require(s.tau_h >= s.tau_l, "tau_h", "must be >= tau_l");
  require(s.rho0 > 0.0, "rho0", "must be > 0");
  require(s.rho1 > s.rho0, "rho1", "must be > rho0");
  require(s.stage_epochs[0] >= 0, "stage1_epoch", "must be >= 0");
  require(s.stage_epochs[1] > s.stage_epochs[0], "stage2_epoch", "must be > stage1_epoch");
  require(s.stage_epochs[2] > s.stage_epochs[1], "stage3_epoch", "must be > stage2_epoch");
  require(s.conf1 >= 0.0 && s.conf1 <= 1.0, "conf1", "must be in [0, 1]");
  require(s.conf2 >= s.conf1 && s.conf2 <= 1.0, "conf2", "must be in [conf1, 1]");
  require(s.lr_extractor > 0.0, "lr_extractor", "must be > 0");
  require(s.lr_classifier > 0.0, "lr_classifier", "must be > 0");
  require(c.session >= 1, "session", "must be >= 1");
  require(c.jobs >= 1, "jobs", "must be >= 1");
  require(c.synth_subjects >= 2, "synth_subjects", "must be >= 2");
  require(c.synth_sessions >= 1, "synth_sessions", "must be >= 1");
  io::validate(c.synth);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.train.ablation = eval::ablation_for(cfg.variant);
  std::map<std::string, std::string> values;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash_pos = line.find('#'); hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!values.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  if (auto it = values.find("preset"); it != values.end()) {
    apply_preset(cfg, it->second);
    values.erase(it);
  }
  for (const auto& [k, v] : values) set_value(cfg, k, v);
  validate(cfg);
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::string hash(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_text(cfg)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sdadda::config
