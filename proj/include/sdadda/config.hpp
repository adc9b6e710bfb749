#pragma once

#include "sdadda/data_io.hpp"
#include "sdadda/evaluation.hpp"
#include "sdadda/trainer.hpp"

#include <filesystem>
#include <string>

namespace sdadda::config {

// Everything needed to reproduce a run.
struct RunConfig {
  trainer::TrainConfig train;
  eval::Variant variant = eval::Variant::exp6;
  eval::Protocol protocol = eval::Protocol::single_session;
  int session = 1;  // 1-based session for the single-session protocol
  int jobs = 1;
  io::SynthShiftConfig synth;
  int synth_subjects = 5;
  int synth_sessions = 1;
};

// Key-value text format, one "key = value" per line, '#' starts a comment.
// Absent keys keep their defaults; unknown keys and out-of-range values throw
// ValidationError naming the key. "preset = paper-setup" selects batch 32 and
// 10 epochs, "preset = default" batch 128 and 100 epochs; other keys override
// the preset regardless of order.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");

// Applies one key. Throws ValidationError for unknown keys or bad values.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Checks cross-field invariants. Throws ValidationError.
void validate(const RunConfig& cfg);

// Every key with its value, in a fixed order. parse_config_text(to_text(c))
// reproduces c.
std::string to_text(const RunConfig& cfg);

// FNV-1a of to_text(), as 16 hex digits.
std::string hash(const RunConfig& cfg);

}  // namespace sdadda::config
