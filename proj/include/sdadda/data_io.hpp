#pragma once

#include "sdadda/dataset.hpp"
#include "sdadda/signal_features.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sdadda::io {

// Feature dataset file. Two encodings carry the same content:
//
// Text (.csv):
//   # sdadda-features v1 n_samples=<N> feature_dim=<D> has_labels=<0|1> classes=<C>
//   <D comma-separated reals>[,<label>]      (N lines, values printed with 17 digits)
//
// Binary (.bin, little-endian):
//   "SDAF" u32 version=1 u64 N u64 D u8 has_labels u32 C
//   N rows of D f64, each followed by an i32 label when has_labels
struct FeatureFile {
  Eigen::MatrixXd features;
  std::optional<std::vector<int>> labels;
  int classes = 0;  // 0 when unlabeled and unknown
};

enum class Encoding { text, binary };

FeatureFile read_features(const std::filesystem::path& path);
// Binary when the extension is ".bin" unless overridden.
void write_features(const FeatureFile& file, const std::filesystem::path& path,
                    std::optional<Encoding> encoding = std::nullopt);

// CSV with header "subject,session,path[,role]". Paths are relative to the
// manifest's directory; role is a free-form hint and is ignored by loading.
struct ManifestEntry {
  std::string subject;
  std::string session;
  std::filesystem::path path;
  std::string role;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

// Every file must be labeled and share one feature dimension. Subjects and
// sessions keep manifest order.
SubjectDataset load_dataset(const std::filesystem::path& manifest);

// Writes one feature file per session next to the manifest.
void save_dataset(const SubjectDataset& data, const std::filesystem::path& manifest,
                  Encoding encoding = Encoding::text);

// Raw recording, channels x samples.
// Text: first line "n_channels,fs,n_samples", then one line per channel.
// Binary: "SDAR" u32 version=1 u32 n_channels f64 fs u64 n_samples, then
// row-major f64 samples.
features::RawWindow read_recording(const std::filesystem::path& path);
void write_recording(const features::RawWindow& rec, const std::filesystem::path& path,
                     std::optional<Encoding> encoding = std::nullopt);

// Gaussian classes with a controlled source -> target shift.
//
// Class means sit on a circle of radius class_sep in the plane of the first two
// coordinates. The target moves every class by domain_shift along one random
// unit direction (marginal shift) and additionally rotates class c's mean
// within that plane by rotation_deg * c / (C - 1) (conditional shift).
// Noise is isotropic with standard deviation `noise`.
struct SynthShiftConfig {
  int classes = 3;
  int dim = 16;
  int n_per_class_source = 200;
  int n_per_class_target = 200;
  double class_sep = 3.0;
  double domain_shift = 9.0;
  double rotation_deg = 30.0;
  double noise = 1.0;
  std::uint64_t seed = 3;
};

void validate(const SynthShiftConfig& cfg);

struct SynthShift {
  LabeledSet source;
  UnlabeledSet target;
  std::vector<int> target_labels;  // for evaluation only
};

SynthShift generate_synth_shift(const SynthShiftConfig& cfg);

// Multi-subject variant for the protocol runner: subject 0 is the reference
// domain and each further subject gets its own shift direction and a rotation
// scaled by a per-subject factor in [-1, 1].
SubjectDataset generate_synth_subjects(const SynthShiftConfig& cfg, int subjects, int sessions);

}  // namespace sdadda::io
