#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace sdadda::features {

// One time segment of a multichannel recording, channels along rows.
struct RawWindow {
  Eigen::MatrixXd samples;  // [n_channels x n_samples]
  double fs = 0.0;          // Hz

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index length() const { return samples.cols(); }
};

struct BandSpec {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

// delta 1-4, theta 4-8, alpha 8-14, beta 14-31, gamma 31-50 Hz.
std::vector<BandSpec> default_bands();

// Throws ValidationError if the window is empty, shorter than one second or
// holds non-finite samples.
void validate(const RawWindow& window);

// Throws ValidationError unless 0 < lo < hi <= fs/2 for every band and the
// bands are ordered and non-overlapping.
void validate(const std::vector<BandSpec>& bands, double fs);

// Band-limited variance of one channel estimated from a one-second Hann STFT
// without overlap. Each segment is mean-centred before windowing; power is
// normalised so that summing every bin of a segment reproduces its variance.
// Bins with frequency in [lo, hi) contribute; the Nyquist bin is included when
// hi equals fs/2. The result is the average over all full segments.
double band_variance(const RawWindow& window, const BandSpec& band, Eigen::Index channel);

// Differential entropy of a Gaussian with the given variance, in nats.
double differential_entropy(double variance);

struct FeatureOptions {
  // Variances below this are raised to it before the log. Set to 0 to make a
  // silent channel/band an error instead.
  double variance_floor = 1e-12;
};

struct FeatureVector {
  Eigen::VectorXd values;  // channel-major: all bands of channel 0, then channel 1, ...
  Eigen::Index n_channels = 0;
  Eigen::Index n_bands = 0;
  // (channel, band) pairs whose variance was raised to the floor.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> floored;
};

FeatureVector build_feature_vector(const RawWindow& window, const std::vector<BandSpec>& bands,
                                   const FeatureOptions& options = {});

// Splits a long recording into consecutive windows of `window_seconds` and
// returns one feature row per window.
Eigen::MatrixXd extract_windows(const RawWindow& recording, const std::vector<BandSpec>& bands,
                                double window_seconds, const FeatureOptions& options = {});

}  // namespace sdadda::features
