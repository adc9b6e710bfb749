#include "sdadda/signal_features.hpp"

#include "sdadda/error.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

namespace sdadda::features {

std::vector<BandSpec> default_bands() {
  return {{"delta", 1.0, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 14.0}, {"beta", 14.0, 31.0}, {"gamma", 31.0, 50.0}};
}

namespace {

Eigen::Index segment_length(double fs) { return static_cast<Eigen::Index>(std::llround(fs)); }

void check_band(const BandSpec& band, double fs) {
  if (!(band.lo_hz > 0.0) || !(band.hi_hz > band.lo_hz) || band.hi_hz > fs / 2.0) {
    std::ostringstream os;
    os << "invalid band '" << band.name << "' [" << band.lo_hz << ", " << band.hi_hz << ") for fs=" << fs
       << " (need 0 < lo < hi <= " << fs / 2.0 << ")";
    throw ValidationError(os.str());
  }
}

}  // namespace

void validate(const RawWindow& window) {
  if (!(window.fs > 0.0) || !std::isfinite(window.fs)) throw ValidationError("sampling rate must be positive");
  if (window.channels() < 1) throw ValidationError("window has no channels");
  if (window.length() < segment_length(window.fs) || segment_length(window.fs) < 2) {
    std::ostringstream os;
    os << "insufficient data: window has " << window.length() << " samples, one STFT segment needs "
       << segment_length(window.fs);
    throw ValidationError(os.str());
  }
  if (!window.samples.allFinite()) throw ValidationError("window contains non-finite samples");
}

void validate(const std::vector<BandSpec>& bands, double fs) {
  if (bands.empty()) throw ValidationError("no frequency bands given");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    check_band(bands[i], fs);
    if (i > 0 && bands[i].lo_hz < bands[i - 1].hi_hz) {
      throw ValidationError("bands '" + bands[i - 1].name + "' and '" + bands[i].name +
                            "' overlap or are out of order");
    }
  }
}

double band_variance(const RawWindow& window, const BandSpec& band, Eigen::Index channel) {
  if (!(window.fs > 0.0)) throw ValidationError("sampling rate must be positive");
  if (channel < 0 || channel >= window.channels()) {
    throw ValidationError("channel " + std::to_string(channel) + " out of range");
  }
  check_band(band, window.fs);
  const Eigen::Index n = segment_length(window.fs);
  if (n < 2 || window.length() < n) {
    throw ValidationError("insufficient data: window shorter than one STFT segment");
  }

  // Periodic Hann.
  std::vector<double> taper(static_cast<std::size_t>(n));
  double taper_energy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
    taper[static_cast<std::size_t>(i)] = w;
    taper_energy += w * w;
  }

  const Eigen::Index half = n / 2;
  const bool even = n % 2 == 0;
  const double bin_hz = window.fs / static_cast<double>(n);
  const bool include_nyquist = band.hi_hz >= window.fs / 2.0;

  Eigen::FFT<double> fft;
  std::vector<double> segment(static_cast<std::size_t>(n));
  std::vector<std::complex<double>> spectrum;
  const Eigen::Index n_segments = window.length() / n;
  double total = 0.0;
  for (Eigen::Index s = 0; s < n_segments; ++s) {
    const auto row = window.samples.row(channel).segment(s * n, n);
    const double mean = row.mean();
    for (Eigen::Index i = 0; i < n; ++i) {
      segment[static_cast<std::size_t>(i)] = (row(i) - mean) * taper[static_cast<std::size_t>(i)];
    }
    fft.fwd(spectrum, segment);
    double power = 0.0;
    for (Eigen::Index k = 0; k <= half; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const bool nyquist = even && k == half;
      const bool in_band = (f >= band.lo_hz && f < band.hi_hz) || (nyquist && include_nyquist && f >= band.lo_hz);
      if (!in_band) continue;
      const double p = std::norm(spectrum[static_cast<std::size_t>(k)]);
      power += (k == 0 || nyquist) ? p : 2.0 * p;
    }
    total += power / (static_cast<double>(n) * taper_energy);
  }
  return total / static_cast<double>(n_segments);
}

double differential_entropy(double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw DomainError("differential entropy needs a positive finite variance, got " + std::to_string(variance));
  }
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance);
}

FeatureVector build_feature_vector(const RawWindow& window, const std::vector<BandSpec>& bands,
                                   const FeatureOptions& options) {
  validate(window);
  validate(bands, window.fs);
  FeatureVector out;
  out.n_channels = window.channels();
  out.n_bands = static_cast<Eigen::Index>(bands.size());
  out.values.resize(out.n_channels * out.n_bands);
  for (Eigen::Index c = 0; c < out.n_channels; ++c) {
    for (Eigen::Index b = 0; b < out.n_bands; ++b) {
      double v = band_variance(window, bands[static_cast<std::size_t>(b)], c);
      if (v < options.variance_floor) {
        v = options.variance_floor;
        out.floored.emplace_back(c, b);
      }
      try {
        out.values(c * out.n_bands + b) = differential_entropy(v);
      } catch (const DomainError& e) {
        throw DomainError("channel " + std::to_string(c) + ", band '" + bands[static_cast<std::size_t>(b)].name +
                          "': " + e.what());
      }
    }
  }
  return out;
}

Eigen::MatrixXd extract_windows(const RawWindow& recording, const std::vector<BandSpec>& bands, double window_seconds,
                                const FeatureOptions& options) {
  validate(recording);
  const auto len = static_cast<Eigen::Index>(std::llround(window_seconds * recording.fs));
  if (len < segment_length(recording.fs)) throw ValidationError("feature window shorter than one second");
  const Eigen::Index count = recording.length() / len;
  if (count < 1) throw ValidationError("recording shorter than one feature window");
  Eigen::MatrixXd rows(count, recording.channels() * static_cast<Eigen::Index>(bands.size()));
  for (Eigen::Index w = 0; w < count; ++w) {
    RawWindow win{recording.samples.middleCols(w * len, len), recording.fs};
    rows.row(w) = build_feature_vector(win, bands, options).values.transpose();
  }
  return rows;
}

}  // namespace sdadda::features
