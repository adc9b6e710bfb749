#include "sdadda/net.hpp"

#include "sdadda/error.hpp"
#include "sdadda/pseudo_labels.hpp"
#include "sdadda/schedules.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace sdadda::net {

namespace {

constexpr double kLogFloor = 1e-12;

Eigen::MatrixXd glorot(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Eigen::MatrixXd w(fan_in, fan_out);
  // Row-major fill order so the draw sequence is independent of storage order.
  for (int i = 0; i < fan_in; ++i) {
    for (int j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-limit, limit);
  }
  return w;
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

Eigen::MatrixXd relu_grad(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& upstream) {
  return (pre.array() > 0.0).select(upstream, 0.0);
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = rng.uniform() < p ? 0.0 : keep_scale;
  }
  return mask;
}

void check_finite(const Eigen::MatrixXd& m, const char* layer) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite activations in layer ") + layer);
}

Eigen::MatrixXd gather_rows(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

ModelParams ModelParams::init(const Architecture& arch, Rng& rng) {
  if (arch.input_dim < 1 || arch.hidden1 < 1 || arch.hidden2 < 1 || arch.classes < 1) {
    throw ValidationError("architecture dimensions must be >= 1");
  }
  if (!(arch.dropout >= 0.0 && arch.dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
  ModelParams p;
  p.w1 = glorot(arch.input_dim, arch.hidden1, rng);
  p.b1 = Eigen::VectorXd::Zero(arch.hidden1);
  p.w2 = glorot(arch.hidden1, arch.hidden2, rng);
  p.b2 = Eigen::VectorXd::Zero(arch.hidden2);
  p.wc = glorot(arch.hidden2, arch.classes, rng);
  p.bc = Eigen::VectorXd::Zero(arch.classes);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p;
  p.w1 = Eigen::MatrixXd::Zero(other.w1.rows(), other.w1.cols());
  p.b1 = Eigen::VectorXd::Zero(other.b1.size());
  p.w2 = Eigen::MatrixXd::Zero(other.w2.rows(), other.w2.cols());
  p.b2 = Eigen::VectorXd::Zero(other.b2.size());
  p.wc = Eigen::MatrixXd::Zero(other.wc.rows(), other.wc.cols());
  p.bc = Eigen::VectorXd::Zero(other.bc.size());
  return p;
}

std::uint64_t ModelParams::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for_each([&](std::string_view, std::span<const double> values, bool, bool) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    for (std::size_t i = 0; i < values.size_bytes(); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  });
  return h;
}

long long parameter_count(const ModelParams& params) {
  long long n = 0;
  params.for_each([&](std::string_view, std::span<const double> v, bool, bool) { n += static_cast<long long>(v.size()); });
  return n;
}

long long parameter_count(const Architecture& a) {
  const long long in = a.input_dim, h1 = a.hidden1, h2 = a.hidden2, c = a.classes;
  return in * h1 + h1 + h1 * h2 + h2 + h2 * c + c;
}

void validate(const ModelParams& p) {
  const bool ok = p.b1.size() == p.w1.cols() && p.w2.rows() == p.w1.cols() && p.b2.size() == p.w2.cols() &&
                  p.wc.rows() == p.w2.cols() && p.bc.size() == p.wc.cols() && p.w1.size() > 0 && p.wc.size() > 0;
  if (!ok) throw ValidationError("model parameter shapes are inconsistent");
}

ForwardTrace forward_features(const Eigen::Ref<const Eigen::MatrixXd>& x, const ModelParams& params, Mode mode,
                              Rng& rng, double dropout) {
  if (x.cols() != params.w1.rows()) {
    throw ValidationError("input dimension " + std::to_string(x.cols()) + " does not match model input " +
                          std::to_string(params.w1.rows()));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
  const bool drop = mode == Mode::train && dropout > 0.0;
  ForwardTrace t;
  t.params_fingerprint = params.fingerprint();
  t.input = x;
  t.pre1 = (x * params.w1).rowwise() + params.b1.transpose();
  check_finite(t.pre1, "fc1");
  t.drop1 = relu(t.pre1);
  if (drop) {
    t.mask1 = dropout_mask(t.drop1.rows(), t.drop1.cols(), dropout, rng);
    t.drop1 = t.drop1.cwiseProduct(t.mask1);
  }
  t.pre2 = (t.drop1 * params.w2).rowwise() + params.b2.transpose();
  check_finite(t.pre2, "fc2");
  t.features = relu(t.pre2);
  if (drop) {
    t.mask2 = dropout_mask(t.features.rows(), t.features.cols(), dropout, rng);
    t.features = t.features.cwiseProduct(t.mask2);
  }
  return t;
}

Eigen::MatrixXd logits(const Eigen::Ref<const Eigen::MatrixXd>& features, const ModelParams& params) {
  if (features.cols() != params.wc.rows()) {
    throw ValidationError("feature dimension " + std::to_string(features.cols()) + " does not match classifier input " +
                          std::to_string(params.wc.rows()));
  }
  Eigen::MatrixXd z = (features * params.wc).rowwise() + params.bc.transpose();
  check_finite(z, "classifier");
  return z;
}

Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& z) {
  Eigen::MatrixXd p = z.colwise() - z.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

Eigen::MatrixXd forward_logits(const Eigen::Ref<const Eigen::MatrixXd>& features, const ModelParams& params) {
  return softmax_rows(logits(features, params));
}

double cross_entropy(const Eigen::Ref<const Eigen::MatrixXd>& probs, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw ValidationError("label count does not match probability rows");
  }
  if (probs.rows() == 0) throw ValidationError("cross entropy of an empty batch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probs.cols()) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, " + std::to_string(probs.cols()) + ")");
    }
    sum += std::log(std::max(probs(i, y), kLogFloor));
  }
  return -sum / static_cast<double>(probs.rows());
}

Eigen::MatrixXd predict_proba(const Eigen::Ref<const Eigen::MatrixXd>& x, const ModelParams& params) {
  Rng unused(0);
  return forward_logits(forward_features(x, params, Mode::eval, unused).features, params);
}

LossResult total_loss(const Eigen::Ref<const Eigen::MatrixXd>& source, std::span<const int> source_labels,
                      const Eigen::Ref<const Eigen::MatrixXd>& target, const ModelParams& params,
                      const LossSettings& settings, const kernel::KernelConfig& kernel_cfg, Rng& rng) {
  if (source.rows() == 0) throw ValidationError("empty source batch");
  if (target.rows() > 0 && target.cols() != source.cols()) {
    throw ValidationError("source and target feature dimensions differ");
  }
  const Eigen::Index ns = source.rows();
  const Eigen::Index nt = target.rows();

  Eigen::MatrixXd pooled(ns + nt, source.cols());
  pooled.topRows(ns) = source;
  if (nt > 0) pooled.bottomRows(nt) = target;

  LossResult r;
  LossTrace& t = r.trace;
  LossBreakdown& b = r.breakdown;
  t.forward = forward_features(pooled, params, Mode::train, rng, settings.dropout);
  t.n_source = ns;
  t.source_labels.assign(source_labels.begin(), source_labels.end());
  t.source_probs = forward_logits(t.forward.features.topRows(ns), params);
  b.l_ds = cross_entropy(t.source_probs, source_labels);

  b.alpha = settings.alpha;
  b.beta = settings.dynamic_beta ? schedule::beta_of(b.l_ds, {.rho0 = settings.rho0, .rho1 = settings.rho1})
                                 : settings.beta;
  b.target_empty = nt == 0;
  t.use_mmd = settings.use_mmd && nt > 0;
  t.use_cmmd = settings.use_cmmd && nt > 0;

  t.alignment_grad = Eigen::MatrixXd::Zero(t.forward.features.rows(), t.forward.features.cols());
  if (t.use_mmd || t.use_cmmd) {
    const auto fs = t.forward.features.topRows(ns);
    const auto ft = t.forward.features.bottomRows(nt);
    b.sigma = kernel::resolve_sigma(kernel_cfg, fs, ft);
    if (t.use_mmd) {
      const auto d = kernel::mmd_with_gradient(fs, ft, b.sigma);
      b.mmd_raw = d.raw;
      b.l_mmd = d.value;
      t.alignment_grad.topRows(ns) += b.alpha * d.grad_source;
      t.alignment_grad.bottomRows(nt) += b.alpha * d.grad_target;
    }
    if (t.use_cmmd) {
      const auto kept = trainer::filter_pseudo_labels(trainer::generate_pseudo_labels(target, params), settings.tau);
      t.retained_target_rows = kept.indices;
      t.retained_pseudo_labels = kept.labels;
      b.n_pseudo_retained = static_cast<int>(kept.size());
      if (!kept.indices.empty()) {
        const Eigen::MatrixXd ft_kept = gather_rows(ft, kept.indices);
        const auto d = kernel::cmmd_with_gradient(fs, source_labels, ft_kept, kept.labels, params.classes(), b.sigma);
        b.cmmd_raw = d.raw;
        b.l_cmmd = d.value;
        t.alignment_grad.topRows(ns) += b.beta * d.grad_source;
        for (std::size_t i = 0; i < kept.indices.size(); ++i) {
          t.alignment_grad.row(ns + kept.indices[i]) += b.beta * d.grad_target.row(static_cast<Eigen::Index>(i));
        }
      }
    }
  }
  b.total = b.l_ds + b.alpha * b.l_mmd + b.beta * b.l_cmmd;
  if (!std::isfinite(b.total)) throw NumericError("non-finite total loss");
  t.breakdown = b;
  return r;
}

ModelParams backward(const LossTrace& t, const ModelParams& params) {
  if (params.fingerprint() != t.forward.params_fingerprint) {
    throw std::logic_error("stale trace: parameters changed since the forward pass");
  }
  const Eigen::Index ns = t.n_source;
  const Eigen::MatrixXd& feats = t.forward.features;
  ModelParams g = ModelParams::zeros_like(params);

  // Cross-entropy through the softmax; clamped log terms are constant.
  Eigen::MatrixXd dz = t.source_probs;
  for (Eigen::Index i = 0; i < ns; ++i) {
    const int y = t.source_labels[static_cast<std::size_t>(i)];
    if (t.source_probs(i, y) < kLogFloor) {
      dz.row(i).setZero();
    } else {
      dz(i, y) -= 1.0;
    }
  }
  dz /= static_cast<double>(ns);
  g.wc = feats.topRows(ns).transpose() * dz;
  g.bc = dz.colwise().sum().transpose();

  Eigen::MatrixXd dfeat = Eigen::MatrixXd::Zero(feats.rows(), feats.cols());
  dfeat.topRows(ns) = dz * params.wc.transpose();

  if (t.alignment_grad.size() > 0) dfeat += t.alignment_grad;

  Eigen::MatrixXd dh2 = t.forward.mask2.size() > 0 ? Eigen::MatrixXd(dfeat.cwiseProduct(t.forward.mask2)) : dfeat;
  const Eigen::MatrixXd dpre2 = relu_grad(t.forward.pre2, dh2);
  g.w2 = t.forward.drop1.transpose() * dpre2;
  g.b2 = dpre2.colwise().sum().transpose();
  Eigen::MatrixXd dd1 = dpre2 * params.w2.transpose();
  if (t.forward.mask1.size() > 0) dd1 = dd1.cwiseProduct(t.forward.mask1);
  const Eigen::MatrixXd dpre1 = relu_grad(t.forward.pre1, dd1);
  g.w1 = t.forward.input.transpose() * dpre1;
  g.b1 = dpre1.colwise().sum().transpose();
  return g;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write("SDAM", 4);
  write_le<std::uint32_t>(os, 1);
  write_le<std::uint32_t>(os, 6);
  auto put = [&](const Eigen::MatrixXd& m) {
    write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) write_le<double>(os, m(i, j));
    }
  };
  // Biases are stored as 1 x n rows.
  put(params.w1);
  put(params.b1.transpose());
  put(params.w2);
  put(params.b2.transpose());
  put(params.wc);
  put(params.bc.transpose());
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "SDAM") throw IoError("not a checkpoint file: " + path.string());
  if (read_le<std::uint32_t>(is) != 1) throw IoError("unsupported checkpoint version");
  if (read_le<std::uint32_t>(is) != 6) throw IoError("unexpected tensor count in checkpoint");
  auto get = [&]() {
    const auto rows = read_le<std::uint64_t>(is);
    const auto cols = read_le<std::uint64_t>(is);
    if (rows > (1u << 24) || cols > (1u << 24)) throw IoError("implausible tensor shape in checkpoint");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_le<double>(is);
    }
    return m;
  };
  auto get_bias = [&]() -> Eigen::VectorXd {
    const Eigen::MatrixXd m = get();
    if (m.rows() != 1) throw IoError("bias tensor in checkpoint is not a single row");
    return m.transpose();
  };
  ModelParams p;
  p.w1 = get();
  p.b1 = get_bias();
  p.w2 = get();
  p.b2 = get_bias();
  p.wc = get();
  p.bc = get_bias();
  validate(p);
  return p;
}

}  // namespace sdadda::net
