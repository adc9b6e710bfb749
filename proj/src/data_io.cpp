#include "sdadda/data_io.hpp"

#include "sdadda/error.hpp"
#include "sdadda/rng.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace sdadda::io {

namespace fs = std::filesystem;

namespace {

template <typename T>
void put(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is, const fs::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("truncated file: " + path.string());
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

bool has_magic(const fs::path& path, const char* magic) {
  std::ifstream is(path, std::ios::binary);
  char buf[4] = {};
  return is.read(buf, 4) && std::memcmp(buf, magic, 4) == 0;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  // strtod rather than stod: subnormal values set ERANGE but parse exactly.
  const std::string t = trim(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  const bool overflow = errno == ERANGE && std::isinf(v);
  if (t.empty() || end != t.c_str() + t.size() || overflow) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& s, const fs::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(trim(s), &used);
    if (used != trim(s).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": bad integer '" + s + "'");
  }
}

FeatureFile read_features_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open feature file: " + path.string());
  std::string line;
  if (!std::getline(is, line) || !line.starts_with("# sdadda-features v1")) {
    throw IoError(path.string() + ": missing '# sdadda-features v1' header");
  }
  std::map<std::string, long long> header;
  std::istringstream hs(line.substr(20));
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw IoError(path.string() + ": malformed header field '" + tok + "'");
    header[tok.substr(0, eq)] = parse_int(tok.substr(eq + 1), path, 1);
  }
  for (const char* key : {"n_samples", "feature_dim", "has_labels", "classes"}) {
    if (!header.contains(key)) throw IoError(path.string() + ": header lacks " + key);
  }
  const long long n = header["n_samples"], d = header["feature_dim"];
  const bool labeled = header["has_labels"] != 0;
  if (n < 0 || d < 1) throw IoError(path.string() + ": bad header dimensions");

  FeatureFile f;
  f.classes = static_cast<int>(header["classes"]);
  f.features.resize(n, d);
  if (labeled) f.labels.emplace();
  std::size_t lineno = 1;
  long long row = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (row >= n) throw IoError(path.string() + ": more rows than n_samples=" + std::to_string(n));
    const auto fields = split(line, ',');
    if (static_cast<long long>(fields.size()) != d + (labeled ? 1 : 0)) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(d + (labeled ? 1 : 0)) + " fields, got " + std::to_string(fields.size()));
    }
    for (long long k = 0; k < d; ++k) f.features(row, k) = parse_double(fields[static_cast<std::size_t>(k)], path, lineno);
    if (labeled) f.labels->push_back(static_cast<int>(parse_int(fields.back(), path, lineno)));
    ++row;
  }
  if (row != n) {
    throw IoError(path.string() + ": header says " + std::to_string(n) + " rows, found " + std::to_string(row));
  }
  return f;
}

FeatureFile read_features_binary(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature file: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (get<std::uint32_t>(is, path) != 1) throw IoError(path.string() + ": unsupported feature file version");
  const auto n = get<std::uint64_t>(is, path);
  const auto d = get<std::uint64_t>(is, path);
  const bool labeled = get<std::uint8_t>(is, path) != 0;
  FeatureFile f;
  f.classes = static_cast<int>(get<std::uint32_t>(is, path));
  if (d < 1 || d > (1u << 24) || n > (1ull << 32)) throw IoError(path.string() + ": bad header dimensions");
  f.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  if (labeled) f.labels.emplace();
  for (Eigen::Index i = 0; i < f.features.rows(); ++i) {
    for (Eigen::Index k = 0; k < f.features.cols(); ++k) f.features(i, k) = get<double>(is, path);
    if (labeled) f.labels->push_back(get<std::int32_t>(is, path));
  }
  return f;
}

void check_labels(const FeatureFile& f, const fs::path& path) {
  if (!f.labels) return;
  for (int y : *f.labels) {
    if (y < 0 || y >= f.classes) {
      throw ValidationError(path.string() + ": label " + std::to_string(y) + " outside [0, " +
                            std::to_string(f.classes) + ")");
    }
  }
}

Eigen::VectorXd random_direction(int dim, Rng& rng) {
  Eigen::VectorXd direction(dim);
  for (int k = 0; k < dim; ++k) direction(k) = rng.normal();
  return direction.normalized();
}

// Rotates the first two coordinates of v by `angle` radians.
Eigen::VectorXd rotate_plane(Eigen::VectorXd v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double x = v(0), y = v(1);
  v(0) = c * x - s * y;
  v(1) = s * x + c * y;
  return v;
}

Eigen::VectorXd class_mean(const SynthShiftConfig& cfg, int c) {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(cfg.dim);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(cfg.classes);
  mu(0) = cfg.class_sep * std::cos(angle);
  mu(1) = cfg.class_sep * std::sin(angle);
  return mu;
}

double class_rotation(const SynthShiftConfig& cfg, int c) {
  return cfg.rotation_deg * std::numbers::pi / 180.0 * static_cast<double>(c) / static_cast<double>(cfg.classes - 1);
}

LabeledSet sample_domain(const SynthShiftConfig& cfg, int n_per_class, const Eigen::VectorXd& shift,
                         double rotation_scale, Rng& rng) {
  LabeledSet out;
  out.features.resize(static_cast<Eigen::Index>(n_per_class) * cfg.classes, cfg.dim);
  Eigen::Index row = 0;
  for (int c = 0; c < cfg.classes; ++c) {
    const Eigen::VectorXd mu = rotate_plane(class_mean(cfg, c), rotation_scale * class_rotation(cfg, c)) + shift;
    for (int i = 0; i < n_per_class; ++i, ++row) {
      for (int k = 0; k < cfg.dim; ++k) out.features(row, k) = mu(k) + cfg.noise * rng.normal();
      out.labels.push_back(c);
    }
  }
  // Interleave classes so files and batches are not sorted by label.
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(out.features.rows()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Eigen::Index>(i);
  rng.shuffle(perm);
  LabeledSet shuffled;
  shuffled.features.resize(out.features.rows(), out.features.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.features.row(static_cast<Eigen::Index>(i)) = out.features.row(perm[i]);
    shuffled.labels.push_back(out.labels[static_cast<std::size_t>(perm[i])]);
  }
  return shuffled;
}

}  // namespace

FeatureFile read_features(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  FeatureFile f = has_magic(path, "SDAF") ? read_features_binary(path) : read_features_text(path);
  check_labels(f, path);
  return f;
}

void write_features(const FeatureFile& f, const fs::path& path, std::optional<Encoding> encoding) {
  const Encoding enc = encoding.value_or(path.extension() == ".bin" ? Encoding::binary : Encoding::text);
  if (f.labels && static_cast<Eigen::Index>(f.labels->size()) != f.features.rows()) {
    throw ValidationError("label count does not match rows");
  }
  const Eigen::Index n = f.features.rows(), d = f.features.cols();
  if (enc == Encoding::binary) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write feature file: " + path.string());
    os.write("SDAF", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(n));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    put<std::uint8_t>(os, f.labels ? 1 : 0);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(f.classes));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) put<double>(os, f.features(i, k));
      if (f.labels) put<std::int32_t>(os, (*f.labels)[static_cast<std::size_t>(i)]);
    }
    if (!os) throw IoError("failed writing " + path.string());
    return;
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write feature file: " + path.string());
  os << "# sdadda-features v1 n_samples=" << n << " feature_dim=" << d << " has_labels=" << (f.labels ? 1 : 0)
     << " classes=" << f.classes << '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      if (k) os << ',';
      os << fmt17(f.features(i, k));
    }
    if (f.labels) os << ',' << (*f.labels)[static_cast<std::size_t>(i)];
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("empty manifest: " + path.string());
  const auto head = split(trim(line), ',');
  if (head.size() < 3 || trim(head[0]) != "subject" || trim(head[1]) != "session" || trim(head[2]) != "path") {
    throw IoError(path.string() + ": manifest header must be 'subject,session,path[,role]'");
  }
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line).starts_with('#')) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() < 3 || fields.size() > 4) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 3 or 4 fields");
    }
    ManifestEntry e{trim(fields[0]), trim(fields[1]), base / trim(fields[2]), fields.size() == 4 ? trim(fields[3]) : ""};
    if (!seen.insert({e.subject, e.session}).second) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": duplicate subject/session " + e.subject +
                            "/" + e.session);
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ValidationError("empty manifest: " + path.string());
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  os << "subject,session,path,role\n";
  for (const auto& e : entries) {
    os << e.subject << ',' << e.session << ',' << e.path.generic_string() << ',' << e.role << '\n';
  }
}

SubjectDataset load_dataset(const fs::path& manifest) {
  const auto entries = read_manifest(manifest);
  SubjectDataset data;
  std::map<std::string, std::size_t> index;
  fs::path first_file;
  for (const auto& e : entries) {
    if (!fs::exists(e.path)) throw IoError("missing file: " + e.path.string());
    FeatureFile f = read_features(e.path);
    if (!f.labels) throw ValidationError(e.path.string() + ": dataset files must carry labels");
    const int d = static_cast<int>(f.features.cols());
    if (data.feature_dim == 0) {
      data.feature_dim = d;
      first_file = e.path;
    } else if (d != data.feature_dim) {
      throw ValidationError("dimension mismatch: " + e.path.string() + " has " + std::to_string(d) + " features, " +
                            first_file.string() + " has " + std::to_string(data.feature_dim));
    }
    data.classes = std::max(data.classes, f.classes);
    auto [it, fresh] = index.try_emplace(e.subject, data.subjects.size());
    if (fresh) data.subjects.push_back({e.subject, {}});
    data.subjects[it->second].sessions.push_back({e.session, {std::move(f.features), std::move(*f.labels)}});
  }
  return data;
}

void save_dataset(const SubjectDataset& data, const fs::path& manifest, Encoding encoding) {
  const fs::path dir = manifest.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& subj : data.subjects) {
    for (const auto& sess : subj.sessions) {
      const std::string name =
          "subject_" + subj.id + "_session_" + sess.id + (encoding == Encoding::binary ? ".bin" : ".csv");
      write_features({sess.data.features, sess.data.labels, data.classes}, dir / name, encoding);
      entries.push_back({subj.id, sess.id, name, ""});
    }
  }
  write_manifest(entries, manifest);
}

features::RawWindow read_recording(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  features::RawWindow rec;
  if (has_magic(path, "SDAR")) {
    std::ifstream is(path, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    if (get<std::uint32_t>(is, path) != 1) throw IoError(path.string() + ": unsupported recording version");
    const auto channels = get<std::uint32_t>(is, path);
    rec.fs = get<double>(is, path);
    const auto samples = get<std::uint64_t>(is, path);
    if (samples > (1ull << 32)) throw IoError(path.string() + ": implausible sample count");
    rec.samples.resize(channels, static_cast<Eigen::Index>(samples));
    for (Eigen::Index c = 0; c < rec.samples.rows(); ++c) {
      for (Eigen::Index i = 0; i < rec.samples.cols(); ++i) rec.samples(c, i) = get<double>(is, path);
    }
    return rec;
  }
  std::ifstream is(path);
  std::string line;
  if (!std::getline(is, line)) throw IoError(path.string() + ": empty recording");
  const auto head = split(trim(line), ',');
  if (head.size() != 3) throw IoError(path.string() + ": header must be 'n_channels,fs,n_samples'");
  const long long channels = parse_int(head[0], path, 1);
  rec.fs = parse_double(head[1], path, 1);
  const long long samples = parse_int(head[2], path, 1);
  if (channels < 1 || samples < 1) throw IoError(path.string() + ": bad recording header");
  rec.samples.resize(channels, samples);
  for (long long c = 0; c < channels; ++c) {
    if (!std::getline(is, line)) throw IoError(path.string() + ": missing channel " + std::to_string(c));
    const auto fields = split(trim(line), ',');
    if (static_cast<long long>(fields.size()) != samples) {
      throw IoError(path.string() + ": channel " + std::to_string(c) + " has " + std::to_string(fields.size()) +
                    " samples, expected " + std::to_string(samples));
    }
    for (long long i = 0; i < samples; ++i) {
      rec.samples(c, i) = parse_double(fields[static_cast<std::size_t>(i)], path, static_cast<std::size_t>(c + 2));
    }
  }
  return rec;
}

void write_recording(const features::RawWindow& rec, const fs::path& path, std::optional<Encoding> encoding) {
  const Encoding enc = encoding.value_or(path.extension() == ".bin" ? Encoding::binary : Encoding::text);
  if (enc == Encoding::binary) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write recording: " + path.string());
    os.write("SDAR", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.samples.rows()));
    put<double>(os, rec.fs);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(rec.samples.cols()));
    for (Eigen::Index c = 0; c < rec.samples.rows(); ++c) {
      for (Eigen::Index i = 0; i < rec.samples.cols(); ++i) put<double>(os, rec.samples(c, i));
    }
    return;
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write recording: " + path.string());
  os << rec.samples.rows() << ',' << fmt17(rec.fs) << ',' << rec.samples.cols() << '\n';
  for (Eigen::Index c = 0; c < rec.samples.rows(); ++c) {
    for (Eigen::Index i = 0; i < rec.samples.cols(); ++i) {
      if (i) os << ',';
      os << fmt17(rec.samples(c, i));
    }
    os << '\n';
  }
}

void validate(const SynthShiftConfig& cfg) {
  if (cfg.classes < 2) throw ValidationError("synth classes must be >= 2");
  if (cfg.dim < 2) throw ValidationError("synth dim must be >= 2");
  if (cfg.n_per_class_source < 1 || cfg.n_per_class_target < 1) throw ValidationError("synth sample counts must be >= 1");
  if (!(cfg.class_sep >= 0.0) || !(cfg.domain_shift >= 0.0) || !(cfg.noise >= 0.0) || !(cfg.rotation_deg >= 0.0)) {
    throw ValidationError("synth magnitudes must be >= 0");
  }
}

SynthShift generate_synth_shift(const SynthShiftConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const Eigen::VectorXd direction = random_direction(cfg.dim, rng);
  SynthShift out;
  out.source = sample_domain(cfg, cfg.n_per_class_source, Eigen::VectorXd::Zero(cfg.dim), 0.0, rng);
  LabeledSet target = sample_domain(cfg, cfg.n_per_class_target, cfg.domain_shift * direction, 1.0, rng);
  out.target.features = std::move(target.features);
  out.target_labels = std::move(target.labels);
  return out;
}

SubjectDataset generate_synth_subjects(const SynthShiftConfig& cfg, int subjects, int sessions) {
  validate(cfg);
  if (subjects < 2) throw ValidationError("synth subjects must be >= 2");
  if (sessions < 1) throw ValidationError("synth sessions must be >= 1");
  Rng rng(cfg.seed);
  SubjectDataset data;
  data.feature_dim = cfg.dim;
  data.classes = cfg.classes;
  for (int s = 0; s < subjects; ++s) {
    const Eigen::VectorXd direction = random_direction(cfg.dim, rng);
    const double magnitude = s == 0 ? 0.0 : cfg.domain_shift;
    const double rotation = s == 0 ? 0.0 : rng.uniform(-1.0, 1.0);
    Subject subj{std::to_string(s + 1), {}};
    for (int k = 0; k < sessions; ++k) {
      subj.sessions.push_back(
          {std::to_string(k + 1), sample_domain(cfg, cfg.n_per_class_target, magnitude * direction, rotation, rng)});
    }
    data.subjects.push_back(std::move(subj));
  }
  return data;
}

}  // namespace sdadda::io
