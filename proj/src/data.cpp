#include "cdcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "cdcl/error.hpp"
#include "cdcl/textio.hpp"

namespace cdcl {

Dataset::Dataset(Matrix features, std::vector<int> labels, std::size_t classes, Domain domain, std::string name)
    : features_(std::move(features)), labels_(std::move(labels)), classes_(classes), domain_(domain),
      name_(std::move(name)) {
  if (features_.rows() == 0) throw Error(ErrorCode::EmptyInput, "a dataset needs at least one sample");
  if (labels_.size() != features_.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "dataset has " + std::to_string(features_.rows()) + " rows but " +
                                                  std::to_string(labels_.size()) + " labels");
  }
  if (classes_ == 0) throw Error(ErrorCode::InvalidConfig, "class count must be >= 1");
  for (int l : labels_) {
    if (l != kUnlabeled && (l < 0 || static_cast<std::size_t>(l) >= classes_)) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l) + " outside [0, " +
                                                  std::to_string(classes_) + ")");
    }
  }
}

bool Dataset::fully_labeled() const {
  return std::none_of(labels_.begin(), labels_.end(), [](int l) { return l == kUnlabeled; });
}

bool Dataset::has_any_label() const {
  return std::any_of(labels_.begin(), labels_.end(), [](int l) { return l != kUnlabeled; });
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) labels.push_back(labels_.at(i));
  return Dataset(features_.select_rows(indices), std::move(labels), classes_, domain_, name_);
}

Dataset Dataset::unlabeled_view() const {
  return Dataset(features_, std::vector<int>(size(), kUnlabeled), classes_, domain_, name_);
}

Dataset Dataset::with_labels(std::vector<int> labels) const {
  return Dataset(features_, std::move(labels), classes_, domain_, name_);
}

void ShiftConfig::validate() const {
  if (classes < 2) throw Error(ErrorCode::InvalidConfig, "classes must be >= 2");
  if (dim < 2) throw Error(ErrorCode::InvalidConfig, "dim must be >= 2");
  if (per_class_count < 1) throw Error(ErrorCode::InvalidConfig, "per_class_count must be >= 1");
  if (!(cluster_stddev > 0.0)) throw Error(ErrorCode::InvalidConfig, "cluster_stddev must be > 0");
  if (!translation.empty() && translation.size() != dim) {
    throw Error(ErrorCode::InvalidConfig, "translation must have " + std::to_string(dim) + " entries");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::pair<Matrix, std::vector<int>> sample_mixture(const ShiftConfig& cfg, std::uint64_t stream) {
  std::mt19937_64 rng(derive_seed(cfg.seed, stream));
  std::normal_distribution<double> noise(0.0, cfg.cluster_stddev);
  const std::size_t n = cfg.classes * cfg.per_class_count;
  Matrix x(n, cfg.dim);
  std::vector<int> labels(n);
  const double two_pi = 2.0 * std::acos(-1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = i % cfg.classes;
    labels[i] = static_cast<int>(m);
    const double angle = two_pi * static_cast<double>(m) / static_cast<double>(cfg.classes);
    auto row = x.row(i);
    for (std::size_t k = 0; k < cfg.dim; ++k) row[k] = noise(rng);
    row[0] += cfg.class_center_radius * std::cos(angle);
    row[1] += cfg.class_center_radius * std::sin(angle);
  }
  return {std::move(x), std::move(labels)};
}

}  // namespace

Matrix apply_shift(const ShiftConfig& cfg, const Matrix& points) {
  const double c = std::cos(cfg.rotation_angle), s = std::sin(cfg.rotation_angle);
  Matrix out = points;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const double x0 = row[0], x1 = row[1];
    row[0] = c * x0 - s * x1;
    row[1] = s * x0 + c * x1;
    for (std::size_t k = 0; k < cfg.translation.size(); ++k) row[k] += cfg.translation[k];
  }
  return out;
}

Matrix invert_shift(const ShiftConfig& cfg, const Matrix& points) {
  const double c = std::cos(cfg.rotation_angle), s = std::sin(cfg.rotation_angle);
  Matrix out = points;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t k = 0; k < cfg.translation.size(); ++k) row[k] -= cfg.translation[k];
    const double x0 = row[0], x1 = row[1];
    row[0] = c * x0 + s * x1;
    row[1] = -s * x0 + c * x1;
  }
  return out;
}

ShiftedPair generate_shifted_pair(const ShiftConfig& cfg) {
  cfg.validate();
  auto [src_x, src_y] = sample_mixture(cfg, 0);
  auto [tgt_raw, tgt_y] = sample_mixture(cfg, 1);
  Matrix tgt_x = apply_shift(cfg, tgt_raw);
  ShiftedPair pair{
      Dataset(std::move(src_x), std::move(src_y), cfg.classes, Domain::Source, "source"),
      Dataset(std::move(tgt_x), std::vector<int>(tgt_y.size(), kUnlabeled), cfg.classes, Domain::Target, "target"),
      std::move(tgt_y),
      std::move(tgt_raw),
  };
  return pair;
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  out << "CDCL-DS v1 " << ds.size() << ' ' << ds.dim() << ' ' << ds.classes() << ' ' << to_string(ds.domain())
      << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels()[i];
    for (double v : ds.features().row(i)) out << ' ' << format_double(v);
    out << '\n';
  }
}

Dataset read_dataset(std::istream& in, std::string name) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) reader.fail("empty file");
  const auto head = split_ws(line);
  if (head.size() != 6 || head[0] != "CDCL-DS" || head[1] != "v1") reader.fail("expected 'CDCL-DS v1 N D M DOMAIN'");
  const std::size_t n = reader.parse_size(head[2]);
  const std::size_t d = reader.parse_size(head[3]);
  const std::size_t m = reader.parse_size(head[4]);
  Domain domain = Domain::Source;
  try {
    domain = parse_domain(head[5]);
  } catch (const Error& e) {
    reader.fail(e.what());
  }
  if (n == 0 || d == 0 || m == 0) reader.fail("N, D and M must be positive");
  std::vector<double> values;
  values.reserve(n * d);
  std::vector<int> labels;
  labels.reserve(n);
  while (reader.next(line)) {
    const auto parts = split_ws(line);
    if (parts.empty()) continue;
    if (labels.size() == n) reader.fail("more rows than the header's N=" + std::to_string(n));
    if (parts.size() != d + 1) {
      reader.fail("expected " + std::to_string(d + 1) + " fields, got " + std::to_string(parts.size()));
    }
    const long long label = reader.parse_int(parts[0]);
    if (label != kUnlabeled && (label < 0 || label >= static_cast<long long>(m))) {
      reader.fail("label " + parts[0] + " outside [0, " + std::to_string(m) + ") and not -1");
    }
    labels.push_back(static_cast<int>(label));
    for (std::size_t k = 1; k <= d; ++k) values.push_back(reader.parse_double(parts[k]));
  }
  if (labels.size() != n) {
    reader.fail("header declares N=" + std::to_string(n) + " rows but the file has " + std::to_string(labels.size()));
  }
  return Dataset(Matrix(n, d, std::move(values)), std::move(labels), m, domain, std::move(name));
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_dataset(ds, out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return read_dataset(in, path.stem().string());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FormatError) throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    throw;
  }
}

void save_labels(std::span<const int> labels, std::size_t classes, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "CDCL-LABELS v1 " << labels.size() << ' ' << classes << '\n';
  for (int l : labels) out << l << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<int> load_labels(const std::filesystem::path& path, std::size_t* classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) reader.fail("empty file");
  const auto head = split_ws(line);
  if (head.size() != 4 || head[0] != "CDCL-LABELS" || head[1] != "v1") reader.fail("expected 'CDCL-LABELS v1 N M'");
  const std::size_t n = reader.parse_size(head[2]);
  const std::size_t m = reader.parse_size(head[3]);
  std::vector<int> labels;
  while (reader.next(line)) {
    const auto parts = split_ws(line);
    if (parts.empty()) continue;
    if (parts.size() != 1) reader.fail("one label per line");
    const long long l = reader.parse_int(parts[0]);
    if (l != kUnlabeled && (l < 0 || l >= static_cast<long long>(m))) reader.fail("label out of range");
    labels.push_back(static_cast<int>(l));
  }
  if (labels.size() != n) reader.fail("header declares N=" + std::to_string(n) + " labels, found " + std::to_string(labels.size()));
  if (classes) *classes = m;
  return labels;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidRatio, "ratio must lie in (0, 1)");
  if (!ds.fully_labeled()) throw Error(ErrorCode::InvalidConfig, "split_train_val needs a labeled dataset");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.size())));
  if (n_train == 0 || n_train == ds.size()) {
    throw Error(ErrorCode::InvalidRatio, "split leaves an empty part for N=" + std::to_string(ds.size()));
  }
  std::span<const std::size_t> all(order);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

BatchSampler::BatchSampler(std::size_t batch_size, std::uint64_t seed, bool drop_last)
    : batch_size_(batch_size), drop_last_(drop_last), rng_(seed) {
  if (batch_size_ == 0) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
}

void BatchSampler::reshuffle(std::size_t n) {
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next_batch(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::EmptyInput, "cannot sample from an empty collection");
  const std::size_t b = std::min(batch_size_, n);
  const bool exhausted = cursor_ >= order_.size() || (drop_last_ && order_.size() - cursor_ < b);
  if (order_.size() != n || exhausted) {
    if (!order_.empty()) ++epoch_;
    reshuffle(n);
  }
  const std::size_t take = std::min(b, order_.size() - cursor_);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  return out;
}

std::vector<std::size_t> next_batch(BatchSampler& sampler, const Dataset& ds) { return sampler.next_batch(ds.size()); }

}  // namespace cdcl
