#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdcl/matrix.hpp"
#include "cdcl/model.hpp"

namespace cdcl {

/// Immutable feature/label collection for one domain. Labels are in
/// [0, classes) or kUnlabeled.
class Dataset {
 public:
  Dataset(Matrix features, std::vector<int> labels, std::size_t classes, Domain domain, std::string name = {});

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  std::size_t classes() const { return classes_; }
  Domain domain() const { return domain_; }
  const std::string& name() const { return name_; }
  std::size_t size() const { return features_.rows(); }
  std::size_t dim() const { return features_.cols(); }

  bool fully_labeled() const;
  bool has_any_label() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset unlabeled_view() const;
  Dataset with_labels(std::vector<int> labels) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::size_t classes_;
  Domain domain_;
  std::string name_;
};

/// Gaussian clusters on a circle (first two coordinates) with a rigid transform
/// applied to the target domain.
struct ShiftConfig {
  std::size_t classes = 4;
  std::size_t dim = 8;
  std::size_t per_class_count = 100;
  double class_center_radius = 4.0;
  double cluster_stddev = 1.0;
  double rotation_angle = 0.0;       // radians, in the plane of coordinates 0 and 1
  std::vector<double> translation;   // empty or `dim` entries
  std::uint64_t seed = 0;

  void validate() const;
};

struct ShiftedPair {
  Dataset source;
  Dataset target;                   // unlabeled view
  std::vector<int> target_truth;    // evaluation only
  Matrix target_untransformed;      // target samples before the rigid transform
};

ShiftedPair generate_shifted_pair(const ShiftConfig& cfg);
Matrix apply_shift(const ShiftConfig& cfg, const Matrix& points);
Matrix invert_shift(const ShiftConfig& cfg, const Matrix& points);

// "CDCL-DS v1 N D M DOMAIN" followed by N lines "label f_1 ... f_D".
void write_dataset(const Dataset& ds, std::ostream& out);
Dataset read_dataset(std::istream& in, std::string name = {});
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Ground-truth sidecar: "CDCL-LABELS v1 N M" followed by N label lines.
void save_labels(std::span<const int> labels, std::size_t classes, const std::filesystem::path& path);
std::vector<int> load_labels(const std::filesystem::path& path, std::size_t* classes = nullptr);

/// Seeded shuffle split; the first part has round(ratio * N) samples.
std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double ratio, std::uint64_t seed);

/// Without-replacement index sampler, reshuffled at every epoch boundary.
class BatchSampler {
 public:
  BatchSampler(std::size_t batch_size, std::uint64_t seed, bool drop_last = true);

  /// Next batch of indices into a collection of `n` items. A batch size above
  /// `n` is clamped to `n`.
  std::vector<std::size_t> next_batch(std::size_t n);
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle(std::size_t n);

  std::size_t batch_size_;
  bool drop_last_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

std::vector<std::size_t> next_batch(BatchSampler& sampler, const Dataset& ds);

/// Deterministic sub-seed for an independent random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace cdcl
