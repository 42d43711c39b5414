#include "cdcl/pseudolabel.hpp"

#include <string>

#include "cdcl/data.hpp"
#include "cdcl/error.hpp"
#include "cdcl/kernels.hpp"
#include "cdcl/numerics.hpp"

namespace cdcl {

double PseudoLabelResult::retained_fraction() const {
  if (retained.empty()) return 0.0;
  std::size_t kept = 0;
  for (bool r : retained) kept += r ? 1 : 0;
  return static_cast<double>(kept) / static_cast<double>(retained.size());
}

std::vector<int> PseudoLabelResult::training_labels() const {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = retained[i] ? labels[i] : kUnlabeled;
  return out;
}

PrototypeSet source_prototypes(const Matrix& normalized_features, std::span<const int> labels, std::size_t classes) {
  if (labels.size() != normalized_features.rows()) throw Error(ErrorCode::DimensionMismatch, "one label per feature row");
  const std::size_t d = normalized_features.cols();
  Matrix sums(classes, d);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnlabeled) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]));
    }
    const auto m = static_cast<std::size_t>(labels[i]);
    ++counts[m];
    auto src = normalized_features.row(i);
    auto dst = sums.row(m);
    for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
  }
  PrototypeSet out{Matrix(classes, d), PrototypeSource::SampleMeans};
  for (std::size_t m = 0; m < classes; ++m) {
    if (counts[m] == 0) throw Error(ErrorCode::EmptyClass, "class " + std::to_string(m) + " has no source samples");
    auto row = sums.row(m);
    for (double& v : row) v /= static_cast<double>(counts[m]);
    const auto unit = l2_normalize(row);
    std::copy(unit.begin(), unit.end(), out.centers.row(m).begin());
  }
  return out;
}

PrototypeSet classifier_prototypes(const Model& model) {
  if (!model.source_free_ready()) {
    throw Error(ErrorCode::NotPrepared, "classifier prototypes need a prepared (bias-free, frozen) classifier");
  }
  return {model.classifier_weight(), PrototypeSource::ClassifierWeights};
}

namespace {

double total(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

}  // namespace

PseudoLabelResult spherical_kmeans(const Matrix& points, const PrototypeSet& init, std::size_t max_iters, double tol) {
  if (points.rows() == 0) throw Error(ErrorCode::EmptyInput, "spherical_kmeans needs at least one point");
  if (init.centers.cols() != points.cols()) throw Error(ErrorCode::DimensionMismatch, "center and point widths differ");
  const std::size_t k = init.centers.rows();
  const std::size_t d = points.cols();

  PseudoLabelResult r;
  r.centers = init.centers;
  kernels::Assignment assign = kernels::assign_nearest(points, r.centers);
  r.objective_trace.push_back(total(assign.similarities));

  for (std::size_t it = 0; it < max_iters; ++it) {
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
      const auto m = static_cast<std::size_t>(assign.labels[i]);
      ++counts[m];
      auto src = points.row(i);
      auto dst = sums.row(m);
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
    Matrix next = r.centers;
    for (std::size_t m = 0; m < k; ++m) {
      if (counts[m] == 0) continue;  // empty cluster keeps its center
      const double n = norm2(sums.row(m));
      if (!(n > kZeroNormCutoff)) continue;  // cancelling members: any center scores 0
      auto dst = next.row(m);
      auto src = sums.row(m);
      for (std::size_t c = 0; c < d; ++c) dst[c] = src[c] / n;
    }
    kernels::Assignment updated = kernels::assign_nearest(points, next);
    const double obj = total(updated.similarities);
    const double gain = obj - r.objective_trace.back();
    const bool changed = updated.labels != assign.labels;
    r.centers = std::move(next);
    assign = std::move(updated);
    r.objective_trace.push_back(obj);
    ++r.iterations;
    if (!changed || gain < tol) break;
  }
  r.labels = std::move(assign.labels);
  r.confidences = std::move(assign.similarities);
  r.retained.assign(r.labels.size(), true);
  return r;
}

PseudoLabelResult filter_by_confidence(PseudoLabelResult result, double threshold) {
  result.retained.resize(result.confidences.size());
  for (std::size_t i = 0; i < result.confidences.size(); ++i) result.retained[i] = result.confidences[i] >= threshold;
  return result;
}

PseudoLabelResult generate_pseudo_labels(const Model& model, const Matrix& target_inputs, AdaptationMode mode,
                                         const Dataset* source, const ClusteringSettings& settings) {
  PrototypeSet init;
  if (mode == AdaptationMode::Standard) {
    if (source == nullptr) throw Error(ErrorCode::InvalidConfig, "standard pseudo-labeling needs the source dataset");
    const FeatureBatch src = encode(model, source->features(), Domain::Source);
    init = source_prototypes(src.normalized, source->labels(), model.classes());
  } else {
    init = classifier_prototypes(model);
  }
  const FeatureBatch tgt = encode(model, target_inputs, Domain::Target);
  PseudoLabelResult r = spherical_kmeans(tgt.normalized, init, settings.max_iters, settings.tol);
  return filter_by_confidence(std::move(r), settings.confidence_threshold);
}

}  // namespace cdcl
