#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cdcl/matrix.hpp"
#include "cdcl/model.hpp"

namespace cdcl {

class Dataset;

enum class PrototypeSource { SampleMeans, ClassifierWeights };

/// M unit-norm class centers.
struct PrototypeSet {
  Matrix centers;
  PrototypeSource source = PrototypeSource::SampleMeans;
};

struct PseudoLabelResult {
  std::vector<int> labels;
  std::vector<double> confidences;  // cosine to the assigned center
  std::vector<bool> retained;
  Matrix centers;
  std::vector<double> objective_trace;  // entry 0 is the initial assignment
  std::size_t iterations = 0;

  double retained_fraction() const;
  /// Labels with filtered samples replaced by kUnlabeled.
  std::vector<int> training_labels() const;
};

struct ClusteringSettings {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  double confidence_threshold = 0.0;
};

enum class AdaptationMode { Standard, SourceFree };

/// Per-class mean of unit features, re-normalized. Throws EmptyClass or ZeroVector.
PrototypeSet source_prototypes(const Matrix& normalized_features, std::span<const int> labels, std::size_t classes);

/// Classifier rows of a source-free-prepared model. Throws NotPrepared.
PrototypeSet classifier_prototypes(const Model& model);

/// Spherical k-means from `init`; assignment by argmax cosine (lowest index on ties),
/// centers re-normalized means, empty clusters keep their center. Stops on unchanged
/// assignments, objective gain below `tol`, or `max_iters` updates.
PseudoLabelResult spherical_kmeans(const Matrix& points, const PrototypeSet& init, std::size_t max_iters, double tol);

/// Marks samples whose confidence is at least `threshold` as retained.
PseudoLabelResult filter_by_confidence(PseudoLabelResult result, double threshold);

/// Eval-mode encoding of the target set, prototype initialization (source means in
/// Standard mode, classifier rows in SourceFree mode), clustering and filtering.
PseudoLabelResult generate_pseudo_labels(const Model& model, const Matrix& target_inputs, AdaptationMode mode,
                                         const Dataset* source, const ClusteringSettings& settings);

}  // namespace cdcl
