#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdcl/matrix.hpp"
#include "cdcl/model.hpp"

namespace cdcl {

/// How anchors, positives and candidates are drawn from a source/target batch pair.
enum class PairMode {
  CrossDomain,             // both anchor directions, candidates from the other domain
  InDomain,                // anchors from both domains, candidates from the anchor's own domain
  CombinedDomain,          // candidates from the union of both domains
  CrossSourceAnchorsOnly,  // source anchors against target candidates
  CrossTargetAnchorsOnly,  // target anchors against source candidates
};

const char* to_string(PairMode m);
PairMode parse_pair_mode(std::string_view s);

struct SampleRef {
  Domain domain = Domain::Source;
  std::size_t index = 0;

  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

struct PairSelection {
  PairMode mode = PairMode::CrossDomain;
  std::vector<SampleRef> anchors;
  std::vector<std::vector<SampleRef>> positives;   // per anchor, subset of candidates
  std::vector<std::vector<SampleRef>> candidates;  // per anchor, the softmax denominator set
};

/// Builds anchors, positive sets and candidate sets. Samples labelled kUnlabeled
/// (filtered targets) take no role. Throws MissingPseudoLabels when either batch has no labels.
PairSelection select_pairs(const FeatureBatch& source, const FeatureBatch& target, PairMode mode);

inline constexpr const char* kCeComponent = "CE";
inline constexpr const char* kCdcSourceComponent = "CDC_source_anchors";
inline constexpr const char* kCdcTargetComponent = "CDC_target_anchors";
inline constexpr const char* kSdfComponent = "SDF_CDC";

struct LossValue {
  double total = 0.0;
  std::map<std::string, double> components;
};

struct InfoNceGrad {
  std::vector<double> anchor;
  Matrix positives;
  Matrix negatives;
};

/// -sum_{v+} log[exp(u.v+/tau) / (exp(u.v+/tau) + sum_{v-} exp(u.v-/tau))].
double info_nce(std::span<const double> anchor, const Matrix& positives, const Matrix& negatives, double tau,
                InfoNceGrad* grad = nullptr);

struct AnchorGrad {
  std::vector<double> anchor;
  Matrix candidates;
};

/// Single-anchor cross-domain contrastive loss: positives are the candidates
/// whose label equals `anchor_label`; the denominator runs over every candidate.
/// Returns 0 (and zero gradient) when no candidate is positive.
double cdc_anchor_loss(std::span<const double> anchor, const Matrix& candidates, std::span<const int> labels,
                       int anchor_label, double tau, AnchorGrad* grad = nullptr);

struct CdcResult {
  LossValue loss;
  Matrix grad_source;  // d loss / d source normalized features
  Matrix grad_target;
};

/// Sum of per-anchor losses over the selection, split into source-anchor and
/// target-anchor components (total = their sum).
LossValue cdc_bidirectional(const FeatureBatch& source, const FeatureBatch& target, double tau,
                            const PairSelection& selection);
CdcResult cdc_bidirectional_grad(const FeatureBatch& source, const FeatureBatch& target, double tau,
                                 const PairSelection& selection);

struct CrossEntropyResult {
  double value = 0.0;
  Matrix grad_logits;
};

/// Batch mean of -log softmax(logits)[label].
double cross_entropy(const Matrix& logits, std::span<const int> labels);
CrossEntropyResult cross_entropy_grad(const Matrix& logits, std::span<const int> labels);

struct SdfResult {
  double value = 0.0;
  Matrix grad_normalized;
};

/// Mean over retained (labelled) rows of the prototype softmax loss with logits z.W^T/tau.
double sdf_cdc_loss(const FeatureBatch& target, const Matrix& prototypes, double tau);
SdfResult sdf_cdc_loss_grad(const FeatureBatch& target, const Matrix& prototypes, double tau);

/// Inputs of one standard-adaptation step.
struct UdaBatch {
  Matrix ce_inputs;  // empty: reuse the contrastive source batch for cross-entropy
  std::vector<int> ce_labels;
  Matrix source_inputs;
  std::vector<int> source_labels;
  Matrix target_inputs;
  std::vector<int> target_pseudo_labels;  // kUnlabeled for filtered samples
};

struct ObjectiveSettings {
  double tau = 0.05;
  double lambda = 1.6;
  PairMode pair_mode = PairMode::CrossDomain;
};

struct ObjectiveEvaluation {
  LossValue loss;
  LossGraph graph;
};

/// CE(source) + lambda * CDC(source, target). Train mode updates BN running statistics.
ObjectiveEvaluation uda_objective(Model& model, const UdaBatch& batch, const ObjectiveSettings& settings,
                                  Mode mode = Mode::Train);

/// Source-free objective: sdf_cdc_loss against the (frozen) classifier rows.
ObjectiveEvaluation sdf_objective(Model& model, const Matrix& target_inputs, std::span<const int> pseudo_labels,
                                  double tau, Mode mode = Mode::Train);

}  // namespace cdcl
