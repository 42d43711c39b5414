#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdcl/matrix.hpp"

namespace cdcl {

/// Label value for samples without a (pseudo-)label.
inline constexpr int kUnlabeled = -1;

enum class Domain { Source, Target };
enum class Mode { Train, Eval };
enum class Activation { ReLU, Tanh };

const char* to_string(Domain d);
const char* to_string(Activation a);
Domain parse_domain(std::string_view s);
Activation parse_activation(std::string_view s);

struct EncoderConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims;
  std::size_t feature_dim = 16;
  Activation activation = Activation::ReLU;
  bool batch_norm = false;      // BN after every hidden affine layer
  bool per_domain_bn = false;   // separate BN parameters and statistics per domain
  bool bottleneck = false;      // extra affine+BN stage in front of the classifier
  bool classifier_bias = true;

  /// Throws InvalidConfig on zero dimensions.
  void validate() const;
  bool has_any_bn() const { return batch_norm || bottleneck; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Which learning rate a parameter trains with.
enum class ParamGroup { Backbone, NewLayer };

struct Tensor {
  std::string name;
  Matrix value;
  bool trainable = true;  // false for BN running statistics
  bool frozen = false;
  ParamGroup group = ParamGroup::Backbone;

  bool receives_gradient() const { return trainable && !frozen; }
};

/// Encoder output for one mini-batch.
struct FeatureBatch {
  Matrix raw;
  Matrix normalized;  // unit rows
  std::vector<int> labels;  // empty when no labels are attached; kUnlabeled marks excluded rows
  Domain domain = Domain::Source;

  std::size_t size() const { return raw.rows(); }
  bool has_labels() const { return !labels.empty(); }
};

/// Gradients aligned with Model::tensors(); entries for tensors that receive no
/// gradient are empty matrices.
struct Gradients {
  std::vector<Matrix> per_tensor;

  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

namespace detail {

struct BnSlot {
  std::size_t gamma, beta, mean, var;
};

struct Stage {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;  // absent in front of batch norm
  bool activate = false;
  std::vector<BnSlot> bn;  // empty, one shared slot, or {source, target}
};

struct StageCache {
  Matrix input;
  Matrix x_hat;                 // BN only
  std::vector<double> inv_std;  // BN only
  Mode bn_mode = Mode::Eval;
  Matrix output;                // after activation
};

}  // namespace detail

/// Intermediate values of one encoder evaluation, kept for backpropagation.
struct EncodePass {
  FeatureBatch features;
  Domain domain = Domain::Source;
  std::vector<detail::StageCache> stages;
  std::vector<double> feature_norms;
};

/// Encoder g (dense stages with optional batch norm) followed by a linear classifier h.
class Model {
 public:
  static constexpr double kBnEpsilon = 1e-5;
  static constexpr double kBnMomentum = 0.1;

  Model() = default;

  /// Fan-in-scaled uniform initialization; BN gamma=1, beta=0, running stats (0, 1).
  static Model init(const EncoderConfig& cfg, std::size_t classes, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  std::size_t classes() const { return classes_; }
  std::size_t feature_dim() const { return cfg_.feature_dim; }

  std::span<const Tensor> tensors() const { return tensors_; }
  std::span<Tensor> tensors() { return tensors_; }
  const Tensor* find(std::string_view name) const;
  Tensor* find(std::string_view name);

  const Matrix& classifier_weight() const { return tensors_[classifier_weight_].value; }
  const Matrix* classifier_bias() const;
  bool classifier_frozen() const { return tensors_[classifier_weight_].frozen; }
  /// True once the classifier has no bias, unit rows, and is frozen.
  bool source_free_ready() const { return classifier_frozen() && !classifier_bias_; }

  /// Forward pass; Train mode uses batch statistics and updates the running
  /// statistics of the selected domain's BN layers.
  EncodePass forward(const Matrix& inputs, Domain domain, Mode mode);
  /// Eval-mode forward; never mutates the model.
  EncodePass forward_eval(const Matrix& inputs, Domain domain) const;

  /// Backpropagates d(loss)/d(raw features) through the encoder, adding into `grads`.
  void encoder_backward(const EncodePass& pass, const Matrix& grad_raw, Gradients& grads) const;

  Gradients zero_gradients() const;

  /// Trainable, unfrozen parameters flattened in tensor order.
  std::vector<double> trainable_values() const;
  void set_trainable_values(std::span<const double> values);
  std::vector<double> flatten(const Gradients& grads) const;

  /// Copies BN parameters and running statistics from one domain's slots to the other's.
  void copy_domain_bn(Domain from, Domain to);

  /// Drops the classifier bias, unit-normalizes classifier rows and freezes them.
  void prepare_source_free();

  // Checkpoint support.
  static Model from_tensors(const EncoderConfig& cfg, std::size_t classes, bool classifier_frozen,
                            std::vector<Tensor> tensors);

 private:
  void build_layout();
  EncodePass run_forward(const Matrix& inputs, Domain domain, Mode mode, bool update_stats);
  std::size_t slot_index(const detail::Stage& stage, Domain d) const;

  EncoderConfig cfg_;
  std::size_t classes_ = 0;
  std::vector<Tensor> tensors_;
  std::vector<detail::Stage> stages_;
  std::size_t classifier_weight_ = 0;
  std::optional<std::size_t> classifier_bias_;
};

/// Encodes a batch; see Model::forward.
FeatureBatch encode(Model& model, const Matrix& inputs, Domain domain, Mode mode);
/// Eval-mode encoding of a const model.
FeatureBatch encode(const Model& model, const Matrix& inputs, Domain domain);

/// Logits = features * W^T (+ bias).
Matrix classify(const Model& model, const Matrix& features);

/// Returns a copy prepared for source-free adaptation. Throws ZeroVector on a
/// degenerate classifier row.
Model prepare_source_free(const Model& model);

/// One encoder evaluation plus the upstream gradients a loss assigned to it.
struct LossNode {
  EncodePass pass;
  Matrix grad_logits;      // B x M, gradient w.r.t. logits computed from pass raw features; may be empty
  Matrix grad_normalized;  // B x d, gradient w.r.t. normalized features; may be empty
};

/// Forward record of a composite loss over one or more encoder passes.
struct LossGraph {
  std::vector<LossNode> nodes;
};

/// Reverse-mode gradient of a loss graph w.r.t. every unfrozen parameter.
Gradients backward(const Model& model, const LossGraph& graph);

}  // namespace cdcl
