#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdcl/data.hpp"
#include "cdcl/losses.hpp"
#include "cdcl/model.hpp"
#include "cdcl/pseudolabel.hpp"

namespace cdcl {

struct HyperParams {
  double tau = 0.05;
  double lambda = 1.6;
  double confidence_threshold = 0.0;
  double lr_backbone = 1e-3;
  double lr_new = 1e-2;
  double schedule_b = 0.75;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::size_t iters_per_epoch = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  // Source pre-training.
  std::size_t pretrain_epochs = 30;
  std::size_t pretrain_iters = 20;
  double pretrain_lr = 1e-2;
  double train_ratio = 0.9;

  std::size_t kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  bool share_ce_batch = false;
  bool init_target_bn_from_source = true;
  PairMode pair_mode = PairMode::CrossDomain;

  void validate() const;
  ClusteringSettings clustering() const { return {kmeans_max_iters, kmeans_tol, confidence_threshold}; }
  std::map<std::string, std::string> describe() const;
};

/// eta0 * (1 + 10 p)^(-b); p must lie in [0, 1].
double lr_schedule(double eta0, double progress, double b);

struct LearningRates {
  double backbone = 0.0;
  double new_layers = 0.0;
};

/// Momentum buffers aligned with Model::tensors().
struct VelocityState {
  std::vector<Matrix> per_tensor;
};

VelocityState zero_velocity(const Model& model);

/// Classic momentum: v <- momentum * v + g; theta <- theta - lr * v. Tensors that
/// receive no gradient are left untouched.
void sgd_step(Model& model, const Gradients& grads, const LearningRates& lr, double momentum, VelocityState& velocity);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt for classes absent from the data
  double mean_class_accuracy = 0.0;
};

/// Eval-mode accuracy using the BN statistics of `domain`. Throws InvalidConfig
/// ("labels required") when any label is missing.
EvalResult evaluate(const Model& model, const Dataset& labeled, Domain domain);

struct EpochStats {
  std::map<std::string, double> losses;  // per-epoch means; "total" plus components
  double retained_fraction = 0.0;
  std::optional<double> pseudo_label_accuracy;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::vector<double> iteration_losses;
  std::optional<EvalResult> target;
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
};

struct PretrainResult {
  Model model;
  double val_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::vector<double> val_history;  // entry 0 is the untrained model
};

/// The (train, validation) split used by pretrain_source.
std::pair<Dataset, Dataset> pretrain_split(const Dataset& source, const HyperParams& hyper);

/// Cross-entropy training on a seeded train split; returns the snapshot with the
/// best validation accuracy (earliest on ties, the untrained model included).
PretrainResult pretrain_source(const Dataset& source, const EncoderConfig& cfg, const HyperParams& hyper);

/// Standard adaptation. `target` must be unlabeled; `target_truth` is used only
/// for reporting accuracies.
std::pair<Model, TrainReport> train_uda(const Model& model, const Dataset& source, const Dataset& target,
                                        const HyperParams& hyper, const std::vector<int>* target_truth = nullptr);

/// Source-free adaptation; prepares the classifier first when needed.
std::pair<Model, TrainReport> train_sdf(const Model& pretrained, const Dataset& target, const HyperParams& hyper,
                                        const std::vector<int>* target_truth = nullptr);

/// Cross-entropy-only continuation with the same batch stream and schedule as train_uda.
std::pair<Model, TrainReport> train_ce_only(const Model& model, const Dataset& source, const HyperParams& hyper);

}  // namespace cdcl
