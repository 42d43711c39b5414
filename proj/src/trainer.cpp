#include "cdcl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "cdcl/error.hpp"
#include "cdcl/textio.hpp"

namespace cdcl {

namespace {

// Independent random streams derived from HyperParams::seed.
enum Stream : std::uint64_t {
  kSplitStream = 10,
  kInitStream = 11,
  kPretrainBatches = 12,
  kCeBatches = 20,
  kSourceBatches = 21,
  kTargetBatches = 22,
};

std::string fmt(double v) { return format_double(v); }

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(ErrorCode::NumericalFailure, std::string(what) + " became non-finite");
}

std::vector<int> gather(const std::vector<int>& labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

class EpochAccumulator {
 public:
  void add(const LossValue& v) {
    sums_["total"] += v.total;
    for (const auto& [k, x] : v.components) sums_[k] += x;
    ++count_;
  }
  std::map<std::string, double> means() const {
    std::map<std::string, double> out;
    for (const auto& [k, x] : sums_) out[k] = count_ ? x / static_cast<double>(count_) : 0.0;
    return out;
  }

 private:
  std::map<std::string, double> sums_;
  std::size_t count_ = 0;
};

double label_agreement(const PseudoLabelResult& pl, const std::vector<int>& truth) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += pl.labels[i] == truth[i] ? 1 : 0;
  return truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
}

void check_target(const Dataset& target, const std::vector<int>* truth) {
  if (target.has_any_label()) {
    throw Error(ErrorCode::InvalidConfig, "target data passed to training must be unlabeled");
  }
  if (truth && truth->size() != target.size()) {
    throw Error(ErrorCode::DimensionMismatch, "ground-truth sidecar length differs from the target set");
  }
}

double progress(std::size_t step, std::size_t total) {
  return total == 0 ? 0.0 : static_cast<double>(step) / static_cast<double>(total);
}

}  // namespace

void HyperParams::validate() const {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "tau must be > 0");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidConfig, "momentum must lie in [0, 1)");
  if (!(lr_backbone >= 0.0) || !(lr_new >= 0.0) || !(pretrain_lr >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "learning rates must be >= 0");
  }
  if (!(schedule_b >= 0.0)) throw Error(ErrorCode::InvalidConfig, "schedule_b must be >= 0");
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw Error(ErrorCode::InvalidConfig, "train_ratio must lie in (0, 1)");
  if (std::isnan(confidence_threshold)) throw Error(ErrorCode::InvalidConfig, "confidence_threshold is NaN");
}

std::map<std::string, std::string> HyperParams::describe() const {
  return {
      {"tau", fmt(tau)},
      {"lambda", fmt(lambda)},
      {"confidence_threshold", fmt(confidence_threshold)},
      {"lr_backbone", fmt(lr_backbone)},
      {"lr_new", fmt(lr_new)},
      {"schedule_b", fmt(schedule_b)},
      {"momentum", fmt(momentum)},
      {"epochs", std::to_string(epochs)},
      {"iters_per_epoch", std::to_string(iters_per_epoch)},
      {"batch_size", std::to_string(batch_size)},
      {"seed", std::to_string(seed)},
      {"kmeans_max_iters", std::to_string(kmeans_max_iters)},
      {"kmeans_tol", fmt(kmeans_tol)},
      {"share_ce_batch", share_ce_batch ? "true" : "false"},
      {"pair_mode", to_string(pair_mode)},
  };
}

double lr_schedule(double eta0, double p, double b) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "schedule progress must lie in [0, 1]");
  return eta0 * std::pow(1.0 + 10.0 * p, -b);
}

VelocityState zero_velocity(const Model& model) {
  VelocityState v;
  for (const Tensor& t : model.tensors()) v.per_tensor.emplace_back(t.value.rows(), t.value.cols());
  return v;
}

void sgd_step(Model& model, const Gradients& grads, const LearningRates& lr, double momentum, VelocityState& velocity) {
  auto tensors = model.tensors();
  if (grads.per_tensor.size() != tensors.size() || velocity.per_tensor.size() != tensors.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient/velocity state does not match the model");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor& t = tensors[i];
    if (!t.receives_gradient()) continue;
    const Matrix& g = grads.per_tensor[i];
    Matrix& v = velocity.per_tensor[i];
    if (g.size() != t.value.size() || v.size() != t.value.size()) {
      throw Error(ErrorCode::DimensionMismatch, "gradient shape for " + t.name);
    }
    const double rate = t.group == ParamGroup::Backbone ? lr.backbone : lr.new_layers;
    auto gv = g.flat();
    auto vv = v.flat();
    auto w = t.value.flat();
    for (std::size_t k = 0; k < w.size(); ++k) {
      vv[k] = momentum * vv[k] + gv[k];
      w[k] -= rate * vv[k];
    }
  }
}

EvalResult evaluate(const Model& model, const Dataset& labeled, Domain domain) {
  if (!labeled.fully_labeled()) throw Error(ErrorCode::InvalidConfig, "labels required");
  const FeatureBatch f = encode(model, labeled.features(), domain);
  const Matrix logits = classify(model, f.raw);
  const std::size_t classes = model.classes();
  std::vector<std::size_t> hits(classes, 0), counts(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t m = 1; m < row.size(); ++m) {
      if (row[m] > row[best]) best = m;
    }
    const auto y = static_cast<std::size_t>(labeled.labels()[i]);
    if (y >= classes) throw Error(ErrorCode::LabelOutOfRange, "label exceeds the model's class count");
    ++counts[y];
    if (best == y) {
      ++hits[y];
      ++correct;
    }
  }
  EvalResult r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(labeled.size());
  r.per_class.resize(classes);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t m = 0; m < classes; ++m) {
    if (counts[m] == 0) continue;
    r.per_class[m] = static_cast<double>(hits[m]) / static_cast<double>(counts[m]);
    sum += *r.per_class[m];
    ++present;
  }
  r.mean_class_accuracy = present ? sum / static_cast<double>(present) : 0.0;
  return r;
}

std::pair<Dataset, Dataset> pretrain_split(const Dataset& source, const HyperParams& hyper) {
  return split_train_val(source, hyper.train_ratio, derive_seed(hyper.seed, kSplitStream));
}

PretrainResult pretrain_source(const Dataset& source, const EncoderConfig& cfg, const HyperParams& hyper) {
  hyper.validate();
  if (!source.fully_labeled()) throw Error(ErrorCode::InvalidConfig, "pre-training needs a labeled source set");
  auto [train, val] = pretrain_split(source, hyper);
  PretrainResult out;
  out.model = Model::init(cfg, source.classes(), derive_seed(hyper.seed, kInitStream));
  out.val_accuracy = evaluate(out.model, val, Domain::Source).accuracy;
  out.val_history.push_back(out.val_accuracy);

  Model model = out.model;
  VelocityState velocity = zero_velocity(model);
  BatchSampler sampler(hyper.batch_size, derive_seed(hyper.seed, kPretrainBatches));
  const std::size_t total_steps = hyper.pretrain_epochs * hyper.pretrain_iters;
  std::size_t step = 0;
  for (std::size_t e = 0; e < hyper.pretrain_epochs; ++e) {
    for (std::size_t k = 0; k < hyper.pretrain_iters; ++k, ++step) {
      const auto idx = next_batch(sampler, train);
      EncodePass pass = model.forward(train.features().select_rows(idx), Domain::Source, Mode::Train);
      CrossEntropyResult ce = cross_entropy_grad(classify(model, pass.features.raw), gather(train.labels(), idx));
      require_finite(ce.value, "pre-training loss");
      LossGraph graph;
      graph.nodes.push_back({std::move(pass), std::move(ce.grad_logits), Matrix()});
      const Gradients grads = backward(model, graph);
      // Every layer is freshly initialized here, so all use the pre-training rate.
      const double lr = lr_schedule(hyper.pretrain_lr, progress(step, total_steps), hyper.schedule_b);
      sgd_step(model, grads, {lr, lr}, hyper.momentum, velocity);
    }
    const double acc = evaluate(model, val, Domain::Source).accuracy;
    out.val_history.push_back(acc);
    if (acc > out.val_accuracy) {
      out.val_accuracy = acc;
      out.best_epoch = e + 1;
      out.model = model;
    }
  }
  return out;
}

std::pair<Model, TrainReport> train_uda(const Model& initial, const Dataset& source, const Dataset& target,
                                        const HyperParams& hyper, const std::vector<int>* target_truth) {
  hyper.validate();
  check_target(target, target_truth);
  if (!source.fully_labeled()) throw Error(ErrorCode::InvalidConfig, "standard adaptation needs a labeled source set");
  const auto started = std::chrono::steady_clock::now();

  Model model = initial;
  if (hyper.init_target_bn_from_source) model.copy_domain_bn(Domain::Source, Domain::Target);
  VelocityState velocity = zero_velocity(model);
  BatchSampler ce_sampler(hyper.batch_size, derive_seed(hyper.seed, kCeBatches));
  BatchSampler src_sampler(hyper.batch_size, derive_seed(hyper.seed, kSourceBatches));
  BatchSampler tgt_sampler(hyper.batch_size, derive_seed(hyper.seed, kTargetBatches));
  const ObjectiveSettings settings{hyper.tau, hyper.lambda, hyper.pair_mode};

  TrainReport report;
  report.seed = hyper.seed;
  report.config = hyper.describe();
  const std::size_t total_steps = hyper.epochs * hyper.iters_per_epoch;
  std::size_t step = 0;
  for (std::size_t e = 0; e < hyper.epochs; ++e) {
    const PseudoLabelResult pl =
        generate_pseudo_labels(model, target.features(), AdaptationMode::Standard, &source, hyper.clustering());
    const std::vector<int> pseudo = pl.training_labels();
    EpochStats stats;
    stats.retained_fraction = pl.retained_fraction();
    if (target_truth) stats.pseudo_label_accuracy = label_agreement(pl, *target_truth);

    EpochAccumulator acc;
    for (std::size_t k = 0; k < hyper.iters_per_epoch; ++k, ++step) {
      UdaBatch batch;
      const auto ce_idx = next_batch(ce_sampler, source);
      if (hyper.share_ce_batch) {
        batch.source_inputs = source.features().select_rows(ce_idx);
        batch.source_labels = gather(source.labels(), ce_idx);
      } else {
        batch.ce_inputs = source.features().select_rows(ce_idx);
        batch.ce_labels = gather(source.labels(), ce_idx);
        const auto src_idx = next_batch(src_sampler, source);
        batch.source_inputs = source.features().select_rows(src_idx);
        batch.source_labels = gather(source.labels(), src_idx);
      }
      const auto tgt_idx = next_batch(tgt_sampler, target);
      batch.target_inputs = target.features().select_rows(tgt_idx);
      batch.target_pseudo_labels = gather(pseudo, tgt_idx);

      ObjectiveEvaluation ev = uda_objective(model, batch, settings, Mode::Train);
      require_finite(ev.loss.total, "adaptation loss");
      const Gradients grads = backward(model, ev.graph);
      const double p = progress(step, total_steps);
      sgd_step(model, grads, {lr_schedule(hyper.lr_backbone, p, hyper.schedule_b), lr_schedule(hyper.lr_new, p, hyper.schedule_b)},
               hyper.momentum, velocity);
      acc.add(ev.loss);
      report.iteration_losses.push_back(ev.loss.total);
    }
    stats.losses = acc.means();
    report.epochs.push_back(std::move(stats));
  }
  if (target_truth) report.target = evaluate(model, target.with_labels(*target_truth), Domain::Target);
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(report)};
}

std::pair<Model, TrainReport> train_sdf(const Model& pretrained, const Dataset& target, const HyperParams& hyper,
                                        const std::vector<int>* target_truth) {
  hyper.validate();
  check_target(target, target_truth);
  const auto started = std::chrono::steady_clock::now();

  Model model = pretrained.source_free_ready() ? pretrained : prepare_source_free(pretrained);
  if (hyper.init_target_bn_from_source) model.copy_domain_bn(Domain::Source, Domain::Target);
  VelocityState velocity = zero_velocity(model);
  BatchSampler tgt_sampler(hyper.batch_size, derive_seed(hyper.seed, kTargetBatches));

  TrainReport report;
  report.seed = hyper.seed;
  report.config = hyper.describe();
  const std::size_t total_steps = hyper.epochs * hyper.iters_per_epoch;
  std::size_t step = 0;
  for (std::size_t e = 0; e < hyper.epochs; ++e) {
    const PseudoLabelResult pl =
        generate_pseudo_labels(model, target.features(), AdaptationMode::SourceFree, nullptr, hyper.clustering());
    const std::vector<int> pseudo = pl.training_labels();
    EpochStats stats;
    stats.retained_fraction = pl.retained_fraction();
    if (target_truth) stats.pseudo_label_accuracy = label_agreement(pl, *target_truth);

    EpochAccumulator acc;
    for (std::size_t k = 0; k < hyper.iters_per_epoch; ++k, ++step) {
      const auto idx = next_batch(tgt_sampler, target);
      ObjectiveEvaluation ev =
          sdf_objective(model, target.features().select_rows(idx), gather(pseudo, idx), hyper.tau, Mode::Train);
      require_finite(ev.loss.total, "source-free loss");
      const Gradients grads = backward(model, ev.graph);
      const double p = progress(step, total_steps);
      sgd_step(model, grads, {lr_schedule(hyper.lr_backbone, p, hyper.schedule_b), lr_schedule(hyper.lr_new, p, hyper.schedule_b)},
               hyper.momentum, velocity);
      acc.add(ev.loss);
      report.iteration_losses.push_back(ev.loss.total);
    }
    stats.losses = acc.means();
    report.epochs.push_back(std::move(stats));
  }
  if (target_truth) report.target = evaluate(model, target.with_labels(*target_truth), Domain::Target);
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(report)};
}

std::pair<Model, TrainReport> train_ce_only(const Model& initial, const Dataset& source, const HyperParams& hyper) {
  hyper.validate();
  if (!source.fully_labeled()) throw Error(ErrorCode::InvalidConfig, "cross-entropy training needs a labeled source set");
  const auto started = std::chrono::steady_clock::now();
  Model model = initial;
  VelocityState velocity = zero_velocity(model);
  BatchSampler ce_sampler(hyper.batch_size, derive_seed(hyper.seed, kCeBatches));

  TrainReport report;
  report.seed = hyper.seed;
  report.config = hyper.describe();
  const std::size_t total_steps = hyper.epochs * hyper.iters_per_epoch;
  std::size_t step = 0;
  for (std::size_t e = 0; e < hyper.epochs; ++e) {
    EpochAccumulator acc;
    for (std::size_t k = 0; k < hyper.iters_per_epoch; ++k, ++step) {
      const auto idx = next_batch(ce_sampler, source);
      EncodePass pass = model.forward(source.features().select_rows(idx), Domain::Source, Mode::Train);
      CrossEntropyResult ce = cross_entropy_grad(classify(model, pass.features.raw), gather(source.labels(), idx));
      require_finite(ce.value, "cross-entropy loss");
      LossGraph graph;
      graph.nodes.push_back({std::move(pass), std::move(ce.grad_logits), Matrix()});
      const Gradients grads = backward(model, graph);
      const double p = progress(step, total_steps);
      sgd_step(model, grads, {lr_schedule(hyper.lr_backbone, p, hyper.schedule_b), lr_schedule(hyper.lr_new, p, hyper.schedule_b)},
               hyper.momentum, velocity);
      LossValue v;
      v.total = ce.value;
      v.components[kCeComponent] = ce.value;
      acc.add(v);
      report.iteration_losses.push_back(ce.value);
    }
    EpochStats stats;
    stats.losses = acc.means();
    report.epochs.push_back(std::move(stats));
  }
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(report)};
}

}  // namespace cdcl
