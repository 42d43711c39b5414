#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <cstring>
#include <limits>

#include "cdcl/presets.hpp"
#include "cdcl/report.hpp"
#include "cdcl/trainer.hpp"
#include "expect_error.hpp"
#include "support.hpp"

using namespace cdcl;

namespace {

Model tiny_model(std::uint64_t seed, bool bn = false) {
  EncoderConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dims = {3};
  cfg.feature_dim = 2;
  cfg.batch_norm = bn;
  return Model::init(cfg, 2, seed);
}

Gradients filled(const Model& m, double v) {
  Gradients g = m.zero_gradients();
  for (Matrix& t : g.per_tensor) for (double& x : t.flat()) x = v;
  return g;
}

bool same_tensors(const Model& a, const Model& b) {
  if (a.tensors().size() != b.tensors().size()) return false;
  for (std::size_t i = 0; i < a.tensors().size(); ++i) {
    if (a.tensors()[i].name != b.tensors()[i].name || !(a.tensors()[i].value == b.tensors()[i].value)) return false;
  }
  return true;
}

// Classifier whose logits put all mass on a fixed class per input sign.
Model sign_model() {
  EncoderConfig cfg;
  cfg.input_dim = 2;
  cfg.feature_dim = 2;
  Model m = Model::init(cfg, 2, 0);
  m.find("proj.weight")->value = testkit::from_rows({{1, 0}, {0, 1}});
  m.find("proj.bias")->value = Matrix(1, 2);
  m.find("classifier.weight")->value = testkit::from_rows({{1, 0}, {-1, 0}});
  m.find("classifier.bias")->value = Matrix(1, 2);
  return m;
}

HyperParams quick_hyper(std::uint64_t seed) {
  HyperParams h = benchmark_preset(seed).hyper;
  h.epochs = 3;
  h.iters_per_epoch = 10;
  h.pretrain_epochs = 10;
  return h;
}

}  // namespace

TEST(LrSchedule, Boundaries) {
  EXPECT_EQ(lr_schedule(0.01, 0.0, 0.75), 0.01);
  for (double p : {0.0, 0.3, 1.0}) EXPECT_EQ(lr_schedule(0.02, p, 0.0), 0.02);
  EXPECT_CDCL_ERROR(lr_schedule(0.01, 1.5, 0.75), ErrorCode::InvalidConfig);
  EXPECT_CDCL_ERROR(lr_schedule(0.01, -0.1, 0.75), ErrorCode::InvalidConfig);
}

TEST(LrSchedule, EndOfTrainingValue) {
  using boost::multiprecision::cpp_bin_float_100;
  const cpp_bin_float_100 exact = cpp_bin_float_100("0.01") * boost::multiprecision::pow(cpp_bin_float_100(11), cpp_bin_float_100("-0.75"));
  EXPECT_NEAR(lr_schedule(0.01, 1.0, 0.75), exact.convert_to<double>(), 1e-18);
  EXPECT_NEAR(lr_schedule(0.01, 1.0, 0.75), 1.6556e-3, 1e-7);
}

TEST(LrSchedule, NonIncreasingInProgress) {
  for (double b : {0.0, 0.25, 0.75, 2.0}) {
    double previous = lr_schedule(1.0, 0.0, b);
    for (int i = 1; i <= 100; ++i) {
      const double v = lr_schedule(1.0, i / 100.0, b);
      EXPECT_LE(v, previous);
      previous = v;
    }
  }
}

TEST(Sgd, PlainStepSubtractsTheGradient) {
  Model m = tiny_model(1);
  const Model before = m;
  VelocityState v = zero_velocity(m);
  sgd_step(m, filled(m, 0.25), {1.0, 1.0}, 0.0, v);
  for (std::size_t i = 0; i < m.tensors().size(); ++i) {
    auto a = before.tensors()[i].value.flat();
    auto b = m.tensors()[i].value.flat();
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(b[k], a[k] - 0.25);
  }
}

TEST(Sgd, ZeroGradientLeavesTheModel) {
  Model m = tiny_model(2);
  const Model before = m;
  VelocityState v = zero_velocity(m);
  sgd_step(m, m.zero_gradients(), {0.1, 0.1}, 0.9, v);
  EXPECT_TRUE(same_tensors(m, before));
}

TEST(Sgd, TwoMomentumStepsMatchTheUnrolledRecurrence) {
  Model m = tiny_model(3);
  const Model before = m;
  VelocityState v = zero_velocity(m);
  const double g1 = 0.3, g2 = -0.7, lr_b = 0.05, lr_n = 0.2, mu = 0.9;
  sgd_step(m, filled(m, g1), {lr_b, lr_n}, mu, v);
  sgd_step(m, filled(m, g2), {lr_b, lr_n}, mu, v);
  // theta2 = theta0 - lr g1 - lr (mu g1 + g2)
  for (std::size_t i = 0; i < m.tensors().size(); ++i) {
    const Tensor& t = m.tensors()[i];
    const double lr = t.group == ParamGroup::Backbone ? lr_b : lr_n;
    auto a = before.tensors()[i].value.flat();
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double expected = t.receives_gradient() ? a[k] - lr * g1 - lr * (mu * g1 + g2) : a[k];
      EXPECT_NEAR(t.value.flat()[k], expected, 1e-15);
    }
  }
}

TEST(Sgd, FrozenAndStatisticTensorsAreUntouched) {
  EncoderConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dims = {3};
  cfg.batch_norm = true;
  Model m = prepare_source_free(Model::init(cfg, 2, 4));
  const Model before = m;
  VelocityState v = zero_velocity(m);
  sgd_step(m, filled(m, 1.0), {1.0, 1.0}, 0.5, v);
  for (std::size_t i = 0; i < m.tensors().size(); ++i) {
    if (!m.tensors()[i].receives_gradient()) EXPECT_TRUE(m.tensors()[i].value == before.tensors()[i].value) << m.tensors()[i].name;
  }
  EXPECT_TRUE(m.classifier_weight() == before.classifier_weight());
}

TEST(Sgd, ShapeMismatch) {
  Model m = tiny_model(5);
  VelocityState v = zero_velocity(m);
  Gradients g;
  EXPECT_CDCL_ERROR(sgd_step(m, g, {1, 1}, 0.0, v), ErrorCode::DimensionMismatch);
}

TEST(Evaluate, AllCorrectAllWrongAndPerClass) {
  const Model m = sign_model();
  const Matrix x = testkit::from_rows({{1, 0}, {2, 1}, {-1, 0}, {-3, 1}});
  EXPECT_EQ(evaluate(m, Dataset(x, {0, 0, 1, 1}, 2, Domain::Source), Domain::Source).accuracy, 1.0);
  EXPECT_EQ(evaluate(m, Dataset(x, {1, 1, 0, 0}, 2, Domain::Source), Domain::Source).accuracy, 0.0);
  const EvalResult r = evaluate(m, Dataset(x, {0, 0, 1, 0}, 2, Domain::Source), Domain::Source);
  ASSERT_TRUE(r.per_class[0] && r.per_class[1]);
  EXPECT_EQ(*r.per_class[0], 2.0 / 3.0);
  EXPECT_EQ(*r.per_class[1], 1.0);
  const Matrix y = testkit::from_rows({{1, 0}, {2, 1}, {-1, 0}, {3, 1}});
  const EvalResult half = evaluate(m, Dataset(y, {0, 0, 1, 1}, 2, Domain::Source), Domain::Source);
  EXPECT_EQ(*half.per_class[0], 1.0);
  EXPECT_EQ(*half.per_class[1], 0.5);
  EXPECT_EQ(half.mean_class_accuracy, 0.75);
  EXPECT_EQ(half.accuracy, 0.75);
}

TEST(Evaluate, AbsentClassIsSkippedInTheMean) {
  const Model m = sign_model();
  const EvalResult r = evaluate(m, Dataset(testkit::from_rows({{1, 0}, {-1, 0}}), {0, 0}, 2, Domain::Source), Domain::Source);
  EXPECT_FALSE(r.per_class[1]);
  EXPECT_EQ(r.mean_class_accuracy, 0.5);
}

TEST(Evaluate, NeedsLabels) {
  const Model m = sign_model();
  try {
    evaluate(m, Dataset(testkit::from_rows({{1, 0}}), {kUnlabeled}, 2, Domain::Target), Domain::Target);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    EXPECT_NE(std::string(e.what()).find("labels required"), std::string::npos);
  }
}

TEST(Pretrain, SeparableBlobsAreLearned) {
  ShiftConfig sc;
  sc.classes = 3;
  sc.dim = 4;
  sc.per_class_count = 100;
  sc.cluster_stddev = 0.5;
  sc.seed = 21;
  const ShiftedPair p = generate_shifted_pair(sc);
  EncoderConfig cfg = benchmark_preset().encoder;
  cfg.input_dim = 4;
  HyperParams h;
  h.seed = 21;
  const PretrainResult r = pretrain_source(p.source, cfg, h);
  EXPECT_GE(r.val_accuracy, 0.95);

  // Nearest class mean is a closed-form linear classifier on the same split.
  const auto [train, val] = pretrain_split(p.source, h);
  Matrix means(3, 4);
  std::vector<double> counts(3, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto y = static_cast<std::size_t>(train.labels()[i]);
    counts[y] += 1;
    for (std::size_t k = 0; k < 4; ++k) means(y, k) += train.features()(i, k);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < 3; ++m) {
      double d = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        const double diff = val.features()(i, k) - means(m, k) / counts[m];
        d += diff * diff;
      }
      if (d < best_d) best_d = d, best = m;
    }
    correct += best == static_cast<std::size_t>(val.labels()[i]);
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(val.size()), 0.95);
  EXPECT_EQ(r.val_history.size(), h.pretrain_epochs + 1);
  EXPECT_EQ(r.val_history[r.best_epoch], r.val_accuracy);
  for (std::size_t e = 0; e < r.best_epoch; ++e) EXPECT_LT(r.val_history[e], r.val_accuracy);
}

TEST(Pretrain, ZeroEpochsReturnsTheInitialModel) {
  const BenchmarkPreset bp = benchmark_preset(4);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  HyperParams h = bp.hyper;
  h.pretrain_epochs = 0;
  const PretrainResult r = pretrain_source(p.source, bp.encoder, h);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_EQ(r.val_history.size(), 1u);
  const auto [train, val] = pretrain_split(p.source, h);
  EXPECT_EQ(r.val_accuracy, evaluate(r.model, val, Domain::Source).accuracy);
  EXPECT_TRUE(same_tensors(r.model, Model::init(bp.encoder, 4, derive_seed(h.seed, 11))));
}

TEST(Pretrain, SameSeedSameSnapshot) {
  const BenchmarkPreset bp = benchmark_preset(5);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  const HyperParams h = quick_hyper(5);
  const PretrainResult a = pretrain_source(p.source, bp.encoder, h);
  const PretrainResult b = pretrain_source(p.source, bp.encoder, h);
  EXPECT_TRUE(same_tensors(a.model, b.model));
  EXPECT_EQ(a.val_history, b.val_history);
}

TEST(Pretrain, UnshiftedTargetScoresLikeValidation) {
  double gap = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    BenchmarkPreset bp = benchmark_preset(seed);
    bp.shift.rotation_angle = 0.0;
    bp.shift.translation.assign(bp.shift.dim, 0.0);
    const ShiftedPair p = generate_shifted_pair(bp.shift);
    const PretrainResult r = pretrain_source(p.source, bp.encoder, bp.hyper);
    gap += evaluate(r.model, p.target.with_labels(p.target_truth), Domain::Target).accuracy - r.val_accuracy;
  }
  EXPECT_LE(std::abs(gap / 5.0), 0.02);
}

TEST(TrainUda, ZeroLambdaMatchesCrossEntropyOnly) {
  const BenchmarkPreset bp = benchmark_preset(6);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  HyperParams h = quick_hyper(6);
  const Model start = pretrain_source(p.source, bp.encoder, h).model;
  h.lambda = 0.0;
  const auto [uda, ur] = train_uda(start, p.source, p.target, h);
  const auto [ce, cr] = train_ce_only(start, p.source, h);
  ASSERT_EQ(ur.iteration_losses.size(), cr.iteration_losses.size());
  for (std::size_t i = 0; i < ur.iteration_losses.size(); ++i) EXPECT_NEAR(ur.iteration_losses[i], cr.iteration_losses[i], 1e-12);
  EXPECT_TRUE(same_tensors(uda, ce));
}

TEST(TrainUda, EverythingFilteredMatchesCrossEntropyOnly) {
  const BenchmarkPreset bp = benchmark_preset(7);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  HyperParams h = quick_hyper(7);
  const Model start = pretrain_source(p.source, bp.encoder, h).model;
  h.confidence_threshold = std::nextafter(1.0, 2.0);
  const auto [uda, ur] = train_uda(start, p.source, p.target, h, &p.target_truth);
  const auto [ce, cr] = train_ce_only(start, p.source, h);
  EXPECT_EQ(ur.iteration_losses, cr.iteration_losses);
  for (const EpochStats& e : ur.epochs) {
    EXPECT_EQ(e.retained_fraction, 0.0);
    EXPECT_EQ(e.losses.at(kCdcSourceComponent), 0.0);
    EXPECT_EQ(e.losses.at(kCdcTargetComponent), 0.0);
  }
}

TEST(TrainUda, RejectsLabeledTargets) {
  const BenchmarkPreset bp = benchmark_preset(8);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  const Model m = Model::init(bp.encoder, 4, 1);
  EXPECT_CDCL_ERROR(train_uda(m, p.source, p.target.with_labels(p.target_truth), bp.hyper), ErrorCode::InvalidConfig);
  const std::vector<int> short_truth(3, 0);
  EXPECT_CDCL_ERROR(train_uda(m, p.source, p.target, bp.hyper, &short_truth), ErrorCode::DimensionMismatch);
}

TEST(TrainUda, NonFiniteLossIsReported) {
  const BenchmarkPreset bp = benchmark_preset(9);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  Model m = Model::init(bp.encoder, 4, 1);
  m.find("classifier.bias")->value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_CDCL_ERROR(train_uda(m, p.source, p.target, quick_hyper(9)), ErrorCode::NumericalFailure);
  EXPECT_CDCL_ERROR(train_ce_only(m, p.source, quick_hyper(9)), ErrorCode::NumericalFailure);
}

TEST(TrainUda, PseudoLabelQualityTrendsUpward) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const BenchmarkPreset bp = benchmark_preset(seed);
    const ShiftedPair p = generate_shifted_pair(bp.shift);
    const Model start = pretrain_source(p.source, bp.encoder, bp.hyper).model;
    const auto [m, r] = train_uda(start, p.source, p.target, bp.hyper, &p.target_truth);
    for (std::size_t e = 1; e < r.epochs.size(); ++e) {
      EXPECT_GE(*r.epochs[e].pseudo_label_accuracy, *r.epochs[e - 1].pseudo_label_accuracy - 0.02) << "seed " << seed;
      EXPECT_GE(r.epochs[e].retained_fraction, r.epochs[e - 1].retained_fraction - 0.02) << "seed " << seed;
    }
  }
}

TEST(TrainSdf, ZeroEpochsOnlyPrepares) {
  const BenchmarkPreset bp = source_free_preset(10);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  const Model pre = Model::init(bp.encoder, 4, 3);
  HyperParams h = bp.hyper;
  h.epochs = 0;
  h.init_target_bn_from_source = false;
  const auto [m, r] = train_sdf(pre, p.target, h);
  EXPECT_TRUE(same_tensors(m, prepare_source_free(pre)));
  EXPECT_TRUE(r.iteration_losses.empty());
  const Model ready = prepare_source_free(pre);
  EXPECT_TRUE(same_tensors(train_sdf(ready, p.target, h).first, ready));
}

TEST(TrainSdf, ClassifierStaysFrozen) {
  const BenchmarkPreset bp = source_free_preset(11);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  const Model pre = pretrain_source(p.source, bp.encoder, quick_hyper(11)).model;
  const auto [m, r] = train_sdf(pre, p.target, quick_hyper(11), &p.target_truth);
  EXPECT_TRUE(m.classifier_weight() == prepare_source_free(pre).classifier_weight());
  EXPECT_EQ(m.classifier_bias(), nullptr);
  EXPECT_TRUE(m.source_free_ready());
  ASSERT_TRUE(r.target.has_value());
  for (double v : r.iteration_losses) EXPECT_TRUE(std::isfinite(v));
}

TEST(TrainReportJson, FieldNames) {
  const BenchmarkPreset bp = benchmark_preset(12);
  const ShiftedPair p = generate_shifted_pair(bp.shift);
  const HyperParams h = quick_hyper(12);
  const Model start = Model::init(bp.encoder, 4, 1);
  auto [m, r] = train_uda(start, p.source, p.target, h, &p.target_truth);
  r.config = {{"mode", "standard"}};
  const nlohmann::json j = to_json(r);
  for (const char* key : {"epochs", "losses", "retained_fraction", "pseudo_label_accuracy", "target_accuracy",
                          "mean_class_accuracy", "per_class_accuracy", "seed", "config"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_FALSE(j.contains("wall_clock_seconds"));
  EXPECT_EQ(j["epochs"], 3);
  EXPECT_EQ(j["losses"][0].size(), 4u);
  EXPECT_TRUE(j["losses"][0].contains("total"));
  EXPECT_EQ(j["config"]["mode"], "standard");
  EXPECT_EQ(j["target_accuracy"].get<double>(), r.target->accuracy);
  EXPECT_TRUE(timing_json(r).contains("wall_clock_seconds"));
  const nlohmann::json e = to_json(*r.target);
  EXPECT_EQ(e["per_class_accuracy"].size(), 4u);
}

TEST(HyperParamsCheck, RejectsBadValues) {
  auto bad = [](auto change) {
    HyperParams h;
    change(h);
    EXPECT_CDCL_ERROR(h.validate(), ErrorCode::InvalidConfig);
  };
  bad([](HyperParams& h) { h.tau = 0; });
  bad([](HyperParams& h) { h.lambda = -1; });
  bad([](HyperParams& h) { h.momentum = 1; });
  bad([](HyperParams& h) { h.lr_new = -1; });
  bad([](HyperParams& h) { h.batch_size = 0; });
  bad([](HyperParams& h) { h.train_ratio = 1; });
  bad([](HyperParams& h) { h.confidence_threshold = std::nan(""); });
  HyperParams ok;
  EXPECT_NO_THROW(ok.validate());
}
