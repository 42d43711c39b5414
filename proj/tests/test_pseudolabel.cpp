#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cdcl/data.hpp"
#include "cdcl/numerics.hpp"
#include "cdcl/pseudolabel.hpp"
#include "expect_error.hpp"
#include "support.hpp"

using namespace cdcl;
using testkit::from_rows;

namespace {

PrototypeSet centers(const Matrix& m) { return {normalize_rows(m), PrototypeSource::SampleMeans}; }

// Best objective over every assignment of n points to k clusters: sum of the
// norms of the per-cluster sums.
double exhaustive_best(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<std::size_t> a(n, 0);
  double best = -1.0;
  while (true) {
    Matrix sums(k, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) sums(a[i], c) += x(i, c);
    double obj = 0.0;
    for (std::size_t m = 0; m < k; ++m) obj += norm2(sums.row(m));
    best = std::max(best, obj);
    std::size_t pos = 0;
    while (pos < n && ++a[pos] == k) a[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

Matrix noisy_points(std::mt19937_64& rng, const Matrix& c, std::size_t per, double spread, std::vector<int>* truth) {
  std::normal_distribution<double> noise(0.0, spread);
  Matrix x(c.rows() * per, c.cols());
  truth->clear();
  for (std::size_t m = 0; m < c.rows(); ++m)
    for (std::size_t j = 0; j < per; ++j) {
      const std::size_t i = m * per + j;
      for (std::size_t q = 0; q < c.cols(); ++q) x(i, q) = c(m, q) + noise(rng);
      truth->push_back(static_cast<int>(m));
    }
  return normalize_rows(x);
}

}  // namespace

TEST(SourcePrototypes, SingleSampleIsItsOwnCenter) {
  const Matrix z = from_rows({{0.6, 0.8}});
  const std::vector<int> y{0};
  const PrototypeSet p = source_prototypes(z, y, 1);
  EXPECT_DOUBLE_EQ(p.centers(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(p.centers(0, 1), 0.8);
}

TEST(SourcePrototypes, OrthogonalPairAverages) {
  const std::vector<int> y{0, 0};
  const PrototypeSet p = source_prototypes(from_rows({{1, 0}, {0, 1}}), y, 1);
  EXPECT_NEAR(p.centers(0, 0), 0.70710678118654752, 1e-15);
  EXPECT_NEAR(p.centers(0, 1), 0.70710678118654752, 1e-15);
}

TEST(SourcePrototypes, Errors) {
  const std::vector<int> y{0, 0};
  EXPECT_CDCL_ERROR(source_prototypes(from_rows({{1, 0}, {-1, 0}}), y, 1), ErrorCode::ZeroVector);
  EXPECT_CDCL_ERROR(source_prototypes(from_rows({{1, 0}, {0, 1}}), y, 2), ErrorCode::EmptyClass);
  const std::vector<int> bad{0, 3};
  EXPECT_CDCL_ERROR(source_prototypes(from_rows({{1, 0}, {0, 1}}), bad, 2), ErrorCode::LabelOutOfRange);
}

TEST(ClassifierPrototypes, ReturnsPreparedRows) {
  EncoderConfig cfg;
  cfg.input_dim = 3;
  cfg.feature_dim = 3;
  Model m = Model::init(cfg, 3, 1);
  m.find("classifier.weight")->value = from_rows({{2, 0, 0}, {0, 1, 0}, {0, 0, 5}});
  EXPECT_CDCL_ERROR(classifier_prototypes(m), ErrorCode::NotPrepared);
  m.prepare_source_free();
  const PrototypeSet p = classifier_prototypes(m);
  EXPECT_EQ(p.source, PrototypeSource::ClassifierWeights);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(p.centers(i, j), i == j ? 1.0 : 0.0);
}

TEST(KMeans, PointsAtCentersConvergeImmediately) {
  const Matrix c = from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const Matrix x = from_rows({{1, 0, 0}, {0, 0, 1}, {0, 1, 0}, {1, 0, 0}});
  const PseudoLabelResult r = spherical_kmeans(x, centers(c), 50, 1e-9);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_EQ(r.labels, (std::vector<int>{0, 2, 1, 0}));
  for (double v : r.confidences) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(KMeans, ZeroIterationsIsNearestCenterAssignment) {
  std::mt19937_64 rng(2);
  const Matrix x = normalize_rows(testkit::random_matrix(rng, 20, 4));
  const PrototypeSet init = centers(testkit::random_matrix(rng, 3, 4));
  const PseudoLabelResult r = spherical_kmeans(x, init, 0, 1e-9);
  EXPECT_EQ(r.iterations, 0u);
  ASSERT_EQ(r.objective_trace.size(), 1u);
  EXPECT_EQ(r.centers.flat().size(), init.centers.flat().size());
  for (std::size_t i = 0; i < r.centers.flat().size(); ++i) EXPECT_EQ(r.centers.flat()[i], init.centers.flat()[i]);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    int best = 0;
    for (std::size_t m = 1; m < 3; ++m)
      if (dot(x.row(i), init.centers.row(m)) > dot(x.row(i), init.centers.row(best))) best = static_cast<int>(m);
    EXPECT_EQ(r.labels[i], best);
  }
}

TEST(KMeans, AntipodalClustersReachTheExhaustiveOptimum) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Matrix axis = normalize_rows(testkit::random_matrix(rng, 1, 3));
    Matrix c(2, 3);
    for (std::size_t q = 0; q < 3; ++q) {
      c(0, q) = axis(0, q);
      c(1, q) = -axis(0, q);
    }
    std::vector<int> truth;
    const Matrix x = noisy_points(rng, c, 4, 0.2, &truth);
    Matrix init = c;
    init += testkit::random_matrix(rng, 2, 3, 0.5);
    const PseudoLabelResult r = spherical_kmeans(x, centers(init), 100, 0.0);
    EXPECT_NEAR(r.objective_trace.back(), exhaustive_best(x, 2), 1e-10);
  }
}

TEST(KMeans, ObjectiveNeverDecreases) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const Matrix x = normalize_rows(testkit::random_matrix(rng, 40, 5));
    const PseudoLabelResult r = spherical_kmeans(x, centers(testkit::random_matrix(rng, 4, 5)), 100, 0.0);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      EXPECT_GE(r.objective_trace[i], r.objective_trace[i - 1] - 1e-10);
  }
}

TEST(KMeans, ReturnedLabelsAreNearestToReturnedCenters) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Matrix x = normalize_rows(testkit::random_matrix(rng, 30, 3));
    const PseudoLabelResult r = spherical_kmeans(x, centers(testkit::random_matrix(rng, 3, 3)), 1 + t % 5, 1e-6);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double own = dot(x.row(i), r.centers.row(static_cast<std::size_t>(r.labels[i])));
      EXPECT_DOUBLE_EQ(own, r.confidences[i]);
      for (std::size_t m = 0; m < 3; ++m) EXPECT_LE(dot(x.row(i), r.centers.row(m)), own);
    }
  }
}

TEST(KMeans, TerminatesWithZeroTolerance) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = normalize_rows(testkit::random_matrix(rng, 200, 6));
    const PseudoLabelResult r = spherical_kmeans(x, centers(testkit::random_matrix(rng, 8, 6)), 1000, 0.0);
    EXPECT_LT(r.iterations, 1000u);
  }
}

TEST(KMeans, SingleClassAssignsEveryPoint) {
  std::mt19937_64 rng(7);
  const Matrix x = normalize_rows(testkit::random_matrix(rng, 10, 3));
  const PseudoLabelResult r = spherical_kmeans(x, centers(from_rows({{1, 1, 1}})), 10, 1e-9);
  for (int l : r.labels) EXPECT_EQ(l, 0);
  EXPECT_LE(r.iterations, 1u);
}

TEST(KMeans, RecoversWellSeparatedClusters) {
  std::mt19937_64 rng(8);
  const Matrix c = from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  std::vector<int> truth;
  const Matrix x = noisy_points(rng, c, 25, 0.05, &truth);
  Matrix init = c;
  for (double& v : init.flat()) v += 0.3;
  const PseudoLabelResult r = spherical_kmeans(x, centers(init), 100, 1e-9);
  EXPECT_EQ(r.labels, truth);
}

TEST(KMeans, IsDeterministic) {
  std::mt19937_64 rng(9);
  const Matrix x = normalize_rows(testkit::random_matrix(rng, 60, 4));
  const PrototypeSet init = centers(testkit::random_matrix(rng, 3, 4));
  const PseudoLabelResult a = spherical_kmeans(x, init, 100, 1e-9);
  const PseudoLabelResult b = spherical_kmeans(x, init, 100, 1e-9);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.objective_trace, b.objective_trace);
  EXPECT_EQ(a.centers.flat().size(), b.centers.flat().size());
  EXPECT_TRUE(std::equal(a.centers.flat().begin(), a.centers.flat().end(), b.centers.flat().begin()));
}

TEST(KMeans, Errors) {
  EXPECT_CDCL_ERROR(spherical_kmeans(Matrix(0, 2), centers(from_rows({{1, 0}})), 5, 0.0), ErrorCode::EmptyInput);
  EXPECT_CDCL_ERROR(spherical_kmeans(from_rows({{1, 0}}), centers(from_rows({{1, 0, 0}})), 5, 0.0),
                    ErrorCode::DimensionMismatch);
}

TEST(ConfidenceFilter, Thresholds) {
  PseudoLabelResult r;
  r.labels = {0, 1, 1};
  r.confidences = {0.3, 0.5, 1.0};
  EXPECT_EQ(filter_by_confidence(r, -1.0).retained, (std::vector<bool>{true, true, true}));
  const PseudoLabelResult half = filter_by_confidence(r, 0.5);
  EXPECT_EQ(half.retained, (std::vector<bool>{false, true, true}));
  EXPECT_EQ(half.training_labels(), (std::vector<int>{kUnlabeled, 1, 1}));
  EXPECT_NEAR(half.retained_fraction(), 2.0 / 3.0, 1e-15);
  const PseudoLabelResult none = filter_by_confidence(r, std::nextafter(1.0, 2.0));
  EXPECT_EQ(none.retained_fraction(), 0.0);
  for (int l : none.training_labels()) EXPECT_EQ(l, kUnlabeled);
}

TEST(ConfidenceFilter, RetainedFractionShrinksWithThreshold) {
  std::mt19937_64 rng(10);
  const Matrix x = normalize_rows(testkit::random_matrix(rng, 100, 3));
  const PseudoLabelResult r = spherical_kmeans(x, centers(testkit::random_matrix(rng, 3, 3)), 20, 1e-9);
  double previous = 1.0;
  for (double d = -1.0; d <= 1.0; d += 0.1) {
    const double f = filter_by_confidence(r, d).retained_fraction();
    EXPECT_LE(f, previous);
    previous = f;
  }
}

TEST(GeneratePseudoLabels, StandardNeedsSource) {
  EncoderConfig cfg;
  cfg.input_dim = 2;
  const Model m = Model::init(cfg, 2, 1);
  EXPECT_CDCL_ERROR(generate_pseudo_labels(m, from_rows({{1, 0}}), AdaptationMode::Standard, nullptr, {}),
                    ErrorCode::InvalidConfig);
  EXPECT_CDCL_ERROR(generate_pseudo_labels(m, from_rows({{1, 0}}), AdaptationMode::SourceFree, nullptr, {}),
                    ErrorCode::NotPrepared);
}

TEST(GeneratePseudoLabels, IdenticalDomainsMatchSourceLabels) {
  // With no shift and an encoder that keeps classes apart, every target sample
  // lands in its own class.
  ShiftConfig sc;
  sc.classes = 3;
  sc.dim = 2;
  sc.per_class_count = 40;
  sc.cluster_stddev = 0.2;
  sc.seed = 11;
  const ShiftedPair pair = generate_shifted_pair(sc);
  EncoderConfig cfg;
  cfg.input_dim = 2;
  cfg.feature_dim = 2;
  Model m = Model::init(cfg, 3, 1);
  m.find("proj.weight")->value = from_rows({{1, 0}, {0, 1}});
  m.find("proj.bias")->value = Matrix(1, 2);
  ClusteringSettings s;
  const PseudoLabelResult r = generate_pseudo_labels(m, pair.target.features(), AdaptationMode::Standard, &pair.source, s);
  EXPECT_EQ(r.labels, pair.target_truth);
  EXPECT_EQ(r.retained_fraction(), 1.0);
}
