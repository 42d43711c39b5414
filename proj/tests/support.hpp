#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cdcl/losses.hpp"
#include "cdcl/matrix.hpp"
#include "cdcl/model.hpp"
#include "cdcl/numerics.hpp"

namespace cdcl::testkit {

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

inline std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, std::size_t classes,
                                      double unlabeled_rate = 0.0) {
  std::uniform_int_distribution<int> cls(0, static_cast<int>(classes) - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> out(n);
  for (int& l : out) l = u(rng) < unlabeled_rate ? kUnlabeled : cls(rng);
  return out;
}

/// Batch whose raw features are `raw`, with normalized rows and labels attached.
inline FeatureBatch make_batch(const Matrix& raw, std::vector<int> labels, Domain domain) {
  FeatureBatch fb;
  fb.raw = raw;
  fb.normalized = normalize_rows(raw);
  fb.labels = std::move(labels);
  fb.domain = domain;
  return fb;
}

// Brute-force contrastive loss: every anchor, candidate and positive is found by
// scanning both batches, and every term is a plain exp/log.
struct NaiveCdc {
  double source_anchors = 0.0;
  double target_anchors = 0.0;
};

inline NaiveCdc naive_cdc(const Matrix& zs, const std::vector<int>& ys, const Matrix& zt, const std::vector<int>& yt,
                          double tau, PairMode mode) {
  struct Item {
    int domain;
    std::size_t index;
    int label;
    std::vector<double> z;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < zs.rows(); ++i) {
    items.push_back({0, i, ys[i], std::vector<double>(zs.row(i).begin(), zs.row(i).end())});
  }
  for (std::size_t i = 0; i < zt.rows(); ++i) {
    items.push_back({1, i, yt[i], std::vector<double>(zt.row(i).begin(), zt.row(i).end())});
  }
  auto sim = [](const Item& a, const Item& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.z.size(); ++k) s += a.z[k] * b.z[k];
    return s;
  };
  NaiveCdc out;
  for (std::size_t a = 0; a < items.size(); ++a) {
    const Item& anchor = items[a];
    if (anchor.label == kUnlabeled) continue;
    if (mode == PairMode::CrossSourceAnchorsOnly && anchor.domain != 0) continue;
    if (mode == PairMode::CrossTargetAnchorsOnly && anchor.domain != 1) continue;
    double denom = 0.0;
    std::vector<double> pos_sims;
    for (std::size_t c = 0; c < items.size(); ++c) {
      const Item& cand = items[c];
      if (c == a || cand.label == kUnlabeled) continue;
      const bool same_domain = cand.domain == anchor.domain;
      bool allowed = false;
      switch (mode) {
        case PairMode::InDomain: allowed = same_domain; break;
        case PairMode::CombinedDomain: allowed = true; break;
        default: allowed = !same_domain; break;
      }
      if (!allowed) continue;
      denom += std::exp(sim(anchor, cand) / tau);
      if (cand.label == anchor.label) pos_sims.push_back(sim(anchor, cand));
    }
    if (pos_sims.empty()) continue;
    double loss = 0.0;
    for (double s : pos_sims) loss += -std::log(std::exp(s / tau) / denom);
    loss /= static_cast<double>(pos_sims.size());
    (anchor.domain == 0 ? out.source_anchors : out.target_anchors) += loss;
  }
  return out;
}

/// Copies `features` into a Matrix row by row.
inline Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.begin()->size();
  Matrix m(rows.size(), cols);
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

/// Scalar loss of the trainable parameter vector plus its analytic gradient, for
/// finite-difference checks through the whole model.
struct ModelObjective {
  std::function<double(Model&)> value;
  std::function<std::vector<double>(Model&)> gradient;
};

inline GradCheckReport check_model_gradient(const Model& model, const ModelObjective& obj, double h, double tol) {
  Model probe = model;
  const std::vector<double> point = probe.trainable_values();
  const std::vector<double> analytic = obj.gradient(probe);
  auto f = [&](std::span<const double> theta) {
    Model m = model;
    m.set_trainable_values(theta);
    return obj.value(m);
  };
  return finite_diff_check(f, analytic, point, h, tol);
}

}  // namespace cdcl::testkit
