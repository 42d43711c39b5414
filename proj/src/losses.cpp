#include "cdcl/losses.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "cdcl/error.hpp"
#include "cdcl/kernels.hpp"
#include "cdcl/numerics.hpp"

namespace cdcl {

const char* to_string(PairMode m) {
  switch (m) {
    case PairMode::CrossDomain: return "cross-domain";
    case PairMode::InDomain: return "in-domain";
    case PairMode::CombinedDomain: return "combined-domain";
    case PairMode::CrossSourceAnchorsOnly: return "source-anchors";
    case PairMode::CrossTargetAnchorsOnly: return "target-anchors";
  }
  return "unknown";
}

PairMode parse_pair_mode(std::string_view s) {
  for (PairMode m : {PairMode::CrossDomain, PairMode::InDomain, PairMode::CombinedDomain,
                     PairMode::CrossSourceAnchorsOnly, PairMode::CrossTargetAnchorsOnly}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown pair mode '" + std::string(s) + "'");
}

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::TemperatureNonPositive, "tau must be > 0, got " + std::to_string(tau));
}

}  // namespace

double info_nce(std::span<const double> anchor, const Matrix& positives, const Matrix& negatives, double tau,
                InfoNceGrad* grad) {
  check_tau(tau);
  if (positives.rows() == 0) throw Error(ErrorCode::EmptyPositives, "info_nce needs at least one positive");
  const std::size_t d = anchor.size();
  if (positives.cols() != d || (negatives.rows() > 0 && negatives.cols() != d)) {
    throw Error(ErrorCode::DimensionMismatch, "info_nce vector dimensions differ");
  }
  std::vector<double> neg_logits(negatives.rows());
  for (std::size_t n = 0; n < negatives.rows(); ++n) neg_logits[n] = dot(anchor, negatives.row(n)) / tau;

  if (grad) {
    grad->anchor.assign(d, 0.0);
    grad->positives = Matrix(positives.rows(), d);
    grad->negatives = Matrix(negatives.rows(), d);
  }
  std::vector<double> neg_coeff(negatives.rows(), 0.0);
  double loss = 0.0;
  std::vector<double> logits(negatives.rows() + 1);
  for (std::size_t p = 0; p < positives.rows(); ++p) {
    logits[0] = dot(anchor, positives.row(p)) / tau;
    std::copy(neg_logits.begin(), neg_logits.end(), logits.begin() + 1);
    loss += log_sum_exp(logits) - logits[0];
    if (grad) {
      softmax_inplace(logits);
      // d/d(similarity) = (softmax - indicator) / tau
      const double coeff_pos = (logits[0] - 1.0) / tau;
      auto u_row = grad->positives.row(p);
      auto v_pos = positives.row(p);
      for (std::size_t k = 0; k < d; ++k) {
        grad->anchor[k] += coeff_pos * v_pos[k];
        u_row[k] += coeff_pos * anchor[k];
      }
      for (std::size_t n = 0; n < negatives.rows(); ++n) neg_coeff[n] += logits[n + 1] / tau;
    }
  }
  if (grad) {
    for (std::size_t n = 0; n < negatives.rows(); ++n) {
      auto v_neg = negatives.row(n);
      auto g_row = grad->negatives.row(n);
      for (std::size_t k = 0; k < d; ++k) {
        grad->anchor[k] += neg_coeff[n] * v_neg[k];
        g_row[k] += neg_coeff[n] * anchor[k];
      }
    }
  }
  return loss;
}

double cdc_anchor_loss(std::span<const double> anchor, const Matrix& candidates, std::span<const int> labels,
                       int anchor_label, double tau, AnchorGrad* grad) {
  check_tau(tau);
  const std::size_t d = anchor.size();
  if (labels.size() != candidates.rows()) throw Error(ErrorCode::DimensionMismatch, "one label per candidate");
  if (candidates.rows() > 0 && candidates.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "anchor and candidate dimensions differ");
  }
  if (grad) {
    grad->anchor.assign(d, 0.0);
    grad->candidates = Matrix(candidates.rows(), d);
  }
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += (anchor_label != kUnlabeled && l == anchor_label) ? 1 : 0;
  if (n_pos == 0) return 0.0;

  std::vector<double> logits(candidates.rows());
  double pos_sum = 0.0;
  for (std::size_t j = 0; j < candidates.rows(); ++j) {
    logits[j] = dot(anchor, candidates.row(j)) / tau;
    if (labels[j] == anchor_label) pos_sum += logits[j];
  }
  const double loss = log_sum_exp(logits) - pos_sum / static_cast<double>(n_pos);
  if (grad) {
    softmax_inplace(logits);
    for (std::size_t j = 0; j < candidates.rows(); ++j) {
      const double ind = labels[j] == anchor_label ? 1.0 / static_cast<double>(n_pos) : 0.0;
      const double coeff = (logits[j] - ind) / tau;
      auto c = candidates.row(j);
      auto gc = grad->candidates.row(j);
      for (std::size_t k = 0; k < d; ++k) {
        grad->anchor[k] += coeff * c[k];
        gc[k] += coeff * anchor[k];
      }
    }
  }
  return loss;
}

PairSelection select_pairs(const FeatureBatch& source, const FeatureBatch& target, PairMode mode) {
  if (!source.has_labels()) throw Error(ErrorCode::MissingPseudoLabels, "source batch carries no labels");
  if (!target.has_labels()) throw Error(ErrorCode::MissingPseudoLabels, "target batch carries no pseudo-labels");
  if (source.labels.size() != source.size() || target.labels.size() != target.size()) {
    throw Error(ErrorCode::DimensionMismatch, "label count differs from batch size");
  }
  auto label_of = [&](const SampleRef& r) {
    return r.domain == Domain::Source ? source.labels[r.index] : target.labels[r.index];
  };
  std::vector<SampleRef> src_valid, tgt_valid;
  for (std::size_t i = 0; i < source.labels.size(); ++i) {
    if (source.labels[i] != kUnlabeled) src_valid.push_back({Domain::Source, i});
  }
  for (std::size_t i = 0; i < target.labels.size(); ++i) {
    if (target.labels[i] != kUnlabeled) tgt_valid.push_back({Domain::Target, i});
  }

  PairSelection sel;
  sel.mode = mode;
  auto add_anchor = [&](const SampleRef& a, const std::vector<const std::vector<SampleRef>*>& pools) {
    std::vector<SampleRef> cand, pos;
    const int y = label_of(a);
    for (const auto* pool : pools) {
      for (const SampleRef& c : *pool) {
        if (c == a) continue;
        cand.push_back(c);
        if (label_of(c) == y) pos.push_back(c);
      }
    }
    sel.anchors.push_back(a);
    sel.candidates.push_back(std::move(cand));
    sel.positives.push_back(std::move(pos));
  };

  const bool source_anchors = mode != PairMode::CrossTargetAnchorsOnly;
  const bool target_anchors = mode != PairMode::CrossSourceAnchorsOnly;
  if (source_anchors) {
    for (const SampleRef& a : src_valid) {
      switch (mode) {
        case PairMode::InDomain: add_anchor(a, {&src_valid}); break;
        case PairMode::CombinedDomain: add_anchor(a, {&src_valid, &tgt_valid}); break;
        default: add_anchor(a, {&tgt_valid}); break;
      }
    }
  }
  if (target_anchors) {
    for (const SampleRef& a : tgt_valid) {
      switch (mode) {
        case PairMode::InDomain: add_anchor(a, {&tgt_valid}); break;
        case PairMode::CombinedDomain: add_anchor(a, {&src_valid, &tgt_valid}); break;
        default: add_anchor(a, {&src_valid}); break;
      }
    }
  }
  return sel;
}

namespace {

CdcResult evaluate_cdc(const FeatureBatch& source, const FeatureBatch& target, double tau,
                       const PairSelection& selection, bool want_grad) {
  check_tau(tau);
  const std::size_t d = source.normalized.cols();
  if (source.size() > 0 && target.size() > 0 && target.normalized.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "source and target feature dimensions differ");
  }
  const std::size_t width = source.size() > 0 ? d : target.normalized.cols();
  const std::size_t n_src = source.size();
  auto row_of = [&](const SampleRef& r) { return r.domain == Domain::Source ? r.index : n_src + r.index; };

  Matrix all(n_src + target.size(), width);
  for (std::size_t i = 0; i < n_src; ++i) std::copy_n(source.normalized.row(i).begin(), width, all.row(i).begin());
  for (std::size_t i = 0; i < target.size(); ++i) {
    std::copy_n(target.normalized.row(i).begin(), width, all.row(n_src + i).begin());
  }
  const Matrix sims = kernels::matmul_nt(all, all);

  CdcResult out;
  Matrix grad_all = want_grad ? Matrix(all.rows(), width) : Matrix();
  double sum_source = 0.0, sum_target = 0.0;
  std::vector<double> logits;
  for (std::size_t a = 0; a < selection.anchors.size(); ++a) {
    const auto& pos = selection.positives[a];
    const auto& cand = selection.candidates[a];
    if (pos.empty()) continue;
    const std::size_t ra = row_of(selection.anchors[a]);
    logits.resize(cand.size());
    for (std::size_t j = 0; j < cand.size(); ++j) logits[j] = sims(ra, row_of(cand[j])) / tau;
    double pos_sum = 0.0;
    for (const SampleRef& p : pos) pos_sum += sims(ra, row_of(p)) / tau;
    const double inv_pos = 1.0 / static_cast<double>(pos.size());
    const double loss = log_sum_exp(logits) - pos_sum * inv_pos;
    (selection.anchors[a].domain == Domain::Source ? sum_source : sum_target) += loss;

    if (want_grad) {
      softmax_inplace(logits);
      auto accumulate = [&](std::size_t rc, double coeff) {
        auto ga = grad_all.row(ra);
        auto gc = grad_all.row(rc);
        auto za = all.row(ra);
        auto zc = all.row(rc);
        for (std::size_t k = 0; k < width; ++k) {
          ga[k] += coeff * zc[k];
          gc[k] += coeff * za[k];
        }
      };
      for (std::size_t j = 0; j < cand.size(); ++j) accumulate(row_of(cand[j]), logits[j] / tau);
      for (const SampleRef& p : pos) accumulate(row_of(p), -inv_pos / tau);
    }
  }
  out.loss.components[kCdcSourceComponent] = sum_source;
  out.loss.components[kCdcTargetComponent] = sum_target;
  out.loss.total = sum_source + sum_target;
  if (want_grad) {
    out.grad_source = Matrix(n_src, width);
    out.grad_target = Matrix(target.size(), width);
    for (std::size_t i = 0; i < n_src; ++i) std::copy_n(grad_all.row(i).begin(), width, out.grad_source.row(i).begin());
    for (std::size_t i = 0; i < target.size(); ++i) {
      std::copy_n(grad_all.row(n_src + i).begin(), width, out.grad_target.row(i).begin());
    }
  }
  return out;
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes, bool allow_unlabeled) {
  if (labels.size() != rows) throw Error(ErrorCode::DimensionMismatch, "one label per row required");
  for (int l : labels) {
    if (allow_unlabeled && l == kUnlabeled) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l) + " outside [0, " +
                                                  std::to_string(classes) + ")");
    }
  }
}

}  // namespace

LossValue cdc_bidirectional(const FeatureBatch& source, const FeatureBatch& target, double tau,
                            const PairSelection& selection) {
  return evaluate_cdc(source, target, tau, selection, false).loss;
}

CdcResult cdc_bidirectional_grad(const FeatureBatch& source, const FeatureBatch& target, double tau,
                                 const PairSelection& selection) {
  return evaluate_cdc(source, target, tau, selection, true);
}

CrossEntropyResult cross_entropy_grad(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw Error(ErrorCode::EmptyInput, "cross_entropy of an empty batch");
  check_labels(labels, logits.rows(), logits.cols(), false);
  CrossEntropyResult out;
  out.grad_logits = Matrix(logits.rows(), logits.cols());
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  double sum = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const auto y = static_cast<std::size_t>(labels[r]);
    sum += log_sum_exp(row) - row[y];
    auto g = out.grad_logits.row(r);
    std::copy(row.begin(), row.end(), g.begin());
    softmax_inplace(g);
    g[y] -= 1.0;
    for (double& v : g) v *= inv_b;
  }
  out.value = sum * inv_b;
  return out;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw Error(ErrorCode::EmptyInput, "cross_entropy of an empty batch");
  check_labels(labels, logits.rows(), logits.cols(), false);
  double sum = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    sum += log_sum_exp(row) - row[static_cast<std::size_t>(labels[r])];
  }
  return sum / static_cast<double>(logits.rows());
}

SdfResult sdf_cdc_loss_grad(const FeatureBatch& target, const Matrix& prototypes, double tau) {
  check_tau(tau);
  if (!target.has_labels()) throw Error(ErrorCode::MissingPseudoLabels, "target batch carries no pseudo-labels");
  check_labels(target.labels, target.size(), prototypes.rows(), true);
  SdfResult out;
  out.grad_normalized = Matrix(target.size(), target.normalized.cols());
  std::size_t retained = 0;
  for (int l : target.labels) retained += l != kUnlabeled ? 1 : 0;
  if (retained == 0) return out;

  Matrix logits = kernels::matmul_nt(target.normalized, prototypes);
  logits *= 1.0 / tau;
  const double inv_n = 1.0 / static_cast<double>(retained);
  double sum = 0.0;
  std::vector<double> coeff(prototypes.rows());
  for (std::size_t r = 0; r < target.size(); ++r) {
    if (target.labels[r] == kUnlabeled) continue;
    auto row = logits.row(r);
    const auto y = static_cast<std::size_t>(target.labels[r]);
    sum += log_sum_exp(row) - row[y];
    std::copy(row.begin(), row.end(), coeff.begin());
    softmax_inplace(coeff);
    coeff[y] -= 1.0;
    auto g = out.grad_normalized.row(r);
    for (std::size_t m = 0; m < prototypes.rows(); ++m) {
      const double c = coeff[m] * inv_n / tau;
      auto w = prototypes.row(m);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += c * w[k];
    }
  }
  out.value = sum * inv_n;
  return out;
}

double sdf_cdc_loss(const FeatureBatch& target, const Matrix& prototypes, double tau) {
  return sdf_cdc_loss_grad(target, prototypes, tau).value;
}

ObjectiveEvaluation uda_objective(Model& model, const UdaBatch& batch, const ObjectiveSettings& settings,
                                  Mode mode) {
  if (!(settings.lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be >= 0");
  check_tau(settings.tau);
  ObjectiveEvaluation ev;
  const bool shared = batch.ce_inputs.empty();

  std::optional<LossNode> ce_node;
  if (!shared) {
    ce_node.emplace();
    ce_node->pass = model.forward(batch.ce_inputs, Domain::Source, mode);
  }
  LossNode src_node;
  src_node.pass = model.forward(batch.source_inputs, Domain::Source, mode);
  src_node.pass.features.labels = batch.source_labels;
  LossNode tgt_node;
  tgt_node.pass = model.forward(batch.target_inputs, Domain::Target, mode);
  tgt_node.pass.features.labels = batch.target_pseudo_labels;

  LossNode& ce_target = shared ? src_node : *ce_node;
  const std::vector<int>& ce_labels = shared ? batch.source_labels : batch.ce_labels;
  CrossEntropyResult ce = cross_entropy_grad(classify(model, ce_target.pass.features.raw), ce_labels);
  ce_target.grad_logits = std::move(ce.grad_logits);

  const PairSelection sel = select_pairs(src_node.pass.features, tgt_node.pass.features, settings.pair_mode);
  CdcResult cdc = cdc_bidirectional_grad(src_node.pass.features, tgt_node.pass.features, settings.tau, sel);
  cdc.grad_source *= settings.lambda;
  cdc.grad_target *= settings.lambda;
  src_node.grad_normalized = std::move(cdc.grad_source);
  tgt_node.grad_normalized = std::move(cdc.grad_target);

  ev.loss.components[kCeComponent] = ce.value;
  ev.loss.components[kCdcSourceComponent] = cdc.loss.components[kCdcSourceComponent];
  ev.loss.components[kCdcTargetComponent] = cdc.loss.components[kCdcTargetComponent];
  ev.loss.total = ce.value + settings.lambda * cdc.loss.total;

  if (ce_node) ev.graph.nodes.push_back(std::move(*ce_node));
  ev.graph.nodes.push_back(std::move(src_node));
  ev.graph.nodes.push_back(std::move(tgt_node));
  return ev;
}

ObjectiveEvaluation sdf_objective(Model& model, const Matrix& target_inputs, std::span<const int> pseudo_labels,
                                  double tau, Mode mode) {
  if (!model.source_free_ready()) {
    throw Error(ErrorCode::NotPrepared, "source-free objective needs a prepared, frozen classifier");
  }
  ObjectiveEvaluation ev;
  LossNode node;
  node.pass = model.forward(target_inputs, Domain::Target, mode);
  node.pass.features.labels.assign(pseudo_labels.begin(), pseudo_labels.end());
  SdfResult r = sdf_cdc_loss_grad(node.pass.features, model.classifier_weight(), tau);
  node.grad_normalized = std::move(r.grad_normalized);
  ev.loss.total = r.value;
  ev.loss.components[kSdfComponent] = r.value;
  ev.graph.nodes.push_back(std::move(node));
  return ev;
}

}  // namespace cdcl
