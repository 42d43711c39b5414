#include "cdcl/model.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "cdcl/error.hpp"
#include "cdcl/kernels.hpp"
#include "cdcl/numerics.hpp"

namespace cdcl {

const char* to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }
const char* to_string(Activation a) { return a == Activation::ReLU ? "relu" : "tanh"; }

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw Error(ErrorCode::InvalidConfig, "unknown domain '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  throw Error(ErrorCode::InvalidConfig, "unknown activation '" + std::string(s) + "'");
}

void EncoderConfig::validate() const {
  if (input_dim == 0) throw Error(ErrorCode::InvalidConfig, "input_dim must be >= 1");
  if (feature_dim == 0) throw Error(ErrorCode::InvalidConfig, "feature_dim must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw Error(ErrorCode::InvalidConfig, "hidden dims must be >= 1");
  }
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (per_tensor.size() != other.per_tensor.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient sets from different models");
  }
  for (std::size_t i = 0; i < per_tensor.size(); ++i) {
    if (!per_tensor[i].empty()) per_tensor[i] += other.per_tensor[i];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (Matrix& g : per_tensor) g *= s;
  return *this;
}

namespace {

Tensor make_tensor(std::string name, Matrix value, bool trainable, ParamGroup group) {
  Tensor t;
  t.name = std::move(name);
  t.value = std::move(value);
  t.trainable = trainable;
  t.group = group;
  return t;
}

void append_bn(std::vector<Tensor>& out, const std::string& prefix, std::size_t width, ParamGroup group) {
  out.push_back(make_tensor(prefix + ".gamma", Matrix(1, width, 1.0), true, group));
  out.push_back(make_tensor(prefix + ".beta", Matrix(1, width, 0.0), true, group));
  out.push_back(make_tensor(prefix + ".running_mean", Matrix(1, width, 0.0), false, group));
  out.push_back(make_tensor(prefix + ".running_var", Matrix(1, width, 1.0), false, group));
}

std::vector<std::string> bn_slot_names(const EncoderConfig& cfg) {
  if (cfg.per_domain_bn) return {"source", "target"};
  return {"shared"};
}

// Tensor list in canonical order; values are placeholders until filled by init or a checkpoint.
std::vector<Tensor> layout_tensors(const EncoderConfig& cfg, std::size_t classes) {
  std::vector<Tensor> out;
  std::size_t in = cfg.input_dim;
  // A dense layer whose output reaches batch norm through affine maps only carries
  // no bias; BN's shift takes its place.
  auto add_dense = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out, ParamGroup g, bool bias) {
    out.push_back(make_tensor(name + ".weight", Matrix(fan_out, fan_in), true, g));
    if (bias) out.push_back(make_tensor(name + ".bias", Matrix(1, fan_out), true, g));
  };
  for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
    const std::string name = "hidden" + std::to_string(i);
    add_dense(name, in, cfg.hidden_dims[i], ParamGroup::Backbone, !cfg.batch_norm);
    if (cfg.batch_norm) {
      for (const auto& slot : bn_slot_names(cfg)) append_bn(out, name + ".bn." + slot, cfg.hidden_dims[i], ParamGroup::Backbone);
    }
    in = cfg.hidden_dims[i];
  }
  add_dense("proj", in, cfg.feature_dim, ParamGroup::Backbone, !cfg.bottleneck);
  if (cfg.bottleneck) {
    add_dense("bottleneck", cfg.feature_dim, cfg.feature_dim, ParamGroup::NewLayer, false);
    for (const auto& slot : bn_slot_names(cfg)) append_bn(out, "bottleneck.bn." + slot, cfg.feature_dim, ParamGroup::NewLayer);
  }
  out.push_back(make_tensor("classifier.weight", Matrix(classes, cfg.feature_dim), true, ParamGroup::NewLayer));
  if (cfg.classifier_bias) {
    out.push_back(make_tensor("classifier.bias", Matrix(1, classes), true, ParamGroup::NewLayer));
  }
  return out;
}

double activate(Activation a, double x) { return a == Activation::ReLU ? (x > 0.0 ? x : 0.0) : std::tanh(x); }

double activation_slope(Activation a, double out) {
  return a == Activation::ReLU ? (out > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

void add_row_vector(Matrix& m, const Matrix& row) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto dst = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] += row(0, c);
  }
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
  }
  return out;
}

}  // namespace

Model Model::init(const EncoderConfig& cfg, std::size_t classes, std::uint64_t seed) {
  cfg.validate();
  if (classes == 0) throw Error(ErrorCode::InvalidConfig, "class count must be >= 1");
  Model m;
  m.cfg_ = cfg;
  m.classes_ = classes;
  m.tensors_ = layout_tensors(cfg, classes);
  m.build_layout();

  std::mt19937_64 rng(seed);
  for (Tensor& t : m.tensors_) {
    const bool is_weight = t.name.ends_with(".weight");
    const bool is_bias = t.name.ends_with(".bias");
    if (!is_weight && !is_bias) continue;
    // Both weight and bias of a dense layer share the weight's fan-in.
    std::size_t fan_in = t.value.cols();
    if (is_bias) {
      const Tensor* w = m.find(t.name.substr(0, t.name.size() - 5) + ".weight");
      fan_in = w->value.cols();
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.value.flat()) v = dist(rng);
  }
  return m;
}

Model Model::from_tensors(const EncoderConfig& cfg, std::size_t classes, bool classifier_frozen,
                          std::vector<Tensor> tensors) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  m.classes_ = classes;
  m.tensors_ = layout_tensors(cfg, classes);
  if (tensors.size() != m.tensors_.size()) {
    throw Error(ErrorCode::FormatError, "expected " + std::to_string(m.tensors_.size()) + " tensors, got " +
                                            std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor& slot = m.tensors_[i];
    if (tensors[i].name != slot.name) {
      throw Error(ErrorCode::FormatError, "expected tensor '" + slot.name + "', got '" + tensors[i].name + "'");
    }
    if (tensors[i].value.rows() != slot.value.rows() || tensors[i].value.cols() != slot.value.cols()) {
      throw Error(ErrorCode::FormatError, "tensor '" + slot.name + "' has the wrong shape");
    }
    slot.value = std::move(tensors[i].value);
  }
  m.build_layout();
  m.tensors_[m.classifier_weight_].frozen = classifier_frozen;
  return m;
}

void Model::build_layout() {
  stages_.clear();
  classifier_bias_.reset();
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].name == name) return i;
    }
    throw Error(ErrorCode::FormatError, "missing tensor '" + name + "'");
  };
  auto bn_slots = [&](const std::string& prefix) {
    std::vector<detail::BnSlot> slots;
    for (const auto& slot : bn_slot_names(cfg_)) {
      const std::string p = prefix + ".bn." + slot;
      slots.push_back({index_of(p + ".gamma"), index_of(p + ".beta"), index_of(p + ".running_mean"),
                       index_of(p + ".running_var")});
    }
    return slots;
  };
  for (std::size_t i = 0; i < cfg_.hidden_dims.size(); ++i) {
    const std::string name = "hidden" + std::to_string(i);
    detail::Stage s{index_of(name + ".weight"), std::nullopt, true, {}};
    if (cfg_.batch_norm) {
      s.bn = bn_slots(name);
    } else {
      s.bias = index_of(name + ".bias");
    }
    stages_.push_back(std::move(s));
  }
  stages_.push_back({index_of("proj.weight"), std::nullopt, false, {}});
  if (!cfg_.bottleneck) stages_.back().bias = index_of("proj.bias");
  if (cfg_.bottleneck) {
    stages_.push_back({index_of("bottleneck.weight"), std::nullopt, false, bn_slots("bottleneck")});
  }
  classifier_weight_ = index_of("classifier.weight");
  if (cfg_.classifier_bias) classifier_bias_ = index_of("classifier.bias");
}

const Tensor* Model::find(std::string_view name) const {
  for (const Tensor& t : tensors_) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

Tensor* Model::find(std::string_view name) {
  for (Tensor& t : tensors_) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const Matrix* Model::classifier_bias() const {
  return classifier_bias_ ? &tensors_[*classifier_bias_].value : nullptr;
}

std::size_t Model::slot_index(const detail::Stage& stage, Domain d) const {
  if (stage.bn.size() == 1) return 0;
  return d == Domain::Source ? 0 : 1;
}

EncodePass Model::forward(const Matrix& inputs, Domain domain, Mode mode) {
  return run_forward(inputs, domain, mode, mode == Mode::Train);
}

EncodePass Model::forward_eval(const Matrix& inputs, Domain domain) const {
  // run_forward only mutates running statistics when update_stats is set.
  return const_cast<Model*>(this)->run_forward(inputs, domain, Mode::Eval, false);
}

EncodePass Model::run_forward(const Matrix& inputs, Domain domain, Mode mode, bool update_stats) {
  if (inputs.cols() != cfg_.input_dim) {
    throw Error(ErrorCode::DimensionMismatch, "input width " + std::to_string(inputs.cols()) + " != " +
                                                  std::to_string(cfg_.input_dim));
  }
  if (inputs.rows() == 0) throw Error(ErrorCode::EmptyInput, "empty input batch");
  EncodePass pass;
  pass.domain = domain;
  Matrix h = inputs;
  const double batch = static_cast<double>(inputs.rows());
  for (const detail::Stage& stage : stages_) {
    detail::StageCache cache;
    cache.input = h;
    Matrix a = kernels::matmul_nt(h, tensors_[stage.weight].value);
    if (stage.bias) add_row_vector(a, tensors_[*stage.bias].value);
    if (!stage.bn.empty()) {
      const detail::BnSlot& slot = stage.bn[slot_index(stage, domain)];
      const Matrix& gamma = tensors_[slot.gamma].value;
      const Matrix& beta = tensors_[slot.beta].value;
      Matrix& run_mean = tensors_[slot.mean].value;
      Matrix& run_var = tensors_[slot.var].value;
      const std::size_t width = a.cols();
      std::vector<double> mean(width, 0.0), var(width, 0.0);
      if (mode == Mode::Train) {
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < width; ++c) mean[c] += a(r, c);
        }
        for (double& v : mean) v /= batch;
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < width; ++c) {
            const double dlt = a(r, c) - mean[c];
            var[c] += dlt * dlt;
          }
        }
        for (double& v : var) v /= batch;
        if (update_stats) {
          const double unbiased = a.rows() > 1 ? batch / (batch - 1.0) : 1.0;
          for (std::size_t c = 0; c < width; ++c) {
            run_mean(0, c) = (1.0 - kBnMomentum) * run_mean(0, c) + kBnMomentum * mean[c];
            run_var(0, c) = (1.0 - kBnMomentum) * run_var(0, c) + kBnMomentum * var[c] * unbiased;
          }
        }
      } else {
        for (std::size_t c = 0; c < width; ++c) {
          mean[c] = run_mean(0, c);
          var[c] = run_var(0, c);
        }
      }
      cache.bn_mode = mode;
      cache.inv_std.resize(width);
      for (std::size_t c = 0; c < width; ++c) cache.inv_std[c] = 1.0 / std::sqrt(var[c] + kBnEpsilon);
      cache.x_hat = Matrix(a.rows(), width);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          const double xh = (a(r, c) - mean[c]) * cache.inv_std[c];
          cache.x_hat(r, c) = xh;
          a(r, c) = gamma(0, c) * xh + beta(0, c);
        }
      }
    }
    if (stage.activate) {
      for (double& v : a.flat()) v = activate(cfg_.activation, v);
    }
    cache.output = a;
    h = std::move(a);
    pass.stages.push_back(std::move(cache));
  }
  pass.features.domain = domain;
  pass.features.normalized = normalize_rows(h, &pass.feature_norms);
  pass.features.raw = std::move(h);
  return pass;
}

void Model::encoder_backward(const EncodePass& pass, const Matrix& grad_raw, Gradients& grads) const {
  if (grad_raw.rows() != pass.features.raw.rows() || grad_raw.cols() != pass.features.raw.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "upstream gradient shape does not match the pass");
  }
  Matrix g = grad_raw;
  for (std::size_t s = stages_.size(); s-- > 0;) {
    const detail::Stage& stage = stages_[s];
    const detail::StageCache& cache = pass.stages[s];
    if (stage.activate) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        g.flat()[i] *= activation_slope(cfg_.activation, cache.output.flat()[i]);
      }
    }
    if (!stage.bn.empty()) {
      const detail::BnSlot& slot = stage.bn[slot_index(stage, pass.domain)];
      const Matrix& gamma = tensors_[slot.gamma].value;
      const std::size_t width = g.cols();
      const double batch = static_cast<double>(g.rows());
      Matrix d_gamma(1, width), d_beta(1, width);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < width; ++c) {
          d_gamma(0, c) += g(r, c) * cache.x_hat(r, c);
          d_beta(0, c) += g(r, c);
        }
      }
      if (tensors_[slot.gamma].receives_gradient()) grads.per_tensor[slot.gamma] += d_gamma;
      if (tensors_[slot.beta].receives_gradient()) grads.per_tensor[slot.beta] += d_beta;
      Matrix dx(g.rows(), width);
      if (cache.bn_mode == Mode::Train) {
        for (std::size_t c = 0; c < width; ++c) {
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (std::size_t r = 0; r < g.rows(); ++r) {
            const double dxh = g(r, c) * gamma(0, c);
            sum_dxh += dxh;
            sum_dxh_xh += dxh * cache.x_hat(r, c);
          }
          for (std::size_t r = 0; r < g.rows(); ++r) {
            const double dxh = g(r, c) * gamma(0, c);
            dx(r, c) = cache.inv_std[c] / batch * (batch * dxh - sum_dxh - cache.x_hat(r, c) * sum_dxh_xh);
          }
        }
      } else {
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < width; ++c) dx(r, c) = g(r, c) * gamma(0, c) * cache.inv_std[c];
        }
      }
      g = std::move(dx);
    }
    if (tensors_[stage.weight].receives_gradient()) {
      grads.per_tensor[stage.weight] += kernels::matmul_tn(g, cache.input);
    }
    if (stage.bias && tensors_[*stage.bias].receives_gradient()) grads.per_tensor[*stage.bias] += column_sums(g);
    if (s > 0) g = kernels::matmul_nn(g, tensors_[stage.weight].value);
  }
}

Gradients Model::zero_gradients() const {
  Gradients g;
  g.per_tensor.reserve(tensors_.size());
  for (const Tensor& t : tensors_) {
    g.per_tensor.push_back(t.receives_gradient() ? Matrix(t.value.rows(), t.value.cols()) : Matrix());
  }
  return g;
}

std::vector<double> Model::trainable_values() const {
  std::vector<double> out;
  for (const Tensor& t : tensors_) {
    if (t.receives_gradient()) out.insert(out.end(), t.value.flat().begin(), t.value.flat().end());
  }
  return out;
}

void Model::set_trainable_values(std::span<const double> values) {
  std::size_t pos = 0;
  for (Tensor& t : tensors_) {
    if (!t.receives_gradient()) continue;
    if (pos + t.value.size() > values.size()) throw Error(ErrorCode::DimensionMismatch, "too few parameter values");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), t.value.size(), t.value.flat().begin());
    pos += t.value.size();
  }
  if (pos != values.size()) throw Error(ErrorCode::DimensionMismatch, "too many parameter values");
}

std::vector<double> Model::flatten(const Gradients& grads) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].receives_gradient()) continue;
    const Matrix& g = grads.per_tensor.at(i);
    out.insert(out.end(), g.flat().begin(), g.flat().end());
  }
  return out;
}

void Model::copy_domain_bn(Domain from, Domain to) {
  if (!cfg_.per_domain_bn || from == to) return;
  for (const detail::Stage& stage : stages_) {
    if (stage.bn.empty()) continue;
    const detail::BnSlot& src = stage.bn[slot_index(stage, from)];
    const detail::BnSlot& dst = stage.bn[slot_index(stage, to)];
    tensors_[dst.gamma].value = tensors_[src.gamma].value;
    tensors_[dst.beta].value = tensors_[src.beta].value;
    tensors_[dst.mean].value = tensors_[src.mean].value;
    tensors_[dst.var].value = tensors_[src.var].value;
  }
}

void Model::prepare_source_free() {
  Matrix& w = tensors_[classifier_weight_].value;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    // Rows that are already unit length (to rounding) are kept bit for bit.
    if (std::abs(norm2(w.row(r)) - 1.0) <= 4 * std::numeric_limits<double>::epsilon()) continue;
    const auto unit = l2_normalize(w.row(r));
    std::copy(unit.begin(), unit.end(), w.row(r).begin());
  }
  if (classifier_bias_) {
    // The bias is always the last tensor, so erasing it leaves other indices intact.
    tensors_.erase(tensors_.begin() + static_cast<std::ptrdiff_t>(*classifier_bias_));
    classifier_bias_.reset();
    cfg_.classifier_bias = false;
  }
  tensors_[classifier_weight_].frozen = true;
}

FeatureBatch encode(Model& model, const Matrix& inputs, Domain domain, Mode mode) {
  return model.forward(inputs, domain, mode).features;
}

FeatureBatch encode(const Model& model, const Matrix& inputs, Domain domain) {
  return model.forward_eval(inputs, domain).features;
}

Matrix classify(const Model& model, const Matrix& features) {
  if (features.cols() != model.feature_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "feature width " + std::to_string(features.cols()) + " != " +
                                                  std::to_string(model.feature_dim()));
  }
  Matrix logits = kernels::matmul_nt(features, model.classifier_weight());
  if (const Matrix* bias = model.classifier_bias()) add_row_vector(logits, *bias);
  return logits;
}

Model prepare_source_free(const Model& model) {
  Model out = model;
  out.prepare_source_free();
  return out;
}

Gradients backward(const Model& model, const LossGraph& graph) {
  Gradients grads = model.zero_gradients();
  const auto tensors = model.tensors();
  std::size_t w_index = 0;
  std::optional<std::size_t> b_index;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == "classifier.weight") w_index = i;
    if (tensors[i].name == "classifier.bias") b_index = i;
  }
  for (const LossNode& node : graph.nodes) {
    const FeatureBatch& f = node.pass.features;
    Matrix grad_raw(f.raw.rows(), f.raw.cols());
    if (!node.grad_normalized.empty()) {
      grad_raw += normalize_rows_backward(f.normalized, node.pass.feature_norms, node.grad_normalized);
    }
    if (!node.grad_logits.empty()) {
      if (node.grad_logits.rows() != f.raw.rows() || node.grad_logits.cols() != model.classes()) {
        throw Error(ErrorCode::DimensionMismatch, "logit gradient shape");
      }
      if (tensors[w_index].receives_gradient()) {
        grads.per_tensor[w_index] += kernels::matmul_tn(node.grad_logits, f.raw);
      }
      if (b_index && tensors[*b_index].receives_gradient()) {
        grads.per_tensor[*b_index] += column_sums(node.grad_logits);
      }
      grad_raw += kernels::matmul_nn(node.grad_logits, model.classifier_weight());
    }
    model.encoder_backward(node.pass, grad_raw, grads);
  }
  return grads;
}

}  // namespace cdcl
