#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include "cdcl/error.hpp"
#include "cdcl/presets.hpp"
#include "cdcl/textio.hpp"

namespace cdcl::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string join(const std::vector<std::size_t>& v) {
  if (v.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out.empty() ? "0" : out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw Error(ErrorCode::InvalidConfig, "invalid value for " + key + ": '" + value + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) bad_value(key, v);
    return x;
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) bad_value(key, v);
  try {
    return std::stoull(v);
  } catch (const std::logic_error&) {
    bad_value(key, v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v);
}

}  // namespace

RunConfig::RunConfig() {
  const BenchmarkPreset p = benchmark_preset();
  const HyperParams& h = p.hyper;
  const EncoderConfig& e = p.encoder;
  const ShiftConfig& s = p.shift;
  values_ = {
      {"seed", "0"},
      {"mode", "standard"},
      // ShiftConfig
      {"classes", std::to_string(s.classes)},
      {"input_dim", std::to_string(s.dim)},
      {"per_class_count", std::to_string(s.per_class_count)},
      {"class_center_radius", format_double(s.class_center_radius)},
      {"cluster_stddev", format_double(s.cluster_stddev)},
      {"rotation_angle", format_double(s.rotation_angle)},
      {"translation", format_double(s.translation.empty() ? 0.0 : s.translation.front())},
      // EncoderConfig
      {"hidden_dims", join(e.hidden_dims)},
      {"feature_dim", std::to_string(e.feature_dim)},
      {"activation", to_string(e.activation)},
      {"batch_norm", bool_str(e.batch_norm)},
      {"per_domain_bn", bool_str(e.per_domain_bn)},
      {"bottleneck", bool_str(e.bottleneck)},
      {"classifier_bias", bool_str(e.classifier_bias)},
      // HyperParams
      {"tau", format_double(h.tau)},
      {"lambda", format_double(h.lambda)},
      {"confidence_threshold", format_double(h.confidence_threshold)},
      {"lr_backbone", format_double(h.lr_backbone)},
      {"lr_new", format_double(h.lr_new)},
      {"schedule_b", format_double(h.schedule_b)},
      {"momentum", format_double(h.momentum)},
      {"epochs", std::to_string(h.epochs)},
      {"iters_per_epoch", std::to_string(h.iters_per_epoch)},
      {"batch_size", std::to_string(h.batch_size)},
      {"pretrain_epochs", std::to_string(h.pretrain_epochs)},
      {"pretrain_iters", std::to_string(h.pretrain_iters)},
      {"pretrain_lr", format_double(h.pretrain_lr)},
      {"train_ratio", format_double(h.train_ratio)},
      {"kmeans_max_iters", std::to_string(h.kmeans_max_iters)},
      {"kmeans_tol", format_double(h.kmeans_tol)},
      {"share_ce_batch", bool_str(h.share_ce_batch)},
      {"init_target_bn_from_source", bool_str(h.init_target_bn_from_source)},
      {"pair_mode", to_string(h.pair_mode)},
  };
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::InvalidConfig, "unknown config key: " + key);
  it->second = value;
}

void RunConfig::merge_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::InvalidConfig, "expected key=value, got '" + std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config file " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    try {
      merge_assignment(body);
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::InvalidConfig, "unknown config key: " + key);
  return it->second;
}

std::uint64_t RunConfig::seed() const { return to_uint("seed", get("seed")); }

ShiftConfig RunConfig::shift() const {
  ShiftConfig s;
  s.classes = to_uint("classes", get("classes"));
  s.dim = to_uint("input_dim", get("input_dim"));
  s.per_class_count = to_uint("per_class_count", get("per_class_count"));
  s.class_center_radius = to_double("class_center_radius", get("class_center_radius"));
  s.cluster_stddev = to_double("cluster_stddev", get("cluster_stddev"));
  s.rotation_angle = to_double("rotation_angle", get("rotation_angle"));
  const std::vector<std::string> parts = split(get("translation"), ',');
  if (parts.size() == 1) {
    s.translation.assign(s.dim, to_double("translation", trim(parts[0])));
  } else {
    for (const std::string& p : parts) s.translation.push_back(to_double("translation", trim(p)));
  }
  s.seed = seed();
  s.validate();
  return s;
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.input_dim = to_uint("input_dim", get("input_dim"));
  const std::string& hidden = get("hidden_dims");
  if (hidden != "-" && !hidden.empty()) {
    for (const std::string& p : split(hidden, ',')) e.hidden_dims.push_back(to_uint("hidden_dims", trim(p)));
  }
  e.feature_dim = to_uint("feature_dim", get("feature_dim"));
  try {
    e.activation = parse_activation(get("activation"));
  } catch (const Error&) {
    bad_value("activation", get("activation"));
  }
  e.batch_norm = to_bool("batch_norm", get("batch_norm"));
  e.per_domain_bn = to_bool("per_domain_bn", get("per_domain_bn"));
  e.bottleneck = to_bool("bottleneck", get("bottleneck"));
  e.classifier_bias = to_bool("classifier_bias", get("classifier_bias"));
  e.validate();
  return e;
}

HyperParams RunConfig::hyper() const {
  HyperParams h;
  h.tau = to_double("tau", get("tau"));
  h.lambda = to_double("lambda", get("lambda"));
  h.confidence_threshold = to_double("confidence_threshold", get("confidence_threshold"));
  h.lr_backbone = to_double("lr_backbone", get("lr_backbone"));
  h.lr_new = to_double("lr_new", get("lr_new"));
  h.schedule_b = to_double("schedule_b", get("schedule_b"));
  h.momentum = to_double("momentum", get("momentum"));
  h.epochs = to_uint("epochs", get("epochs"));
  h.iters_per_epoch = to_uint("iters_per_epoch", get("iters_per_epoch"));
  h.batch_size = to_uint("batch_size", get("batch_size"));
  h.seed = seed();
  h.pretrain_epochs = to_uint("pretrain_epochs", get("pretrain_epochs"));
  h.pretrain_iters = to_uint("pretrain_iters", get("pretrain_iters"));
  h.pretrain_lr = to_double("pretrain_lr", get("pretrain_lr"));
  h.train_ratio = to_double("train_ratio", get("train_ratio"));
  h.kmeans_max_iters = to_uint("kmeans_max_iters", get("kmeans_max_iters"));
  h.kmeans_tol = to_double("kmeans_tol", get("kmeans_tol"));
  h.share_ce_batch = to_bool("share_ce_batch", get("share_ce_batch"));
  h.init_target_bn_from_source = to_bool("init_target_bn_from_source", get("init_target_bn_from_source"));
  try {
    h.pair_mode = parse_pair_mode(get("pair_mode"));
  } catch (const Error&) {
    bad_value("pair_mode", get("pair_mode"));
  }
  h.validate();
  return h;
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << serialize();
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

}  // namespace cdcl::cli
