#include "cdcl/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "cdcl/error.hpp"
#include "cdcl/textio.hpp"

namespace cdcl {

namespace {

constexpr const char* kMagic = "CDCL-CKPT v1";

std::string join_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace

void write_checkpoint(const Model& model, std::ostream& out) {
  const EncoderConfig& cfg = model.config();
  const std::vector<std::pair<std::string, std::string>> meta = {
      {"classes", std::to_string(model.classes())},
      {"input_dim", std::to_string(cfg.input_dim)},
      {"hidden_dims", join_dims(cfg.hidden_dims)},
      {"feature_dim", std::to_string(cfg.feature_dim)},
      {"activation", to_string(cfg.activation)},
      {"batch_norm", cfg.batch_norm ? "1" : "0"},
      {"per_domain_bn", cfg.per_domain_bn ? "1" : "0"},
      {"bottleneck", cfg.bottleneck ? "1" : "0"},
      {"classifier_bias", cfg.classifier_bias ? "1" : "0"},
      {"classifier_frozen", model.classifier_frozen() ? "1" : "0"},
  };
  out << kMagic << '\n';
  out << "meta " << meta.size() << " 1\n";
  for (const auto& [k, v] : meta) out << k << ' ' << v << '\n';
  for (const Tensor& t : model.tensors()) {
    out << t.name << ' ' << t.value.rows() << ' ' << t.value.cols() << '\n';
    for (std::size_t r = 0; r < t.value.rows(); ++r) {
      auto row = t.value.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out << ' ';
        out << format_double(row[c]);
      }
      out << '\n';
    }
  }
}

Model read_checkpoint(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line) || line != kMagic) reader.fail("expected header '" + std::string(kMagic) + "'");
  if (!reader.next(line)) reader.fail("missing meta block");
  auto head = split_ws(line);
  if (head.size() != 3 || head[0] != "meta") reader.fail("expected 'meta <n> 1'");
  const std::size_t n_meta = reader.parse_size(head[1]);
  std::map<std::string, std::string> meta;
  for (std::size_t i = 0; i < n_meta; ++i) {
    if (!reader.next(line)) reader.fail("truncated meta block");
    auto kv = split_ws(line);
    if (kv.size() != 2) reader.fail("meta lines must be 'key value'");
    meta[kv[0]] = kv[1];
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) reader.fail("meta block lacks '" + key + "'");
    return it->second;
  };
  EncoderConfig cfg;
  const std::size_t classes = reader.parse_size(need("classes"));
  cfg.input_dim = reader.parse_size(need("input_dim"));
  if (need("hidden_dims") != "-") {
    for (const auto& part : split(need("hidden_dims"), ',')) cfg.hidden_dims.push_back(reader.parse_size(part));
  }
  cfg.feature_dim = reader.parse_size(need("feature_dim"));
  try {
    cfg.activation = parse_activation(need("activation"));
  } catch (const Error& e) {
    reader.fail(e.what());
  }
  cfg.batch_norm = need("batch_norm") == "1";
  cfg.per_domain_bn = need("per_domain_bn") == "1";
  cfg.bottleneck = need("bottleneck") == "1";
  cfg.classifier_bias = need("classifier_bias") == "1";
  const bool frozen = need("classifier_frozen") == "1";

  std::vector<Tensor> tensors;
  while (reader.next(line)) {
    if (line.empty()) continue;
    auto h = split_ws(line);
    if (h.size() != 3) reader.fail("expected 'name rows cols'");
    Tensor t;
    t.name = h[0];
    const std::size_t rows = reader.parse_size(h[1]);
    const std::size_t cols = reader.parse_size(h[2]);
    std::vector<double> data;
    data.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!reader.next(line)) reader.fail("truncated tensor '" + t.name + "'");
      auto parts = split_ws(line);
      if (parts.size() != cols) reader.fail("tensor '" + t.name + "' row has " + std::to_string(parts.size()) + " values");
      for (const auto& p : parts) data.push_back(reader.parse_double(p));
    }
    t.value = Matrix(rows, cols, std::move(data));
    tensors.push_back(std::move(t));
  }
  try {
    return Model::from_tensors(cfg, classes, frozen, std::move(tensors));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FormatError || e.code() == ErrorCode::InvalidConfig) {
      throw Error(ErrorCode::FormatError, e.what());
    }
    throw;
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_checkpoint(model, out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace cdcl
