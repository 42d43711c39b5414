#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "cdcl/data.hpp"
#include "cdcl/model.hpp"
#include "cdcl/trainer.hpp"

namespace cdcl::cli {

/// Flat key=value run configuration. Every key has a built-in default taken from
/// the desk-scale benchmark preset; unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  /// Reads `key = value` lines; blank lines and `#` comments are ignored.
  void merge_file(const std::filesystem::path& path);
  /// Accepts "key=value".
  void merge_assignment(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  ShiftConfig shift() const;
  EncoderConfig encoder() const;
  HyperParams hyper() const;
  std::uint64_t seed() const;

  /// Sorted `key = value` lines.
  std::string serialize() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cdcl::cli
