#pragma once

#include <filesystem>
#include <iosfwd>

#include "cdcl/model.hpp"

namespace cdcl {

// Text checkpoint: "CDCL-CKPT v1", a `meta <n> 1` block of `key value` lines,
// then one `name rows cols` block per tensor with %.17g entries.
void write_checkpoint(const Model& model, std::ostream& out);
Model read_checkpoint(std::istream& in);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace cdcl
