#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cdcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumerical = 4;

/// Entry point for the `cdcl` tool. Subcommands: gen-data, pretrain, adapt, eval,
/// export-embeddings.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Same as above; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cdcl::cli
