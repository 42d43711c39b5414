#pragma once

#include "cdcl/data.hpp"
#include "cdcl/model.hpp"
#include "cdcl/trainer.hpp"

namespace cdcl {

/// Desk-scale rotated-Gaussians benchmark: four classes in eight dimensions, a
/// 0.65 rad target rotation plus a 0.5 offset in every coordinate. A
/// source-trained model scores roughly 0.6-0.75 on the target.
struct BenchmarkPreset {
  ShiftConfig shift;
  EncoderConfig encoder;
  HyperParams hyper;
};

BenchmarkPreset benchmark_preset(std::uint64_t seed = 0);

/// Same benchmark with the bottleneck encoder used for source-free adaptation.
BenchmarkPreset source_free_preset(std::uint64_t seed = 0);

}  // namespace cdcl
