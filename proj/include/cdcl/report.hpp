#pragma once

#include <string>

#include "cdcl/trainer.hpp"
#include "json.hpp"

namespace cdcl {

nlohmann::json to_json(const EvalResult& r);

/// Stable JSON form of a training report. Wall-clock time is left out so that
/// identical runs serialize to identical bytes.
nlohmann::json to_json(const TrainReport& r);

nlohmann::json timing_json(const TrainReport& r);

std::string dump_json(const nlohmann::json& j);

}  // namespace cdcl
