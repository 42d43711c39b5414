#include "cdcl/report.hpp"

namespace cdcl {

nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : r.per_class) per_class.push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
  return {{"accuracy", r.accuracy}, {"mean_class_accuracy", r.mean_class_accuracy}, {"per_class_accuracy", per_class}};
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json j;
  j["epochs"] = r.epochs.size();
  j["losses"] = nlohmann::json::array();
  j["retained_fraction"] = nlohmann::json::array();
  nlohmann::json agreement = nlohmann::json::array();
  bool any_agreement = false;
  for (const EpochStats& e : r.epochs) {
    j["losses"].push_back(e.losses);
    j["retained_fraction"].push_back(e.retained_fraction);
    if (e.pseudo_label_accuracy) {
      agreement.push_back(*e.pseudo_label_accuracy);
      any_agreement = true;
    } else {
      agreement.push_back(nullptr);
    }
  }
  if (any_agreement) j["pseudo_label_accuracy"] = agreement;
  if (r.target) {
    j["target_accuracy"] = r.target->accuracy;
    j["mean_class_accuracy"] = r.target->mean_class_accuracy;
    j["per_class_accuracy"] = to_json(*r.target)["per_class_accuracy"];
  } else {
    j["target_accuracy"] = nullptr;
    j["per_class_accuracy"] = nullptr;
  }
  j["seed"] = r.seed;
  j["config"] = r.config;
  return j;
}

nlohmann::json timing_json(const TrainReport& r) { return {{"wall_clock_seconds", r.wall_clock_seconds}}; }

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace cdcl
