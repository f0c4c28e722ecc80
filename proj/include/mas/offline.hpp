#pragma once

// One-shot planning outside the simulation: every order of a scenario is
// dispatched into a single plan at time 0, then the optimizer improves it.

#include <json.hpp>

#include "mas/optimizer.hpp"
#include "mas/scenario.hpp"

namespace mas {

struct OfflineResult {
  ShopModel model;
  Plan base;
  optimizer::OptimizationRun run;
  std::vector<std::string> unplaced;  // orders the initial dispatch could not place
};

/// Orders are dispatched in (arrival, id) order with their own strategies.
OfflineResult plan_offline(const Scenario& scenario, std::uint64_t seed);
nlohmann::json offline_report(const OfflineResult& r);

}  // namespace mas
