#pragma once

// Freeze-and-reschedule makespan optimization. Every pass pins a subset of
// operations, clears the rest and re-dispatches it; the shortest valid
// candidate survives.

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mas/model.hpp"
#include "mas/plan.hpp"

namespace mas::optimizer {

enum class RunStatus { proposed, accepted, denied, restored };
const char* to_string(RunStatus s);

struct LevelStep {
  int level = 0;
  int pass = 0;
  Minutes makespan = 0;  // candidate of this pass, 0 if discarded
  bool kept = false;
  std::string note;

  bool operator==(const LevelStep&) const = default;
};

struct OptimizationRun {
  std::string id;
  std::uint64_t seed = 0;
  Minutes created_at = 0;
  std::uint64_t plan_version = 0;      // live plan version the run started from
  std::uint64_t accepted_version = 0;  // live plan version right after accept
  Plan base;
  Plan candidate;
  Minutes before = 0;
  Minutes after = 0;
  std::vector<LevelStep> steps;
  RunStatus status = RunStatus::proposed;

  /// 1 - after / before; 0 for an empty base.
  double improvement() const;
  nlohmann::json summary() const;
};

/// Operations whose slots have started by `now` plus slots flagged frozen.
std::set<std::string> implicitly_frozen(const Plan& plan, Minutes now);

/// Keeps `frozen` operations verbatim (with their reservations and the
/// transports between them), clears the rest and re-dispatches it order by
/// order in base start order. nullopt when an order cannot be placed again or
/// the result fails validation.
std::optional<Plan> reschedule(const ShopModel& model, const Plan& base, const std::set<std::string>& frozen,
                               Minutes now, Strategy strategy);

/// Machines ordered by their largest gap between consecutive slots, largest first.
std::vector<std::string> machines_by_largest_gap(const Plan& plan);

/// Machines hosting a slot of a chain that realizes the makespan.
std::set<std::string> critical_machines(const ShopModel& model, const Plan& plan);

/// Operations of orders lying completely inside `window`.
std::set<std::string> complete_orders_inside(const ShopModel& model, const Plan& plan, Interval window);

/// Random window of 10-40 % of the makespan inside the plan's span.
Interval random_window(const Plan& plan, std::mt19937_64& rng);

struct LevelContext {
  const ShopModel& model;
  Minutes now = 0;
  Strategy strategy = Strategy::force;
  std::vector<LevelStep>* steps = nullptr;
};

Plan level1_repair_swaps(const LevelContext& ctx, const Plan& plan, int passes = 1);
Plan level2_basic_shuffle(const LevelContext& ctx, const Plan& plan);
Plan level3_vertical_shuffle(const LevelContext& ctx, const Plan& plan, std::mt19937_64& rng, int passes = 5);
Plan level4_horizontal_shuffle(const LevelContext& ctx, const Plan& plan, int passes = 5);

/// Runs levels 1 to 4 on a copy of `base`. The candidate is never longer
/// than the base and always validates.
OptimizationRun optimize(const ShopModel& model, const Plan& base, Minutes now, std::uint64_t seed,
                         const OptimizerConfig& config);

/// Accept swaps the candidate in; only valid while the live plan is still the
/// run's base (`version` unchanged).
void accept_run(OptimizationRun& run, Plan& live, std::uint64_t& version);
void deny_run(OptimizationRun& run);
/// Reinstates the base after accept, as long as nothing changed the plan since.
void restore_run(OptimizationRun& run, Plan& live, std::uint64_t& version);

}  // namespace mas::optimizer
