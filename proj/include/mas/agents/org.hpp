#pragma once

// Organizational structure: the area tree, order scopes and escalation, the
// structure-editing agent (SEA) and the master agent (MMA) duties.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mas/agents/messages.hpp"
#include "mas/dispatch.hpp"
#include "mas/model.hpp"
#include "mas/plan.hpp"

namespace mas::agents {

/// Problems with the area tree: unknown parents, wrong levels, cycles, more
/// than one level-1 root, machines outside leaf areas.
std::vector<std::string> check_org(const ShopModel& model);

std::vector<std::string> children_of(const ShopModel& model, const std::string& area);
/// `area` and everything below it.
std::vector<std::string> subtree(const ShopModel& model, const std::string& area);
/// The level-1 area, or "" when the model has no areas.
std::string root_area(const ShopModel& model);

/// Machines an order may negotiate with at its current area: the machines of
/// the area's subtree, minus restricted areas. The whole shop when the order
/// has no area.
std::vector<std::string> org_scope(const ShopModel& model, const Order& order);

/// The parent of the order's area, or nullopt at level 1.
std::optional<std::string> escalation_target(const ShopModel& model, const Order& order);

struct EscalatedOutcome {
  dispatch::DispatchOutcome outcome;
  std::vector<std::string> areas;  // areas tried, in order
};

/// Runs `attempt` at the order's area and, while it fails, one level higher
/// each time up to level 1. The order's area is left at the last level tried.
EscalatedOutcome dispatch_escalating(ShopModel& model, const std::string& order,
                                     const std::function<dispatch::DispatchOutcome()>& attempt);

/// Deepest area whose machines can run every operation of the order (ties by
/// id); nullopt when none can.
std::optional<std::string> mma_assign_area(const ShopModel& model, const Order& order);

/// Registers a new order and its operations (sorted into chain order) and
/// assigns its starting area. Returns false when no area supports it.
bool mma_create_job(ShopModel& model, Order order, std::vector<Operation> operations);

/// Per-operation state of an order as the job order agent reports it.
nlohmann::json joa_status(const ShopModel& model, const Plan& plan, const std::string& order,
                          Minutes now, MessageLog* log);

struct StructureEdit {
  enum class Kind { add_area, delete_area, add_machine, move_machine, delete_machine } kind =
      Kind::add_machine;
  std::string area;
  std::optional<std::string> parent;  // add_area
  Machine machine;                    // add_machine; id only for move/delete
};

/// Applies an edit to the area tree or machine set. Throws Error when the
/// edit would break the tree or would drop booked future slots.
void sea_define(ShopModel& model, const Plan& plan, const StructureEdit& edit, Minutes now);

}  // namespace mas::agents
