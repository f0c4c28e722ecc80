#include "mas/agents/org.hpp"

#include <algorithm>
#include <set>

namespace mas::agents {

std::vector<std::string> check_org(const ShopModel& model) {
  std::vector<std::string> errors;
  int roots = 0;
  for (const auto& [id, a] : model.areas) {
    if (!a.parent) {
      ++roots;
      if (a.level != 1) errors.push_back("area '" + id + "' has no parent but level " + std::to_string(a.level));
      continue;
    }
    auto p = model.areas.find(*a.parent);
    if (p == model.areas.end()) {
      errors.push_back("area '" + id + "' references unknown parent '" + *a.parent + "'");
      continue;
    }
    if (a.level != p->second.level + 1) {
      errors.push_back("area '" + id + "' must be one level below '" + *a.parent + "'");
    }
  }
  if (!model.areas.empty() && roots != 1) {
    errors.push_back("expected exactly one level-1 area, found " + std::to_string(roots));
  }
  // Levels strictly increase along parents, so no cycle survives the checks above
  // unless a level error was already reported.
  for (const auto& [id, m] : model.machines) {
    if (model.areas.empty() && m.area.empty()) continue;
    if (!model.areas.count(m.area)) {
      errors.push_back("machine '" + id + "' references unknown area '" + m.area + "'");
    } else if (!children_of(model, m.area).empty()) {
      errors.push_back("machine '" + id + "' must sit in a leaf area, '" + m.area + "' has sub-areas");
    }
  }
  return errors;
}

std::vector<std::string> children_of(const ShopModel& model, const std::string& area) {
  std::vector<std::string> out;
  for (const auto& [id, a] : model.areas) {
    if (a.parent == area) out.push_back(id);
  }
  return out;
}

std::vector<std::string> subtree(const ShopModel& model, const std::string& area) {
  std::vector<std::string> out{area};
  for (std::size_t i = 0; i < out.size() && out.size() <= model.areas.size(); ++i) {
    for (auto& c : children_of(model, out[i])) out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string root_area(const ShopModel& model) {
  for (const auto& [id, a] : model.areas) {
    if (!a.parent) return id;
  }
  return {};
}

namespace {

std::vector<std::string> scope_at(const ShopModel& model, const std::string& area,
                                  const std::vector<std::string>& restricted) {
  std::set<std::string> excluded;
  for (const std::string& r : restricted) {
    if (!model.areas.count(r)) continue;
    for (auto& a : subtree(model, r)) excluded.insert(std::move(a));
  }
  std::vector<std::string> out;
  if (area.empty() || !model.areas.count(area)) {
    for (const auto& [id, m] : model.machines) {
      if (!excluded.count(m.area)) out.push_back(id);
    }
    return out;
  }
  const auto areas = subtree(model, area);
  for (const auto& [id, m] : model.machines) {
    if (excluded.count(m.area)) continue;
    if (std::binary_search(areas.begin(), areas.end(), m.area)) out.push_back(id);
  }
  return out;
}

}  // namespace

std::vector<std::string> org_scope(const ShopModel& model, const Order& order) {
  return scope_at(model, order.area, order.restricted_areas);
}

std::optional<std::string> escalation_target(const ShopModel& model, const Order& order) {
  auto it = model.areas.find(order.area);
  if (it == model.areas.end() || !it->second.parent) return std::nullopt;
  return it->second.parent;
}

EscalatedOutcome dispatch_escalating(ShopModel& model, const std::string& order_id,
                                     const std::function<dispatch::DispatchOutcome()>& attempt) {
  EscalatedOutcome out;
  for (;;) {
    out.areas.push_back(model.order(order_id).area);
    out.outcome = attempt();
    const auto s = out.outcome.status;
    if (s == dispatch::OutcomeStatus::placed || s == dispatch::OutcomeStatus::needs_approval) break;
    auto next = escalation_target(model, model.order(order_id));
    if (!next) break;
    model.order(order_id).area = *next;
  }
  return out;
}

std::optional<std::string> mma_assign_area(const ShopModel& model, const Order& order) {
  std::optional<std::string> best;
  int best_level = 0;
  for (const auto& [id, area] : model.areas) {
    if (area.level <= best_level) continue;
    const auto scope = scope_at(model, id, order.restricted_areas);
    const bool all = std::all_of(order.operations.begin(), order.operations.end(), [&](const std::string& op) {
      const Operation& o = model.operation(op);
      return std::any_of(scope.begin(), scope.end(),
                         [&](const std::string& m) { return capable(model.machine(m), o); });
    });
    if (all) {
      best = id;
      best_level = area.level;
    }
  }
  return best;
}

bool mma_create_job(ShopModel& model, Order order, std::vector<Operation> operations) {
  if (model.orders.count(order.id)) throw Error(Error::Code::conflict, "order '" + order.id + "' already exists");
  if (operations.empty()) throw Error(Error::Code::invalid_argument, "order '" + order.id + "' has no operations");
  if (order.priority < 1 || order.priority > 5) {
    throw Error(Error::Code::invalid_argument, "priority of '" + order.id + "' must be within 1..5");
  }
  if (order.due <= order.release) throw Error(Error::Code::invalid_argument, "due of '" + order.id + "' must follow release");
  std::sort(operations.begin(), operations.end(), [](const Operation& a, const Operation& b) {
    return std::tie(a.sequence, a.id) < std::tie(b.sequence, b.id);
  });
  order.operations.clear();
  for (Operation& op : operations) {
    if (model.operations.count(op.id)) throw Error(Error::Code::conflict, "operation '" + op.id + "' already exists");
    if (op.duration <= 0) throw Error(Error::Code::invalid_argument, "operation '" + op.id + "' needs a positive duration");
    op.order = order.id;
    order.operations.push_back(op.id);
  }
  for (Operation& op : operations) model.operations[op.id] = std::move(op);
  bool supported = true;
  if (!model.areas.empty()) {
    auto area = mma_assign_area(model, order);
    if (area) {
      order.area = *area;
    } else {
      order.area = root_area(model);
      supported = false;
    }
  }
  if (!supported) order.state = OrderState::manual;
  model.orders[order.id] = std::move(order);
  return supported;
}

nlohmann::json joa_status(const ShopModel& model, const Plan& plan, const std::string& order_id,
                          Minutes now, MessageLog* log) {
  const Order& order = model.order(order_id);
  nlohmann::json ops = nlohmann::json::array();
  for (const std::string& op : order.operations) {
    const auto slots = plan.slots_of(op);
    std::string state = "unplanned";
    nlohmann::json entry = {{"operation", op}};
    if (!slots.empty()) {
      if (slots.back().end <= now) {
        state = "done";
      } else if (slots.front().start < now) {
        state = "in-progress";
      } else {
        state = "planned";
      }
      entry["machine"] = slots.front().machine;
      entry["start"] = slots.front().start;
      entry["end"] = slots.back().end;
    }
    entry["state"] = state;
    ops.push_back(entry);
  }
  nlohmann::json reply = {{"order", order_id}, {"state", to_string(order.state)}, {"operations", ops}};
  if (log) {
    const std::string corr = "status-" + std::to_string(log->next_correlation());
    log->send(MessageKind::status_query, kMma, joa(order_id), corr, {{"order", order_id}});
    log->send(MessageKind::status_reply, joa(order_id), kMma, corr, reply);
  }
  return reply;
}

void sea_define(ShopModel& model, const Plan& plan, const StructureEdit& edit, Minutes now) {
  using Kind = StructureEdit::Kind;
  auto has_future_slots = [&](const std::string& machine) {
    for (const Slot& s : plan.on_machine(machine)) {
      if (s.end > now) return true;
    }
    return false;
  };
  ShopModel next = model;
  switch (edit.kind) {
    case Kind::add_area: {
      if (next.areas.count(edit.area)) throw Error(Error::Code::conflict, "area '" + edit.area + "' exists");
      Area a{edit.area, edit.parent, 1};
      if (edit.parent) {
        if (!next.areas.count(*edit.parent)) throw Error(Error::Code::not_found, "unknown area '" + *edit.parent + "'");
        a.level = next.areas.at(*edit.parent).level + 1;
      }
      next.areas[a.id] = a;
      break;
    }
    case Kind::delete_area:
      if (!next.areas.count(edit.area)) throw Error(Error::Code::not_found, "unknown area '" + edit.area + "'");
      if (!children_of(next, edit.area).empty()) throw Error(Error::Code::conflict, "area '" + edit.area + "' has sub-areas");
      for (const auto& [id, m] : next.machines) {
        if (m.area == edit.area) throw Error(Error::Code::conflict, "area '" + edit.area + "' still holds machines");
      }
      next.areas.erase(edit.area);
      break;
    case Kind::add_machine: {
      if (next.machines.count(edit.machine.id)) throw Error(Error::Code::conflict, "machine '" + edit.machine.id + "' exists");
      Machine m = edit.machine;
      m.area = edit.area;
      m.calendar.check();
      next.machines[m.id] = m;
      break;
    }
    case Kind::move_machine:
      next.machine(edit.machine.id).area = edit.area;
      break;
    case Kind::delete_machine:
      next.machine(edit.machine.id);
      if (has_future_slots(edit.machine.id)) {
        throw Error(Error::Code::conflict, "machine '" + edit.machine.id + "' still has booked slots");
      }
      next.machines.erase(edit.machine.id);
      break;
  }
  const auto errors = check_org(next);
  if (!errors.empty()) throw Error(Error::Code::validation, errors.front());
  model = std::move(next);
}

}  // namespace mas::agents
