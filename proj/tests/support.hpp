#pragma once

// Small builders for hand-made shops used across the unit tests.

#include <string>
#include <utility>
#include <vector>

#include "mas/model.hpp"
#include "mas/plan.hpp"

namespace mas::test {

inline Machine make_machine(const std::string& id, std::set<std::string> processes = {"milling"},
                            const std::string& area = "") {
  Machine m;
  m.id = id;
  m.area = area;
  m.capability.processes = std::move(processes);
  return m;
}

/// One shift per weekday-agnostic day: [day*1440 + from, day*1440 + to) for all 7 days.
inline ShiftCalendar daily(Minutes from, Minutes to) {
  ShiftCalendar c;
  for (int d = 0; d < 7; ++d) c.weekly.push_back({d * 1440 + from, d * 1440 + to});
  return c;
}

struct OpSpec {
  std::string process = "milling";
  Minutes duration = 60;
};

inline Order& add_order(ShopModel& model, const std::string& id, const std::vector<OpSpec>& ops,
                        int priority = 3, Minutes release = 0, Minutes due = 10000,
                        Strategy strategy = Strategy::force) {
  Order o;
  o.id = id;
  o.priority = priority;
  o.release = release;
  o.arrival = release;
  o.due = due;
  o.strategy = strategy;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    Operation op;
    op.id = id + "." + std::to_string(i + 1);
    op.order = id;
    op.sequence = static_cast<int>(i + 1);
    op.process = ops[i].process;
    op.duration = ops[i].duration;
    op.setup_family = ops[i].process;
    o.operations.push_back(op.id);
    model.operations[op.id] = op;
  }
  model.orders[id] = o;
  return model.orders[id];
}

inline ShopModel shop_with(int machines, std::set<std::string> processes = {"milling"}) {
  ShopModel model;
  for (int i = 1; i <= machines; ++i) {
    Machine m = make_machine("M" + std::to_string(i), processes);
    model.machines[m.id] = m;
  }
  return model;
}

inline Slot slot(const std::string& op, const std::string& machine, Minutes start, Minutes end) {
  Slot s;
  s.op = op;
  s.machine = machine;
  s.start = start;
  s.end = end;
  return s;
}

}  // namespace mas::test
