#pragma once

// Independent reference computations and random instance builders shared by
// the unit tests and the acceptance harness.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "mas/dispatch.hpp"
#include "mas/model.hpp"
#include "mas/plan.hpp"
#include "mas/scenario.hpp"
#include "support.hpp"

namespace mas::test {

/// Random flow instance: `ops` operations cut into chains of 1..3, machines
/// each run one or two of three processes, everything available around the
/// clock, no tools, no transport.
inline ShopModel random_instance(std::uint64_t seed, int machines, int ops, Minutes min_d = 10, Minutes max_d = 120) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  const std::vector<std::string> processes{"p0", "p1", "p2"};
  ShopModel model;
  model.config.horizon = 100000;
  for (int i = 0; i < machines; ++i) {
    Machine m = make_machine("M" + std::to_string(i + 1), {processes[static_cast<std::size_t>(i % 3)]});
    if (pick(0, 1)) m.capability.processes.insert(processes[static_cast<std::size_t>(pick(0, 2))]);
    model.machines[m.id] = m;
  }
  const int kinds = std::min(machines, 3);
  int made = 0, n = 0;
  while (made < ops) {
    const int len = std::min(ops - made, pick(1, 3));
    std::vector<OpSpec> chain;
    for (int k = 0; k < len; ++k) {
      chain.push_back({processes[static_cast<std::size_t>(pick(0, kinds - 1))], static_cast<Minutes>(pick(static_cast<int>(min_d), static_cast<int>(max_d)))});
    }
    char id[16];
    std::snprintf(id, sizeof id, "O%02d", ++n);
    add_order(model, id, chain, pick(1, 5), 0, 100000);
    made += len;
  }
  return model;
}

/// Force-forward placement in order-id order with robustness off.
inline Plan naive_plan(ShopModel& model) {
  Plan plan;
  dispatch::Context ctx{model, plan, 0, {}, nullptr, {}};
  for (const auto& [id, order] : model.orders) {
    dispatch::Request req;
    req.options.robustness = false;
    dispatch::dispatch_chain(ctx, id, req);
  }
  return plan;
}

/// Exact optimum of max end over all machine choices and sequences for
/// chain-shaped orders released at 0 on always-available machines. Depth
/// first over "which operation goes next", appending it to its machine.
class BruteForce {
 public:
  explicit BruteForce(const ShopModel& model) : model_(model) {
    for (const auto& [mid, m] : model.machines) machines_.push_back(&m);
    for (const auto& [oid, o] : model.orders) {
      std::vector<const Operation*> chain;
      for (const std::string& op : o.operations) chain.push_back(&model.operation(op));
      chains_.push_back(chain);
    }
  }

  Minutes solve() {
    best_ = 0;
    for (const auto& c : chains_) {
      for (const Operation* op : c) best_ += op->duration;
    }
    std::vector<std::size_t> next(chains_.size(), 0);
    std::vector<Minutes> ready(chains_.size(), 0);
    std::vector<Minutes> free(machines_.size(), 0);
    dfs(next, ready, free, 0);
    return best_;
  }

 private:
  void dfs(std::vector<std::size_t>& next, std::vector<Minutes>& ready, std::vector<Minutes>& free, Minutes cur) {
    Minutes bound = cur;
    bool done = true;
    for (std::size_t c = 0; c < chains_.size(); ++c) {
      Minutes rest = ready[c];
      for (std::size_t k = next[c]; k < chains_[c].size(); ++k) rest += chains_[c][k]->duration;
      bound = std::max(bound, rest);
      done = done && next[c] == chains_[c].size();
    }
    if (bound >= best_) return;
    if (done) {
      best_ = cur;
      return;
    }
    for (std::size_t c = 0; c < chains_.size(); ++c) {
      if (next[c] == chains_[c].size()) continue;
      const Operation& op = *chains_[c][next[c]];
      for (std::size_t m = 0; m < machines_.size(); ++m) {
        if (!capable(*machines_[m], op)) continue;
        const Minutes start = std::max(free[m], ready[c]);
        const Minutes end = start + op.duration;
        const Minutes saved_free = free[m], saved_ready = ready[c];
        free[m] = end;
        ready[c] = end;
        ++next[c];
        dfs(next, ready, free, std::max(cur, end));
        --next[c];
        free[m] = saved_free;
        ready[c] = saved_ready;
      }
    }
  }

  const ShopModel& model_;
  std::vector<const Machine*> machines_;
  std::vector<std::vector<const Operation*>> chains_;
  Minutes best_ = 0;
};

inline Minutes brute_force_makespan(const ShopModel& model) { return BruteForce(model).solve(); }

/// Moves the orders of a hand-built model into arrival specs.
inline Scenario scenario_of(ShopModel model) {
  Scenario s;
  for (const auto& [id, o] : model.orders) {
    OrderSpec spec{o, {}};
    for (const std::string& op : o.operations) spec.operations.push_back(model.operation(op));
    s.orders.push_back(spec);
  }
  model.orders.clear();
  model.operations.clear();
  s.shop = model;
  return s;
}

/// Random engine scenario: staggered arrivals, mixed strategies, optional
/// shifts and tools, and optionally a disturbance script.
inline Scenario random_scenario(std::uint64_t seed, int machines, int ops, bool disturbances) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  ShopModel model = random_instance(seed, machines, ops, 20, 240);
  model.config.seed = seed;
  model.config.horizon = 3 * 1440;
  const bool shifts = pick(0, 2) == 0;
  for (auto& [id, m] : model.machines) {
    if (shifts) m.calendar = daily(360, 1320);
  }
  const bool tools = pick(0, 1) == 1;
  if (tools) model.stock["T1"] = StockEntry{ResourceKind::tool, "T1", 2, 2, {}};
  const Strategy strategies[] = {Strategy::opt, Strategy::force, Strategy::x_competition, Strategy::wait_x};
  for (auto& [id, o] : model.orders) {
    o.arrival = o.release = pick(0, 1440);
    o.due = o.release + pick(300, 2400);
    o.strategy = strategies[pick(0, 3)];
    o.options.x = pick(1, o.priority);
    o.options.overdraft = pick(0, 3) == 0;
    if (pick(0, 4) == 0) o.options.shift_split = ShiftSplitMode::within_lot;
    if (o.strategy == Strategy::wait_x) o.options.wait_deadline = o.due;
    for (const std::string& op : o.operations) {
      if (tools && pick(0, 3) == 0) model.operations[op].resources.push_back({ResourceKind::tool, "T1"});
    }
  }
  Scenario s = scenario_of(model);
  if (!disturbances) return s;
  std::vector<std::string> ids;
  for (const auto& [id, m] : s.shop.machines) ids.push_back(id);
  const int n = pick(1, 4);
  for (int i = 0; i < n; ++i) {
    Disturbance d;
    d.at = pick(0, 2000);
    switch (pick(0, tools ? 3 : 2)) {
      case 0:
        d.kind = Disturbance::Kind::machine_down;
        d.machine = ids[static_cast<std::size_t>(pick(0, static_cast<int>(ids.size()) - 1))];
        if (pick(0, 2)) d.until = d.at + pick(60, 600);
        break;
      case 1: {
        d.kind = Disturbance::Kind::rush_order;
        OrderSpec r;
        r.order.id = "R" + std::to_string(i + 1);
        r.order.priority = pick(3, 5);
        r.order.arrival = r.order.release = d.at;
        r.order.due = d.at + pick(200, 1200);
        Operation op;
        op.id = r.order.id + ".1";
        op.order = r.order.id;
        op.sequence = 1;
        op.process = "p" + std::to_string(pick(0, std::min(machines, 3) - 1));
        op.duration = pick(20, 180);
        r.order.operations = {op.id};
        r.operations = {op};
        d.rush = r;
        break;
      }
      case 2:
        d.kind = Disturbance::Kind::back_order;
        d.order = s.orders[static_cast<std::size_t>(pick(0, static_cast<int>(s.orders.size()) - 1))].order.id;
        d.at = std::max(d.at, s.orders[0].order.arrival);
        d.extend_by = pick(30, 600);
        break;
      default:
        d.kind = Disturbance::Kind::tool_damage;
        d.item = "T1";
        break;
    }
    s.disturbances.push_back(d);
  }
  std::stable_sort(s.disturbances.begin(), s.disturbances.end(),
                   [](const Disturbance& a, const Disturbance& b) { return a.at < b.at; });
  return s;
}

}  // namespace mas::test
