#include "mas/optimizer.hpp"

#include <algorithm>
#include <map>

#include "mas/agents/org.hpp"
#include "mas/agents/resources.hpp"
#include "mas/dispatch.hpp"

namespace mas::optimizer {

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::proposed: return "proposed";
    case RunStatus::accepted: return "accepted";
    case RunStatus::denied: return "denied";
    case RunStatus::restored: return "restored";
  }
  return "?";
}

double OptimizationRun::improvement() const {
  if (before <= 0) return 0.0;
  return 1.0 - static_cast<double>(after) / static_cast<double>(before);
}

nlohmann::json OptimizationRun::summary() const {
  nlohmann::json steps_json = nlohmann::json::array();
  for (const LevelStep& s : steps) {
    steps_json.push_back({{"level", s.level}, {"pass", s.pass}, {"makespan", s.makespan}, {"kept", s.kept}, {"note", s.note}});
  }
  return {{"id", id},
          {"seed", seed},
          {"created_at", created_at},
          {"status", to_string(status)},
          {"makespan_before", before},
          {"makespan_after", after},
          {"improvement", improvement()},
          {"levels", steps_json}};
}

std::set<std::string> implicitly_frozen(const Plan& plan, Minutes now) {
  std::set<std::string> out;
  for (const auto& [key, s] : plan.slots()) {
    if (s.start < now || s.frozen) out.insert(s.op);
  }
  return out;
}

std::optional<Plan> reschedule(const ShopModel& model, const Plan& base, const std::set<std::string>& frozen_in,
                               Minutes now, Strategy strategy) {
  std::set<std::string> frozen = frozen_in;
  for (auto& op : implicitly_frozen(base, now)) frozen.insert(op);

  Plan p;
  std::map<std::string, Minutes> order_start;
  for (const auto& [key, s] : base.slots()) {
    if (frozen.count(s.op)) {
      Slot copy = s;
      copy.frozen = true;
      p.put(copy);
      continue;
    }
    const std::string& order = model.operation(s.op).order;
    auto it = order_start.find(order);
    order_start[order] = it == order_start.end() ? s.start : std::min(it->second, s.start);
  }
  for (const Reservation& r : base.reservations()) {
    if (frozen.count(r.op)) p.add_reservation(r);
  }
  for (const TransportBooking& t : base.transports()) {
    if (frozen.count(t.from_op) && frozen.count(t.to_op)) p.add_transport(t);
  }

  std::vector<std::pair<Minutes, std::string>> orders;
  for (const auto& [order, start] : order_start) orders.emplace_back(start, order);
  std::sort(orders.begin(), orders.end());

  ShopModel scratch = model;
  dispatch::Context ctx{scratch, p, now, [&scratch](const Order& o) { return agents::org_scope(scratch, o); },
                        nullptr, {}};
  for (const auto& [start, order_id] : orders) {
    const Order& order = scratch.order(order_id);
    const bool opt = strategy == Strategy::opt;
    dispatch::Request req{opt ? Strategy::opt : Strategy::force, order.options, opt ? order.due : kForever};
    req.options.long_split = false;
    auto out = dispatch::dispatch_chain(ctx, order_id, req);
    if (out.status != dispatch::OutcomeStatus::placed) return std::nullopt;
  }
  if (!validate_plan(p, model).ok()) return std::nullopt;
  return p;
}

std::vector<std::string> machines_by_largest_gap(const Plan& plan) {
  std::map<std::string, std::vector<Slot>> per_machine;
  for (const auto& [key, s] : plan.slots()) per_machine[s.machine].push_back(s);
  std::vector<std::pair<Minutes, std::string>> ranked;
  for (auto& [mid, slots] : per_machine) {
    if (slots.size() < 2) continue;
    std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) { return a.start < b.start; });
    Minutes gap = 0;
    for (std::size_t i = 1; i < slots.size(); ++i) gap = std::max(gap, slots[i].start - slots[i - 1].end);
    ranked.emplace_back(-gap, mid);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> out;
  for (auto& [g, mid] : ranked) out.push_back(mid);
  return out;
}

std::set<std::string> critical_machines(const ShopModel& model, const Plan& plan) {
  std::set<std::string> out;
  if (plan.empty()) return out;
  const Slot* cur = nullptr;
  for (const auto& [key, s] : plan.slots()) {
    if (!cur || s.end > cur->end) cur = &s;
  }
  for (std::size_t guard = 0; cur && guard <= plan.size(); ++guard) {
    out.insert(cur->machine);
    const Slot* next = nullptr;
    // Chain predecessor without slack (earlier part, previous stage, or the order it waits for).
    if (cur->part > 0) {
      auto it = plan.slots().find({cur->op, cur->part - 1});
      if (it != plan.slots().end()) next = &it->second;
    }
    if (!next && model.operations.count(cur->op)) {
      const Operation& op = model.operation(cur->op);
      const auto stages = model.stages(op.order);
      for (std::size_t i = 1; i < stages.size() && !next; ++i) {
        if (std::find(stages[i].begin(), stages[i].end(), op.id) == stages[i].end()) continue;
        for (const std::string& pred : stages[i - 1]) {
          const auto slots = plan.slots_of(pred);
          if (slots.empty()) continue;
          auto it = plan.slots().find(slots.back().key());
          const Minutes ready = it->second.end + model.transit(it->second.machine, cur->machine);
          const bool waited_for_transport = std::any_of(
              plan.transports().begin(), plan.transports().end(),
              [&](const TransportBooking& t) { return t.from_op == pred && t.to_op == op.id && t.when.end == cur->start; });
          if (ready == cur->start || waited_for_transport) {
            next = &it->second;
            break;
          }
        }
      }
    }
    if (!next) {
      for (const auto& [key, s] : plan.slots()) {
        if (s.machine == cur->machine && s.end == cur->start) {
          next = &s;
          break;
        }
      }
    }
    cur = next;
  }
  return out;
}

std::set<std::string> complete_orders_inside(const ShopModel& model, const Plan& plan, Interval window) {
  std::set<std::string> out;
  for (const auto& [oid, order] : model.orders) {
    bool any = false, inside = true;
    for (const std::string& op : order.operations) {
      const auto slots = plan.slots_of(op);
      if (slots.empty()) {
        inside = false;
        break;
      }
      any = true;
      for (const Slot& s : slots) inside = inside && window.contains(s.interval());
    }
    if (any && inside) out.insert(order.operations.begin(), order.operations.end());
  }
  return out;
}

Interval random_window(const Plan& plan, std::mt19937_64& rng) {
  if (plan.empty()) return {0, 0};
  Minutes lo = kForever, hi = -kForever;
  for (const auto& [key, s] : plan.slots()) {
    lo = std::min(lo, s.start);
    hi = std::max(hi, s.end);
  }
  const Minutes span = hi - lo;
  const Minutes min_w = std::max<Minutes>(1, (span + 9) / 10);
  const Minutes max_w = std::max(min_w, span * 4 / 10);
  const Minutes width = min_w + static_cast<Minutes>(rng() % static_cast<std::uint64_t>(max_w - min_w + 1));
  const Minutes room = std::max<Minutes>(0, span - width);
  const Minutes start = lo + static_cast<Minutes>(rng() % static_cast<std::uint64_t>(room + 1));
  return {start, start + width};
}

namespace {

void note(const LevelContext& ctx, int level, int pass, const std::optional<Plan>& cand, bool kept, std::string text) {
  if (!ctx.steps) return;
  ctx.steps->push_back({level, pass, cand ? makespan(*cand) : 0, kept, std::move(text)});
}

/// Replaces `best` when the pass produced a strictly shorter valid plan.
bool take_if_better(Plan& best, const std::optional<Plan>& cand) {
  if (!cand || makespan(*cand) >= makespan(best)) return false;
  best = *cand;
  return true;
}

Plan with_moved(const ShopModel& model, const Plan& plan, const std::vector<Slot>& moved) {
  Plan p = plan;
  for (const Slot& s : moved) p.erase(s.op);
  for (const Slot& s : moved) {
    p.put(s);
    for (const ResourceNeed& need : model.operation(s.op).resources) {
      p.add_reservation({s.op, s.part, need.kind, need.item, s.interval()});
    }
  }
  return p;
}

}  // namespace

Plan level1_repair_swaps(const LevelContext& ctx, const Plan& plan, int passes) {
  Plan best = plan;
  std::set<std::string> pinned;
  constexpr int kMaxTrials = 60;
  for (int pass = 0; pass < passes; ++pass) {
    bool changed = false;
    int trials = 0;
    std::set<std::string> machines;
    for (const auto& [key, s] : best.slots()) machines.insert(s.machine);
    for (const std::string& mid : machines) {
      const auto slots = best.on_machine(mid);
      for (std::size_t i = 0; i + 1 < slots.size() && trials < kMaxTrials; ++i) {
        const Slot& a = slots[i];
        const Slot& b = slots[i + 1];
        if (a.split || b.split || a.start < ctx.now || a.frozen || b.frozen) continue;
        if (pinned.count(a.op) || pinned.count(b.op)) continue;
        if (ctx.model.operation(a.op).order == ctx.model.operation(b.op).order) continue;
        ++trials;
        Slot nb = b, na = a;
        nb.start = a.start;
        nb.end = a.start + b.duration();
        na.end = b.end;
        na.start = b.end - a.duration();
        std::set<std::string> frozen = pinned;
        frozen.insert({a.op, b.op});
        auto cand = reschedule(ctx.model, with_moved(ctx.model, best, {na, nb}), frozen, ctx.now, ctx.strategy);
        const bool kept = take_if_better(best, cand);
        if (kept) {
          pinned.insert({a.op, b.op});
          changed = true;
          note(ctx, 1, pass, cand, true, "swap " + a.op + " <-> " + b.op);
          break;  // this machine's order changed; move on
        }
      }
    }
    if (!changed) {
      note(ctx, 1, pass, std::nullopt, false, "no shortening swap");
      break;
    }
  }
  return best;
}

Plan level2_basic_shuffle(const LevelContext& ctx, const Plan& plan) {
  Plan best = plan;
  int pass = 0;
  for (const std::string& mid : machines_by_largest_gap(plan)) {
    std::set<std::string> frozen;
    for (const Slot& s : best.on_machine(mid)) frozen.insert(s.op);
    auto cand = reschedule(ctx.model, best, frozen, ctx.now, ctx.strategy);
    const bool kept = take_if_better(best, cand);
    note(ctx, 2, pass++, cand, kept, "freeze " + mid);
  }
  return best;
}

Plan level3_vertical_shuffle(const LevelContext& ctx, const Plan& plan, std::mt19937_64& rng, int passes) {
  Plan best = plan;
  for (int pass = 0; pass < passes && !best.empty(); ++pass) {
    const Interval w = random_window(best, rng);
    const auto frozen = complete_orders_inside(ctx.model, best, w);
    auto cand = reschedule(ctx.model, best, frozen, ctx.now, ctx.strategy);
    const bool kept = take_if_better(best, cand);
    note(ctx, 3, pass, cand, kept,
         "window [" + std::to_string(w.start) + "," + std::to_string(w.end) + ") froze " + std::to_string(frozen.size()));
  }
  return best;
}

Plan level4_horizontal_shuffle(const LevelContext& ctx, const Plan& plan, int passes) {
  Plan best = plan;
  if (ctx.model.machines.size() < 3 || best.empty()) {
    note(ctx, 4, 0, std::nullopt, false, "skipped: fewer than 3 machines");
    return best;
  }
  for (int pass = 0; pass < passes; ++pass) {
    const auto problem = critical_machines(ctx.model, best);
    Minutes lo = kForever, hi = -kForever;
    for (const auto& [key, s] : best.slots()) {
      lo = std::min(lo, s.start);
      hi = std::max(hi, s.end);
    }
    std::vector<std::pair<Minutes, std::string>> idle;
    for (const auto& [mid, m] : ctx.model.machines) {
      if (problem.count(mid)) continue;
      Minutes avail = 0;
      for (const Interval& w : m.available({lo, hi})) avail += w.length();
      for (const Slot& s : best.on_machine(mid)) {
        avail -= std::max<Minutes>(0, std::min(s.end, hi) - std::max(s.start, lo));
      }
      idle.emplace_back(-avail, mid);
    }
    if (idle.size() < 2) {
      note(ctx, 4, pass, std::nullopt, false, "skipped: fewer than 2 machines off the critical path");
      break;
    }
    std::sort(idle.begin(), idle.end());
    std::set<std::string> frozen;
    for (int k = 0; k < 2; ++k) {
      for (const Slot& s : best.on_machine(idle[static_cast<std::size_t>(k)].second)) frozen.insert(s.op);
    }
    auto cand = reschedule(ctx.model, best, frozen, ctx.now, ctx.strategy);
    const bool kept = take_if_better(best, cand);
    note(ctx, 4, pass, cand, kept, "freeze " + idle[0].second + ", " + idle[1].second);
    if (!kept) break;  // same freeze set next time
  }
  return best;
}

OptimizationRun optimize(const ShopModel& model, const Plan& base, Minutes now, std::uint64_t seed,
                         const OptimizerConfig& config) {
  OptimizationRun run;
  run.seed = seed;
  run.created_at = now;
  run.base = base;
  run.before = makespan(base);
  Plan cur = base;
  if (!validate_plan(base, model).ok()) {
    run.steps.push_back({0, 0, 0, false, "base plan does not validate"});
  } else if (!base.empty()) {
    std::mt19937_64 rng(seed);
    LevelContext ctx{model, now, config.strategy, &run.steps};
    cur = level1_repair_swaps(ctx, cur, config.level1_passes);
    cur = level2_basic_shuffle(ctx, cur);
    cur = level3_vertical_shuffle(ctx, cur, rng, config.level3_passes);
    cur = level4_horizontal_shuffle(ctx, cur, config.level4_passes);
  }
  if (makespan(cur) > run.before) cur = base;
  cur.clear_frozen();
  if (makespan(cur) == run.before) cur = base;
  run.candidate = cur;
  run.after = makespan(cur);
  return run;
}

void accept_run(OptimizationRun& run, Plan& live, std::uint64_t& version) {
  if (run.status != RunStatus::proposed) throw Error(Error::Code::conflict, "run " + run.id + " is not pending");
  if (run.plan_version != version) {
    throw Error(Error::Code::conflict, "plan changed since run " + run.id + " started");
  }
  live = run.candidate;
  run.accepted_version = ++version;
  run.status = RunStatus::accepted;
}

void deny_run(OptimizationRun& run) {
  if (run.status != RunStatus::proposed) throw Error(Error::Code::conflict, "run " + run.id + " is not pending");
  run.status = RunStatus::denied;
}

void restore_run(OptimizationRun& run, Plan& live, std::uint64_t& version) {
  if (run.status != RunStatus::accepted) throw Error(Error::Code::conflict, "run " + run.id + " was not accepted");
  if (version != run.accepted_version) {
    throw Error(Error::Code::conflict, "plan changed after run " + run.id + " was accepted");
  }
  live = run.base;
  ++version;
  run.status = RunStatus::restored;
}

}  // namespace mas::optimizer
