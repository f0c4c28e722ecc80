#include "mas/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mas/agents/resources.hpp"

namespace mas::dispatch {

using agents::MessageKind;
using indexes::Index;

const char* to_string(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::placed: return "placed";
    case OutcomeStatus::needs_approval: return "needs-approval";
    case OutcomeStatus::waiting: return "waiting";
    case OutcomeStatus::failed: return "failed";
  }
  return "?";
}

const char* to_string(OverdraftDecision d) {
  switch (d) {
    case OverdraftDecision::allowed: return "allowed";
    case OverdraftDecision::needs_approval: return "needs-approval";
    case OverdraftDecision::denied: return "denied";
  }
  return "?";
}

std::vector<std::string> Context::scope_of(const Order& order) const {
  if (scope) return scope(order);
  std::vector<std::string> all;
  for (const auto& [id, m] : model.machines) all.push_back(id);
  return all;
}

std::vector<std::string> filter_machines(const Operation& op, const ShopModel& model,
                                         const std::vector<std::string>& scope, Minutes now) {
  std::vector<std::string> out;
  for (const std::string& id : scope) {
    auto it = model.machines.find(id);
    if (it == model.machines.end()) continue;
    if (capable(it->second, op) && it->second.up_at(now)) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

OverdraftDecision apply_overdraft(Minutes excess, int priority, Minutes limit, bool approved) {
  if (excess <= 0 || excess >= limit) return OverdraftDecision::denied;
  if (priority >= 5) return OverdraftDecision::allowed;
  if (priority == 4) return approved ? OverdraftDecision::allowed : OverdraftDecision::needs_approval;
  return OverdraftDecision::denied;
}

std::vector<Minutes> split_lots(const std::vector<Minutes>& lots, Minutes free_before_end,
                                ShiftSplitMode mode, int k) {
  const Minutes total = std::accumulate(lots.begin(), lots.end(), Minutes{0});
  if (total <= free_before_end) return {total};
  if (free_before_end <= 0) return {};
  Minutes cut = 0;
  switch (mode) {
    case ShiftSplitMode::none: return {};
    case ShiftSplitMode::within_lot: cut = free_before_end; break;
    case ShiftSplitMode::after_lot:
      for (Minutes l : lots) {
        if (cut + l > free_before_end) break;
        cut += l;
      }
      break;
    case ShiftSplitMode::after_k_lots: {
      if (k < 1 || static_cast<std::size_t>(k) >= lots.size()) return {};
      cut = std::accumulate(lots.begin(), lots.begin() + k, Minutes{0});
      if (cut > free_before_end) return {};
      break;
    }
  }
  if (cut <= 0) return {};
  return {cut, total - cut};
}

std::vector<Minutes> split_across_shifts(const Operation& op, Minutes free_before_end,
                                         ShiftSplitMode mode, int k) {
  return split_lots(op.lot_lengths(), free_before_end, mode, k);
}

std::vector<Operation> split_long_runner(const Operation& op, Minutes threshold, Minutes min_part) {
  if (op.duration <= threshold || op.duration < 2 * min_part) return {op};
  const Minutes n = std::max<Minutes>(2, (op.duration + 2 * min_part - 1) / (2 * min_part));
  const Minutes base = op.duration / n;
  std::vector<Operation> parts;
  for (Minutes i = 0; i < n; ++i) {
    Operation p = op;
    p.id = op.id + "/" + std::to_string(i + 1);
    p.split_of = op.id;
    p.duration = (i == n - 1) ? op.duration - base * (n - 1) : base;
    p.robustness = op.robustness / n;
    p.lots = std::max<int>(1, static_cast<int>(op.lots / n));
    parts.push_back(std::move(p));
  }
  return parts;
}

int dynamic_priority(int base, Minutes wait_time, Minutes escalation_interval) {
  if (escalation_interval <= 0) {
    throw Error(Error::Code::invalid_argument, "escalation interval must be positive");
  }
  const Minutes steps = std::max<Minutes>(0, wait_time) / escalation_interval;
  return static_cast<int>(std::min<Minutes>(5, base + steps));
}

int dynamic_priority(const Order& order, Minutes now, Minutes escalation_interval) {
  return dynamic_priority(order.priority, now - order.arrival, escalation_interval);
}

namespace {

struct Bounds {
  bool ok = true;
  Minutes earliest = 0;
  Minutes latest_end = 0;
  std::vector<TransportBooking> transports;
};

Direction direction_of(Strategy s) { return s == Strategy::opt ? Direction::backward : Direction::forward; }

Bounds bounds_on(const Context& ctx, const Operation& op, const std::string& machine, Minutes deadline) {
  const ShopModel& model = ctx.model;
  const Order& order = model.order(op.order);
  Bounds b;
  b.earliest = std::max(order.release, ctx.now);
  b.latest_end = std::min(deadline, ctx.horizon_end());

  if (order.after && model.orders.count(*order.after)) {
    for (const std::string& o : model.order(*order.after).operations) {
      for (const Slot& s : ctx.plan.slots_of(o)) b.earliest = std::max(b.earliest, s.end);
    }
  }
  for (const auto& [oid, other] : model.orders) {
    if (other.after != order.id) continue;
    for (const std::string& o : other.operations) {
      for (const Slot& s : ctx.plan.slots_of(o)) b.latest_end = std::min(b.latest_end, s.start);
    }
  }

  const auto stages = model.stages(op.order);
  std::size_t idx = 0;
  while (idx < stages.size() &&
         std::find(stages[idx].begin(), stages[idx].end(), op.id) == stages[idx].end()) {
    ++idx;
  }
  if (idx == stages.size()) {
    b.ok = false;
    return b;
  }
  if (idx > 0) {
    for (const std::string& pred : stages[idx - 1]) {
      const auto slots = ctx.plan.slots_of(pred);
      if (slots.empty()) continue;
      const Slot& last = slots.back();
      if (model.transit(last.machine, machine) == 0) {
        b.earliest = std::max(b.earliest, last.end);
        continue;
      }
      auto tc = agents::la_check_transfer(model, ctx.plan, b.transports, last.machine, machine,
                                          last.end, b.latest_end, Direction::forward);
      if (!tc.feasible) {
        b.ok = false;
        return b;
      }
      tc.booking.from_op = pred;
      tc.booking.to_op = op.id;
      b.earliest = std::max(b.earliest, tc.booking.when.end);
      b.transports.push_back(tc.booking);
    }
  }
  if (idx + 1 < stages.size()) {
    for (const std::string& succ : stages[idx + 1]) {
      const auto slots = ctx.plan.slots_of(succ);
      if (slots.empty()) continue;
      const Slot& first = slots.front();
      if (model.transit(machine, first.machine) == 0) {
        b.latest_end = std::min(b.latest_end, first.start);
        continue;
      }
      auto tc = agents::la_check_transfer(model, ctx.plan, b.transports, machine, first.machine,
                                          b.earliest + op.duration, first.start, Direction::backward);
      if (!tc.feasible) {
        b.ok = false;
        return b;
      }
      tc.booking.from_op = op.id;
      tc.booking.to_op = succ;
      b.latest_end = std::min(b.latest_end, tc.booking.when.start);
      b.transports.push_back(tc.booking);
    }
  }
  if (b.latest_end - b.earliest < 1) b.ok = false;
  return b;
}

/// Earliest (forward) or latest (backward) start in [lo, hi - d] where every
/// needed item has a free unit for the whole run.
std::optional<Minutes> fit_resources(const Context& ctx, const Operation& op, Minutes lo, Minutes hi,
                                     Minutes d, Direction dir, const agents::ReservationFilter& ignore) {
  if (hi - lo < d) return std::nullopt;
  if (op.resources.empty()) return dir == Direction::forward ? lo : hi - d;
  for (const ResourceNeed& need : op.resources) {
    if (ctx.model.stock_of(need.item) < 1) return std::nullopt;
  }
  Minutes s = dir == Direction::forward ? lo : hi - d;
  while (s >= lo && s + d <= hi) {
    const Interval w{s, s + d};
    bool ok = true;
    Minutes next = dir == Direction::forward ? kForever : -kForever;
    for (const ResourceNeed& need : op.resources) {
      if (agents::free_stock(ctx.model, ctx.plan, need.item, w, ignore) >= 1) continue;
      ok = false;
      for (const Reservation& r : ctx.plan.reservations()) {
        if (r.item != need.item || !r.when.overlaps(w) || (ignore && ignore(r))) continue;
        next = dir == Direction::forward ? std::min(next, r.when.end) : std::max(next, r.when.start);
      }
    }
    if (ok) return s;
    s = dir == Direction::forward ? std::max(s + 1, next) : std::min(s - 1, next - d);
  }
  return std::nullopt;
}

bool resources_free(const Context& ctx, const Operation& op, Interval w,
                    const agents::ReservationFilter& ignore) {
  for (const ResourceNeed& need : op.resources) {
    if (agents::free_stock(ctx.model, ctx.plan, need.item, w, ignore) < 1) return false;
  }
  return true;
}

struct Scorer {
  const Context& ctx;
  const Operation& op;
  const Order& order;
  const Machine& machine;
  const std::vector<Slot>& booked;
  indexes::IndexMask mask;
  indexes::WeightConfig weights;

  /// Scores a run [start, end) whose last piece of length `last_len` starts at
  /// `last_start` inside `gap`.
  void operator()(Proposal& p, const Gap& gap, Minutes last_start, Minutes last_len,
                  Direction dir) const {
    indexes::IndexVector v;
    v.set(Index::machine, indexes::machine_index(op.requirement, machine.capability));
    const Minutes last_end = last_start + last_len;
    const Minutes usable = std::max(last_len, dir == Direction::forward ? gap.span.end - last_start
                                                                       : last_end - gap.span.start);
    v.set(Index::robustness, indexes::robustness_index(usable, last_len, op.robustness));
    const Minutes remainder = dir == Direction::forward
                                  ? std::max<Minutes>(0, gap.span.end - last_end - op.robustness)
                                  : std::max<Minutes>(0, p.start - op.robustness - gap.span.start);
    v.set(Index::position, indexes::position_index(remainder, machine.apt));

    std::optional<std::string> family = machine.mounted_family;
    Minutes idle = std::max<Minutes>(0, p.start - ctx.now);
    for (const Slot& s : booked) {
      if (s.end <= p.start) {
        family = ctx.model.operation(s.op).setup_family;
        idle = p.start - s.end;
      }
    }
    v.set(Index::setup, indexes::setup_index(family, op.setup_family, idle, machine.apt));

    double ts = 0.0;
    if (p.start >= order.release && p.end <= order.due) {
      ts = indexes::timeslot_index(p.start, p.end, order.window(), op.duration, dir);
    }
    v.set(Index::timeslot, ts);
    v.total = indexes::total_index(v, weights, mask);
    p.indexes = v;
    p.total = v.total;
  }
};

bool better(const Proposal& a, const Proposal& b, Direction dir) {
  if (a.total != b.total) return a.total > b.total;
  if (a.start != b.start) return dir == Direction::forward ? a.start < b.start : a.start > b.start;
  return a.machine < b.machine;
}

struct MachineView {
  std::vector<Slot> booked;  // blocking slots
  std::vector<Slot> free_for_us;  // displaceable slots
};

MachineView view_of(const Context& ctx, const std::string& machine) {
  MachineView v;
  for (Slot& s : ctx.plan.on_machine(machine)) {
    if (ctx.displaceable && ctx.displaceable(s)) {
      v.free_for_us.push_back(std::move(s));
    } else {
      v.booked.push_back(std::move(s));
    }
  }
  return v;
}

std::vector<std::string> victims_in(const MachineView& v, Interval w) {
  std::vector<std::string> out;
  for (const Slot& s : v.free_for_us) {
    if (s.interval().overlaps(w)) out.push_back(s.op);
  }
  return out;
}

agents::ReservationFilter ignore_ops(std::vector<std::string> ops) {
  if (ops.empty()) return {};
  return [ops = std::move(ops)](const Reservation& r) {
    return std::find(ops.begin(), ops.end(), r.op) != ops.end();
  };
}

Slot make_slot(const Operation& op, const std::string& machine, Minutes start, Minutes end) {
  Slot s;
  s.op = op.id;
  s.machine = machine;
  s.start = start;
  s.end = end;
  return s;
}

void plain_on_machine(const Context& ctx, const Operation& op, const Machine& m, const Request& req,
                      const Scorer& score, std::vector<Proposal>& out) {
  const Direction dir = direction_of(req.strategy);
  const Bounds b = bounds_on(ctx, op, m.id, req.deadline);
  if (!b.ok) return;
  const MachineView view = view_of(ctx, m.id);
  const Minutes d = op.duration;
  for (const Gap& gap : find_gaps(m, view.booked, d, {ctx.now, ctx.horizon_end()}, dir)) {
    const Minutes lo = std::max(gap.span.start, b.earliest);
    const Minutes hi = std::min(gap.span.end, b.latest_end);
    if (hi - lo < d) continue;
    // Displaced slots free their reservations only where they are displaced.
    std::vector<std::string> maybe_victims = victims_in(view, {lo, hi});
    auto start = fit_resources(ctx, op, lo, hi, d, dir, ignore_ops(maybe_victims));
    if (!start) continue;
    Proposal p;
    p.op = op.id;
    p.machine = m.id;
    p.start = *start;
    p.end = *start + d;
    p.victims = victims_in(view, {p.start, p.end});
    if (p.victims.size() != maybe_victims.size() &&
        !resources_free(ctx, op, {p.start, p.end}, ignore_ops(p.victims))) {
      continue;
    }
    p.parts.push_back(make_slot(op, m.id, p.start, p.end));
    p.transports = b.transports;
    score(p, gap, p.start, d, dir);
    out.push_back(std::move(p));
  }
}

void overdraft_on_machine(const Context& ctx, const Operation& op, const Order& order,
                          const Machine& m, const Request& req, const Scorer& score,
                          std::vector<Proposal>& out) {
  const Bounds b = bounds_on(ctx, op, m.id, req.deadline);
  if (!b.ok) return;
  const MachineView view = view_of(ctx, m.id);
  const Minutes d = op.duration;
  for (const Gap& gap : find_gaps(m, view.booked, 1, {ctx.now, ctx.horizon_end()}, Direction::forward)) {
    if (!gap.ends_at_shift_end) continue;
    const Minutes s = std::max(gap.span.start, b.earliest);
    const Minutes e = s + d;
    const Minutes excess = e - gap.span.end;
    if (s >= gap.span.end || excess <= 0 || e > b.latest_end) continue;
    const auto decision = apply_overdraft(excess, order.priority, ctx.model.config.overdraft_limit,
                                          req.options.overdraft_approved);
    if (decision == OverdraftDecision::denied) continue;
    const Interval run{s, e};
    const Interval tail{gap.span.end, e};
    const bool tail_free =
        std::none_of(view.booked.begin(), view.booked.end(),
                     [&](const Slot& x) { return x.interval().overlaps(tail); }) &&
        std::none_of(m.outages.begin(), m.outages.end(),
                     [&](const Interval& o) { return o.overlaps(run); });
    if (!tail_free) continue;
    Proposal p;
    p.op = op.id;
    p.machine = m.id;
    p.start = s;
    p.end = e;
    p.victims = victims_in(view, run);
    if (!resources_free(ctx, op, run, ignore_ops(p.victims))) continue;
    p.overdraft = excess;
    p.option = "overdraft";
    p.needs_approval = decision == OverdraftDecision::needs_approval;
    Slot slot = make_slot(op, m.id, s, e);
    slot.overdraft = excess;
    p.parts.push_back(slot);
    p.transports = b.transports;
    score(p, Gap{m.id, {gap.span.start, e}, true}, s, d, Direction::forward);
    out.push_back(std::move(p));
  }
}

void consume(std::vector<Minutes>& lots, Minutes amount) {
  while (amount > 0 && !lots.empty()) {
    if (lots.front() <= amount) {
      amount -= lots.front();
      lots.erase(lots.begin());
    } else {
      lots.front() -= amount;
      amount = 0;
    }
  }
}

void shift_split_on_machine(const Context& ctx, const Operation& op, const Machine& m,
                            const Request& req, const Scorer& score, std::vector<Proposal>& out) {
  const Bounds b = bounds_on(ctx, op, m.id, req.deadline);
  if (!b.ok) return;
  const MachineView view = view_of(ctx, m.id);
  const auto gaps = find_gaps(m, view.booked, 1, {ctx.now, ctx.horizon_end()}, Direction::forward);
  for (const Gap& gap : gaps) {
    if (!gap.ends_at_shift_end) continue;
    Minutes pos = std::max(gap.span.start, b.earliest);
    Minutes free = gap.span.end - pos;
    if (free <= 0 || free >= op.duration) continue;

    std::vector<Minutes> lots = op.lot_lengths();
    std::vector<Slot> parts;
    Gap current = gap;
    bool ok = false;
    for (int guard = 0; guard < 64; ++guard) {
      const auto cut = split_lots(lots, free, req.options.shift_split, req.options.split_lots);
      if (cut.empty()) break;
      Slot s = make_slot(op, m.id, pos, pos + cut[0]);
      s.split = true;
      s.part = static_cast<int>(parts.size());
      parts.push_back(s);
      consume(lots, cut[0]);
      if (cut.size() == 1) {
        ok = true;
        break;
      }
      const auto next = next_shift_start(m, current.span.end, ctx.horizon_end());
      if (!next) break;
      auto it = std::find_if(gaps.begin(), gaps.end(), [&](const Gap& g) { return g.span.start == *next; });
      if (it == gaps.end()) break;
      const Minutes remaining = std::accumulate(lots.begin(), lots.end(), Minutes{0});
      current = *it;
      pos = *next;
      free = current.span.length();
      if (remaining > free && !current.ends_at_shift_end) break;
    }
    if (!ok || parts.size() < 2) continue;
    if (parts.back().end > b.latest_end) continue;

    Proposal p;
    p.op = op.id;
    p.machine = m.id;
    p.start = parts.front().start;
    p.end = parts.back().end;
    bool resources_ok = true;
    for (const Slot& s : parts) {
      auto v = victims_in(view, s.interval());
      p.victims.insert(p.victims.end(), v.begin(), v.end());
    }
    for (const Slot& s : parts) {
      resources_ok = resources_ok && resources_free(ctx, op, s.interval(), ignore_ops(p.victims));
    }
    if (!resources_ok) continue;
    std::sort(p.victims.begin(), p.victims.end());
    p.victims.erase(std::unique(p.victims.begin(), p.victims.end()), p.victims.end());
    p.parts = parts;
    p.option = "shift-split";
    p.transports = b.transports;
    score(p, current, parts.back().start, parts.back().duration(), Direction::forward);
    out.push_back(std::move(p));
  }
}

nlohmann::json proposal_json(const Proposal& p) {
  nlohmann::json idx = nlohmann::json::object();
  for (std::size_t k = 0; k < indexes::kIndexCount; ++k) {
    const auto i = static_cast<Index>(k);
    if (p.indexes[i]) idx[indexes::to_string(i)] = *p.indexes[i];
  }
  return {{"operation", p.op}, {"machine", p.machine}, {"start", p.start},   {"end", p.end},
          {"total", p.total},  {"indexes", idx},       {"option", p.option}, {"overdraft", p.overdraft},
          {"victims", p.victims}};
}

}  // namespace

std::vector<Proposal> generate_proposals(Context& ctx, const std::string& op_id, const Request& req) {
  const Operation& op = ctx.model.operation(op_id);
  const Order& order = ctx.model.order(op.order);
  const Direction dir = direction_of(req.strategy);
  indexes::WeightConfig wc{ctx.model.config.weights, req.options.robustness};
  const auto mask = indexes::mask_for(req.strategy, req.options.robustness);
  std::vector<Proposal> out;
  for (const std::string& mid : filter_machines(op, ctx.model, ctx.scope_of(order), ctx.now)) {
    const Machine& m = ctx.model.machine(mid);
    const MachineView view = view_of(ctx, mid);
    Scorer score{ctx, op, order, m, view.booked, mask, wc};
    plain_on_machine(ctx, op, m, req, score, out);
  }
  std::stable_sort(out.begin(), out.end(),
                   [dir](const Proposal& a, const Proposal& b) { return better(a, b, dir); });
  return out;
}

std::optional<Proposal> negotiate(Context& ctx, const std::string& op_id, const Request& req,
                                  DispatchOutcome& outcome) {
  const Operation& op = ctx.model.operation(op_id);
  const Order& order = ctx.model.order(op.order);
  const Direction dir = direction_of(req.strategy);
  indexes::WeightConfig wc{ctx.model.config.weights, req.options.robustness};
  const auto mask = indexes::mask_for(req.strategy, req.options.robustness);
  const auto candidates = filter_machines(op, ctx.model, ctx.scope_of(order), ctx.now);

  std::string corr;
  if (ctx.messages) {
    corr = "cfp-" + std::to_string(ctx.messages->next_correlation());
    for (const std::string& mid : candidates) {
      ctx.messages->send(MessageKind::call_for_proposal, agents::joa(order.id), agents::ma(mid), corr,
                         {{"operation", op.id}, {"strategy", to_string(req.strategy)}, {"duration", op.duration}});
    }
  }

  std::map<std::string, std::vector<Proposal>> per_machine;
  for (const std::string& mid : candidates) {
    const Machine& m = ctx.model.machine(mid);
    const MachineView view = view_of(ctx, mid);
    Scorer score{ctx, op, order, m, view.booked, mask, wc};
    plain_on_machine(ctx, op, m, req, score, per_machine[mid]);
  }
  const bool any_plain = std::any_of(per_machine.begin(), per_machine.end(),
                                     [](const auto& kv) { return !kv.second.empty(); });
  const bool forcing = req.strategy == Strategy::force || req.strategy == Strategy::x_competition ||
                       req.strategy == Strategy::wait_x;
  if (!any_plain && forcing && req.options.overdraft) {
    for (const std::string& mid : candidates) {
      const Machine& m = ctx.model.machine(mid);
      const MachineView view = view_of(ctx, mid);
      Scorer score{ctx, op, order, m, view.booked, mask, wc};
      overdraft_on_machine(ctx, op, order, m, req, score, per_machine[mid]);
    }
  }
  auto count_where = [&](auto pred) {
    std::size_t n = 0;
    for (const auto& [mid, ps] : per_machine) n += std::count_if(ps.begin(), ps.end(), pred);
    return n;
  };
  const bool any_auto = count_where([](const Proposal& p) { return !p.needs_approval; }) > 0;
  const bool any_ask = count_where([](const Proposal& p) { return p.needs_approval; }) > 0;
  if (!any_auto && !any_ask && forcing && req.options.shift_split != ShiftSplitMode::none) {
    for (const std::string& mid : candidates) {
      const Machine& m = ctx.model.machine(mid);
      const MachineView view = view_of(ctx, mid);
      Scorer score{ctx, op, order, m, view.booked, mask, wc};
      shift_split_on_machine(ctx, op, m, req, score, per_machine[mid]);
    }
  }

  // Each machine agent answers with its best placement; automatic placements
  // outrank ones that still need a management decision.
  auto rank = [dir](const Proposal& a, const Proposal& b) {
    if (a.needs_approval != b.needs_approval) return !a.needs_approval;
    return better(a, b, dir);
  };
  std::optional<Proposal> winner;
  std::map<std::string, const Proposal*> best_of;
  for (auto& [mid, ps] : per_machine) {
    if (ps.empty()) continue;
    std::stable_sort(ps.begin(), ps.end(), rank);
    best_of[mid] = &ps.front();
    if (!winner || rank(ps.front(), *winner)) winner = ps.front();
  }

  if (ctx.messages) {
    for (const std::string& mid : candidates) {
      auto it = best_of.find(mid);
      if (it == best_of.end()) {
        ctx.messages->send(MessageKind::reject, agents::ma(mid), agents::joa(order.id), corr,
                           {{"operation", op.id}, {"reason", "no feasible placement"}});
      } else {
        ctx.messages->send(MessageKind::proposal, agents::ma(mid), agents::joa(order.id), corr,
                           proposal_json(*it->second));
      }
    }
  }
  if (!winner) return std::nullopt;
  if (winner->needs_approval) {
    outcome.approval = ApprovalNeed{order.id, op.id, winner->machine, winner->start, winner->overdraft};
    return winner;
  }
  if (ctx.messages) {
    for (const auto& [mid, p] : best_of) {
      ctx.messages->send(mid == winner->machine ? MessageKind::award : MessageKind::reject,
                         agents::joa(order.id), agents::ma(mid), corr,
                         {{"operation", op.id}, {"total", p->total}});
    }
  }
  outcome.proposal_log.push_back(op.id + "->" + winner->machine + "@" + std::to_string(winner->start) +
                                 " total=" + std::to_string(winner->total));
  return winner;
}

std::vector<std::string> unplace_order(Context& ctx, const std::string& order_id) {
  std::vector<std::string> removed;
  for (const std::string& op : ctx.model.order(order_id).operations) {
    const auto slots = ctx.plan.slots_of(op);
    if (slots.empty()) continue;
    const bool unstarted = std::all_of(slots.begin(), slots.end(),
                                       [&](const Slot& s) { return s.start >= ctx.now; });
    if (!unstarted) continue;
    ctx.plan.erase(op);
    removed.push_back(op);
  }
  return removed;
}

namespace {

std::vector<std::string> award_impl(Context& ctx, const Proposal& p) {
  std::vector<std::string> victim_orders;
  for (const std::string& v : p.victims) {
    if (!ctx.plan.has(v)) continue;
    const std::string& vo = ctx.model.operation(v).order;
    unplace_order(ctx, vo);
    if (std::find(victim_orders.begin(), victim_orders.end(), vo) == victim_orders.end()) {
      victim_orders.push_back(vo);
    }
  }
  const Operation& op = ctx.model.operation(p.op);
  const Machine& m = ctx.model.machine(p.machine);
  for (const Slot& s : p.parts) {
    const InsertResult r = insert_slot(ctx.plan, s, m);
    if (!r.ok) throw Error(Error::Code::runtime, "awarded placement rejected: " + r.reason);
    for (const ResourceNeed& need : op.resources) {
      const auto res = agents::resource_reserve(ctx.plan, ctx.model, op.id, s.part, need, s.interval());
      if (!res.ok) throw Error(Error::Code::runtime, "awarded placement lost its " + need.item);
      if (ctx.messages) {
        ctx.messages->send(MessageKind::reservation, agents::ma(p.machine),
                           agents::supply_agent(to_string(need.kind), m.area),
                           "res-" + std::to_string(ctx.messages->next_correlation()),
                           {{"operation", op.id}, {"item", need.item}, {"start", s.start}, {"end", s.end}});
      }
    }
  }
  for (const TransportBooking& t : p.transports) {
    if (t.when.empty()) continue;
    ctx.plan.add_transport(t);
    if (ctx.messages) {
      ctx.messages->send(MessageKind::reservation, agents::joa(op.order), agents::la(t.area),
                         "res-" + std::to_string(ctx.messages->next_correlation()),
                         {{"from", t.from_op}, {"to", t.to_op}, {"start", t.when.start}, {"end", t.when.end}});
    }
  }
  return victim_orders;
}

struct ModelUndo {
  std::string order;
  std::vector<std::string> operations;
  std::vector<Operation> removed;
  std::vector<std::string> added;

  void restore(ShopModel& model) const {
    for (const std::string& id : added) model.operations.erase(id);
    for (const Operation& op : removed) model.operations[op.id] = op;
    model.order(order).operations = operations;
  }
};

void replace_operation(ShopModel& model, ModelUndo& undo, const Operation& original,
                       const std::vector<Operation>& parts) {
  Order& order = model.order(original.order);
  undo.removed.push_back(original);
  model.operations.erase(original.id);
  std::erase(order.operations, original.id);
  for (const Operation& p : parts) {
    model.operations[p.id] = p;
    order.operations.push_back(p.id);
    undo.added.push_back(p.id);
  }
  std::sort(order.operations.begin(), order.operations.end(), [&](const std::string& a, const std::string& b) {
    return std::make_pair(model.operation(a).sequence, a) < std::make_pair(model.operation(b).sequence, b);
  });
}

}  // namespace

void award(Context& ctx, const Proposal& p) { award_impl(ctx, p); }

DispatchOutcome dispatch_chain(Context& ctx, const std::string& order_id, const Request& req) {
  DispatchOutcome out;
  const Plan backup = ctx.plan;
  ModelUndo undo{order_id, ctx.model.order(order_id).operations, {}, {}};
  const Direction dir = direction_of(req.strategy);
  const bool forcing = req.strategy != Strategy::opt;

  auto fail = [&](std::string reason, const std::string& op) {
    ctx.plan = backup;
    undo.restore(ctx.model);
    out.status = OutcomeStatus::failed;
    out.failure_reason = std::move(reason);
    out.blocking_operation = op;
    out.placed.clear();
    out.victim_orders.clear();
    return out;
  };

  auto stages = ctx.model.stages(order_id);
  if (dir == Direction::backward) std::reverse(stages.begin(), stages.end());
  std::vector<std::string> victim_orders;
  std::vector<std::string> placed_ops;
  for (const auto& stage : stages) {
    for (const std::string& op_id : stage) {
      if (ctx.plan.has(op_id)) continue;
      auto p = negotiate(ctx, op_id, req, out);
      if (p && p->needs_approval) {
        auto approval = out.approval;
        fail("overdraft needs approval", op_id);
        out.status = OutcomeStatus::needs_approval;
        out.approval = approval;
        return out;
      }
      if (p) {
        for (auto& v : award_impl(ctx, *p)) victim_orders.push_back(v);
        if (p->overdraft > 0) ++out.overdrafts;
        if (p->parts.size() > 1) ++out.shift_splits;
        placed_ops.push_back(op_id);
        continue;
      }
      const Operation op = ctx.model.operation(op_id);
      const auto& cfg = ctx.model.config;
      if (forcing && req.options.long_split && op.duration > cfg.long_split_threshold) {
        const auto parts = split_long_runner(op, cfg.long_split_threshold, cfg.long_split_min_part);
        if (parts.size() > 1) {
          replace_operation(ctx.model, undo, op, parts);
          Request sub = req;
          sub.options.long_split = false;
          bool all = true;
          for (const Operation& part : parts) {
            auto pp = negotiate(ctx, part.id, sub, out);
            if (!pp || pp->needs_approval) {
              all = false;
              break;
            }
            for (auto& v : award_impl(ctx, *pp)) victim_orders.push_back(v);
            if (pp->overdraft > 0) ++out.overdrafts;
            if (pp->parts.size() > 1) ++out.shift_splits;
          }
          if (all) {
            ++out.long_splits;
            continue;
          }
        }
      }
      return fail("no feasible placement for " + op_id, op_id);
    }
  }

  out.status = OutcomeStatus::placed;
  const Order& order = ctx.model.order(order_id);
  for (const std::string& op : order.operations) {
    for (const Slot& s : ctx.plan.slots_of(op)) {
      out.placed.push_back(s);
      if (s.end > order.due) out.due_violation = true;
    }
  }
  std::sort(victim_orders.begin(), victim_orders.end());
  victim_orders.erase(std::unique(victim_orders.begin(), victim_orders.end()), victim_orders.end());
  std::erase(victim_orders, order_id);
  out.victim_orders = victim_orders;
  return out;
}

DispatchOutcome dispatch_opt(Context& ctx, const std::string& order_id) {
  const Order& order = ctx.model.order(order_id);
  Request req{Strategy::opt, order.options, order.due};
  return dispatch_chain(ctx, order_id, req);
}

DispatchOutcome dispatch_force(Context& ctx, const std::string& order_id) {
  const Order& order = ctx.model.order(order_id);
  Request req{Strategy::force, order.options, kForever};
  return dispatch_chain(ctx, order_id, req);
}

DispatchOutcome dispatch_x_competition(Context& ctx, const std::string& order_id, int x) {
  DispatchOutcome out;
  const Order& order = ctx.model.order(order_id);
  const Minutes interval = ctx.model.config.escalation_interval;
  if (x < 1 || x > 5) throw Error(Error::Code::invalid_argument, "X must be within 1..5");
  if (dynamic_priority(order, ctx.now, interval) < x) {
    out.failure_reason = "order priority below X";
    return out;
  }
  const Plan backup = ctx.plan;
  auto previous = ctx.displaceable;
  ctx.displaceable = [&ctx, order_id, x, interval](const Slot& s) {
    if (s.start < ctx.now || s.frozen) return false;
    const Order& o = ctx.model.order(ctx.model.operation(s.op).order);
    return o.id != order_id && dynamic_priority(o, ctx.now, interval) < x;
  };
  Request req{Strategy::x_competition, order.options, kForever};
  out = dispatch_chain(ctx, order_id, req);
  ctx.displaceable = previous;
  if (out.status != OutcomeStatus::placed) return out;

  // Displaced orders are re-dispatched right away with Force.
  auto victims = out.victim_orders;
  std::sort(victims.begin(), victims.end(), [&](const std::string& a, const std::string& b) {
    const int pa = ctx.model.order(a).priority, pb = ctx.model.order(b).priority;
    return pa != pb ? pa > pb : a < b;
  });
  std::set<std::string> seen;
  out.victim_orders.clear();
  for (const std::string& v : victims) {
    if (!seen.insert(v).second) {
      ctx.plan = backup;
      DispatchOutcome loop;
      loop.failure_reason = "victim displaced twice";
      loop.blocking_operation = v;
      return loop;
    }
    DispatchOutcome vo = dispatch_force(ctx, v);
    if (vo.status == OutcomeStatus::placed) {
      out.victim_orders.push_back(v);
    } else {
      out.unplaced_victims.push_back(v);
    }
  }
  return out;
}

DispatchOutcome dispatch_wait_x(Context& ctx, const std::string& order_id) {
  const Order& order = ctx.model.order(order_id);
  Request req{Strategy::wait_x, order.options, order.due};
  DispatchOutcome out = dispatch_chain(ctx, order_id, req);
  if (out.status == OutcomeStatus::failed) out.status = OutcomeStatus::waiting;
  return out;
}

DispatchOutcome dispatch_order(Context& ctx, const std::string& order_id) {
  const Order& order = ctx.model.order(order_id);
  switch (order.strategy) {
    case Strategy::opt: return dispatch_opt(ctx, order_id);
    case Strategy::force: return dispatch_force(ctx, order_id);
    case Strategy::x_competition: return dispatch_x_competition(ctx, order_id, order.options.x);
    case Strategy::wait_x: return dispatch_wait_x(ctx, order_id);
    case Strategy::manual: break;
  }
  DispatchOutcome out;
  out.failure_reason = "manual dispatch requested";
  return out;
}

bool WaitPool::contains(const std::string& order) const {
  return std::any_of(entries.begin(), entries.end(), [&](const WaitEntry& e) { return e.order == order; });
}

void WaitPool::remove(const std::string& order) {
  std::erase_if(entries, [&](const WaitEntry& e) { return e.order == order; });
}

DispatchOutcome enqueue_wait_x(WaitPool& pool, const Order& order, Minutes deadline, Minutes now) {
  if (deadline <= now) throw Error(Error::Code::invalid_argument, "Wait-X deadline must lie in the future");
  pool.remove(order.id);
  pool.entries.push_back({order.id, deadline, now});
  std::sort(pool.entries.begin(), pool.entries.end(), [](const WaitEntry& a, const WaitEntry& b) {
    return std::tie(a.deadline, a.order) < std::tie(b.deadline, b.order);
  });
  DispatchOutcome out;
  out.status = OutcomeStatus::waiting;
  return out;
}

std::vector<std::pair<std::string, DispatchOutcome>> retry_waiting(Context& ctx, WaitPool& pool) {
  std::vector<std::pair<std::string, DispatchOutcome>> results;
  const auto entries = pool.entries;  // already in (deadline, order) order
  for (const WaitEntry& e : entries) {
    if (!ctx.model.orders.count(e.order)) {
      pool.remove(e.order);
      continue;
    }
    DispatchOutcome out = dispatch_wait_x(ctx, e.order);
    if (out.status == OutcomeStatus::placed) pool.remove(e.order);
    results.emplace_back(e.order, std::move(out));
  }
  return results;
}

std::vector<std::string> expire_waiting(WaitPool& pool, Minutes now) {
  std::vector<std::string> expired;
  for (const WaitEntry& e : pool.entries) {
    if (e.deadline <= now) expired.push_back(e.order);
  }
  for (const std::string& o : expired) pool.remove(o);
  return expired;
}

const char* to_string(ManualKind k) {
  switch (k) {
    case ManualKind::explicit_split: return "explicit-split";
    case ManualKind::manual_split: return "manual-split";
    case ManualKind::change_restrictions: return "change-restrictions";
    case ManualKind::delete_and_replace: return "delete-and-replace";
    case ManualKind::outsource: return "outsource";
  }
  return "?";
}

ManualKind manual_kind_from(const std::string& s) {
  for (ManualKind k : {ManualKind::explicit_split, ManualKind::manual_split, ManualKind::change_restrictions,
                       ManualKind::delete_and_replace, ManualKind::outsource}) {
    if (s == to_string(k)) return k;
  }
  throw Error(Error::Code::parse, "unknown manual action '" + s + "'");
}

namespace {

ManualResult explicit_split(Context& ctx, const ManualAction& a, const RedispatchFn& redispatch) {
  ManualResult res;
  const auto stages = ctx.model.stages(a.order);
  const int k = static_cast<int>(stages.size());
  if (a.parts < 1 || a.parts > k) {
    throw Error(Error::Code::invalid_argument, "cannot split " + std::to_string(k) + " stages into " +
                                                   std::to_string(a.parts) + " orders");
  }
  unplace_order(ctx, a.order);
  const Order original = ctx.model.order(a.order);
  std::vector<std::string> ids;
  std::size_t next_stage = 0;
  for (int j = 0; j < a.parts; ++j) {
    const int take = k / a.parts + (j < k % a.parts ? 1 : 0);
    Order sibling = original;
    sibling.id = j == 0 ? original.id : original.id + "/" + std::to_string(j + 1);
    sibling.operations.clear();
    sibling.state = OrderState::pending;
    if (j > 0) sibling.after = ids.back();
    for (int t = 0; t < take; ++t, ++next_stage) {
      for (const std::string& op : stages[next_stage]) {
        sibling.operations.push_back(op);
        ctx.model.operation(op).order = sibling.id;
      }
    }
    ids.push_back(sibling.id);
    ctx.model.orders[sibling.id] = std::move(sibling);
  }
  // Orders that waited for the original now wait for its last part.
  for (auto& [oid, o] : ctx.model.orders) {
    if (o.after == original.id && std::find(ids.begin(), ids.end(), oid) == ids.end()) o.after = ids.back();
  }
  res.new_orders.assign(ids.begin() + 1, ids.end());
  res.outcome.status = OutcomeStatus::placed;
  for (const std::string& id : ids) {
    DispatchOutcome o = redispatch(id);
    res.outcome.placed.insert(res.outcome.placed.end(), o.placed.begin(), o.placed.end());
    if (o.status != OutcomeStatus::placed) {
      res.outcome.status = o.status;
      res.outcome.failure_reason = o.failure_reason;
      res.outcome.blocking_operation = o.blocking_operation;
    }
  }
  return res;
}

ManualResult manual_split(Context& ctx, const ManualAction& a) {
  ManualResult res;
  const Plan backup = ctx.plan;
  const Operation op = ctx.model.operation(a.operation);
  if (op.order != a.order) throw Error(Error::Code::invalid_argument, "operation does not belong to the order");
  ModelUndo undo{a.order, ctx.model.order(a.order).operations, {}, {}};
  unplace_order(ctx, a.order);

  std::vector<std::pair<Gap, Minutes>> fills;
  Minutes remaining = op.duration;
  for (const Gap& g : a.gaps) {
    if (remaining == 0) break;
    const Minutes len = std::min(remaining, g.span.length());
    if (len <= 0) continue;
    fills.emplace_back(g, len);
    remaining -= len;
  }
  auto reject = [&](ViolationKind kind, std::string msg) {
    ctx.plan = backup;
    undo.restore(ctx.model);
    res.violations.push_back({kind, std::move(msg)});
    res.outcome.status = OutcomeStatus::failed;
    res.outcome.failure_reason = "manual placement rejected";
    return res;
  };
  if (remaining > 0) return reject(ViolationKind::duration_mismatch, "selected gaps are shorter than the operation");

  std::vector<Operation> parts;
  if (fills.size() == 1) {
    parts.push_back(op);
  } else {
    for (std::size_t i = 0; i < fills.size(); ++i) {
      Operation p = op;
      p.id = op.id + "/m" + std::to_string(i + 1);
      p.split_of = op.id;
      p.duration = fills[i].second;
      p.robustness = 0;
      p.lots = 1;
      parts.push_back(p);
    }
    replace_operation(ctx.model, undo, op, parts);
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Gap& g = fills[i].first;
    if (!ctx.model.machines.count(g.machine)) return reject(ViolationKind::capability, "unknown machine " + g.machine);
    Slot s = make_slot(parts[i], g.machine, g.span.start, g.span.start + fills[i].second);
    ctx.plan.put(s);
    for (const ResourceNeed& need : parts[i].resources) {
      if (!agents::resource_reserve(ctx.plan, ctx.model, s.op, 0, need, s.interval()).ok) {
        return reject(ViolationKind::missing_reservation, "no " + need.item + " free for " + s.op);
      }
    }
  }
  // The rest of the order is planned around the manual placement.
  Request req{Strategy::force, ctx.model.order(a.order).options, kForever};
  req.options.long_split = false;
  DispatchOutcome rest = dispatch_chain(ctx, a.order, req);
  if (rest.status != OutcomeStatus::placed) {
    return reject(ViolationKind::precedence, "remaining operations cannot be placed: " + rest.failure_reason);
  }
  const ValidationReport rep = validate_plan(ctx.plan, ctx.model);
  if (!rep.ok()) {
    ctx.plan = backup;
    undo.restore(ctx.model);
    res.violations = rep.violations;
    for (const std::string& s : rep.structural) res.violations.push_back({ViolationKind::precedence, s});
    res.outcome.status = OutcomeStatus::failed;
    res.outcome.failure_reason = "manual placement rejected";
    return res;
  }
  res.outcome = rest;
  return res;
}

}  // namespace

ManualResult manual_action(Context& ctx, const ManualAction& a, const RedispatchFn& redispatch) {
  if (!ctx.model.orders.count(a.order)) throw Error(Error::Code::not_found, "unknown order '" + a.order + "'");
  switch (a.kind) {
    case ManualKind::explicit_split: return explicit_split(ctx, a, redispatch);
    case ManualKind::manual_split: return manual_split(ctx, a);
    case ManualKind::change_restrictions: {
      Order& order = ctx.model.order(a.order);
      if (a.priority && (*a.priority < 1 || *a.priority > 5)) {
        throw Error(Error::Code::invalid_argument, "priority must be within 1..5");
      }
      if (a.due && *a.due <= order.release) throw Error(Error::Code::invalid_argument, "due must follow release");
      if (a.priority) order.priority = *a.priority;
      if (a.due) order.due = *a.due;
      unplace_order(ctx, a.order);
      ManualResult res;
      res.outcome = redispatch(a.order);
      return res;
    }
    case ManualKind::delete_and_replace: {
      if (!ctx.model.orders.count(a.victim)) throw Error(Error::Code::not_found, "unknown order '" + a.victim + "'");
      const Plan backup = ctx.plan;
      const OrderState victim_state = ctx.model.order(a.victim).state;
      unplace_order(ctx, a.victim);
      ctx.model.order(a.victim).state = OrderState::manual;
      ManualResult res;
      res.outcome = redispatch(a.order);
      if (res.outcome.status != OutcomeStatus::placed) {
        ctx.plan = backup;
        ctx.model.order(a.victim).state = victim_state;
        return res;
      }
      res.released_orders.push_back(a.victim);
      return res;
    }
    case ManualKind::outsource: {
      unplace_order(ctx, a.order);
      ctx.model.order(a.order).state = OrderState::outsourced;
      if (ctx.messages) {
        ctx.messages->send(MessageKind::scm_outsource, agents::joa(a.order), agents::kScm,
                           "scm-" + std::to_string(ctx.messages->next_correlation()), {{"order", a.order}});
      }
      ManualResult res;
      res.outsourced = true;
      res.outcome.status = OutcomeStatus::placed;
      return res;
    }
  }
  return {};
}

}  // namespace mas::dispatch
