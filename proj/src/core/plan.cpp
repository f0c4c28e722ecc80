#include "mas/plan.hpp"

#include <algorithm>
#include <sstream>

namespace mas {

bool Plan::has(const std::string& op) const {
  auto it = slots_.lower_bound(SlotKey{op, std::numeric_limits<int>::min()});
  return it != slots_.end() && it->first.op == op;
}

std::vector<Slot> Plan::slots_of(const std::string& op) const {
  std::vector<Slot> out;
  for (auto it = slots_.lower_bound(SlotKey{op, std::numeric_limits<int>::min()});
       it != slots_.end() && it->first.op == op; ++it) {
    out.push_back(it->second);
  }
  return out;
}

std::vector<Slot> Plan::on_machine(const std::string& machine) const {
  std::vector<Slot> out;
  for (const auto& [key, s] : slots_) {
    if (s.machine == machine) out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const Slot& a, const Slot& b) {
    return std::tie(a.start, a.op, a.part) < std::tie(b.start, b.op, b.part);
  });
  return out;
}

std::vector<Slot> Plan::erase(const std::string& op) {
  std::vector<Slot> removed = slots_of(op);
  for (const Slot& s : removed) slots_.erase(s.key());
  std::erase_if(reservations_, [&](const Reservation& r) { return r.op == op; });
  std::erase_if(transports_,
                [&](const TransportBooking& t) { return t.from_op == op || t.to_op == op; });
  return removed;
}

void Plan::erase_reservations_if(const std::function<bool(const Reservation&)>& pred) {
  std::erase_if(reservations_, pred);
}

void Plan::set_frozen(const SlotKey& key, bool frozen) {
  auto it = slots_.find(key);
  if (it != slots_.end()) it->second.frozen = frozen;
}

void Plan::clear_frozen() {
  for (auto& [key, s] : slots_) s.frozen = false;
}

bool Plan::operator==(const Plan& o) const {
  if (slots_ != o.slots_) return false;
  auto r1 = reservations_, r2 = o.reservations_;
  std::sort(r1.begin(), r1.end());
  std::sort(r2.begin(), r2.end());
  if (r1 != r2) return false;
  auto t1 = transports_, t2 = o.transports_;
  std::sort(t1.begin(), t1.end());
  std::sort(t2.begin(), t2.end());
  return t1 == t2;
}

Minutes makespan(const Plan& plan) {
  if (plan.empty()) return 0;
  Minutes lo = kForever, hi = -kForever;
  for (const auto& [key, s] : plan.slots()) {
    lo = std::min(lo, s.start);
    hi = std::max(hi, s.end);
  }
  return hi - lo;
}

bool shift_ends_at(const Machine& machine, Minutes t) {
  if (t <= 0) return false;
  auto before = machine.calendar.windows({t - 1, t});
  auto after = machine.calendar.windows({t, t + 1});
  return !before.empty() && after.empty();
}

std::optional<Minutes> next_shift_start(const Machine& machine, Minutes t, Minutes horizon_end) {
  if (t >= horizon_end) return std::nullopt;
  for (const Interval& w : machine.available({t, horizon_end})) {
    // A window that is merely clipped at t continues the current shift.
    if (w.start > t || machine.calendar.windows({t - 1, t}).empty()) return w.start;
  }
  return std::nullopt;
}

std::vector<Gap> find_gaps(const Machine& machine, std::span<const Slot> booked,
                           Minutes min_duration, Interval window, Direction direction) {
  std::vector<Interval> busy;
  for (const Slot& s : booked) {
    if (s.machine == machine.id) busy.push_back(s.interval());
  }
  std::sort(busy.begin(), busy.end());

  std::vector<Gap> gaps;
  for (const Interval& w : machine.available(window)) {
    Minutes cursor = w.start;
    auto emit = [&](Minutes end, bool shift_end) {
      if (end - cursor >= min_duration && end > cursor) {
        gaps.push_back(Gap{machine.id, {cursor, end}, shift_end});
      }
    };
    for (const Interval& b : busy) {
      if (b.end <= cursor || b.start >= w.end) continue;
      if (b.start > cursor) emit(b.start, false);
      cursor = std::max(cursor, b.end);
      if (cursor >= w.end) break;
    }
    if (cursor < w.end) emit(w.end, shift_ends_at(machine, w.end));
  }
  if (direction == Direction::backward) std::reverse(gaps.begin(), gaps.end());
  return gaps;
}

InsertResult insert_slot(Plan& plan, const Slot& slot, const Machine& machine) {
  InsertResult r;
  if (slot.end <= slot.start) {
    r.ok = false;
    r.reason = "empty slot";
    return r;
  }
  for (const Slot& other : plan.on_machine(machine.id)) {
    if (other.key() == slot.key()) continue;
    if (other.interval().overlaps(slot.interval())) {
      r.ok = false;
      r.conflicting_slot = other.key();
      r.reason = "overlaps slot " + other.op + "#" + std::to_string(other.part);
      return r;
    }
  }
  const Interval core{slot.start, slot.end - slot.overdraft};
  auto windows = machine.available({core.start, core.end});
  const bool inside = windows.size() == 1 && windows[0] == core;
  const bool tail_ok =
      slot.overdraft == 0 ||
      (shift_ends_at(machine, core.end) && machine.up_at(core.end) &&
       std::all_of(machine.outages.begin(), machine.outages.end(),
                   [&](const Interval& o) { return !o.overlaps(slot.interval()); }));
  if (!inside || !tail_ok) {
    r.ok = false;
    r.violated_window = core;
    r.reason = "outside working time";
    return r;
  }
  plan.put(slot);
  return r;
}

std::vector<Slot> remove_slot(Plan& plan, const std::string& op) { return plan.erase(op); }

const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::precedence: return "precedence";
    case ViolationKind::disjunctive: return "disjunctive";
    case ViolationKind::out_of_shift: return "out-of-shift";
    case ViolationKind::machine_down: return "machine-down";
    case ViolationKind::release: return "release";
    case ViolationKind::missing_reservation: return "missing-reservation";
    case ViolationKind::resource_overbooked: return "resource-overbooked";
    case ViolationKind::missing_transport: return "missing-transport";
    case ViolationKind::transport_overbooked: return "transport-overbooked";
    case ViolationKind::duration_mismatch: return "duration-mismatch";
    case ViolationKind::capability: return "capability";
  }
  return "?";
}

std::size_t ValidationReport::count(ViolationKind k) const {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; }));
}

namespace {

/// Peak of a set of +1/-1 sweep events; ends sort before starts at equal times.
int sweep_peak(std::vector<std::pair<Minutes, int>>& events) {
  std::sort(events.begin(), events.end());
  int cur = 0, peak = 0;
  for (const auto& [t, d] : events) {
    cur += d;
    peak = std::max(peak, cur);
  }
  return peak;
}

std::string slot_name(const Slot& s) {
  std::ostringstream os;
  os << s.op;
  if (s.split) os << "#" << s.part;
  os << "@" << s.machine << "[" << s.start << "," << s.end << ")";
  return os.str();
}

}  // namespace

int peak_usage(const std::vector<Reservation>& reservations, const std::string& item, Interval when,
               const std::function<bool(const Reservation&)>& ignore) {
  std::vector<std::pair<Minutes, int>> ev;
  for (const Reservation& r : reservations) {
    if (r.item != item || !r.when.overlaps(when)) continue;
    if (ignore && ignore(r)) continue;
    ev.emplace_back(std::max(r.when.start, when.start), +1);
    ev.emplace_back(std::min(r.when.end, when.end), -1);
  }
  return sweep_peak(ev);
}

int peak_transports(const std::vector<TransportBooking>& transports, const std::string& area,
                    Interval when) {
  std::vector<std::pair<Minutes, int>> ev;
  for (const TransportBooking& t : transports) {
    if (t.area != area || !t.when.overlaps(when)) continue;
    ev.emplace_back(std::max(t.when.start, when.start), +1);
    ev.emplace_back(std::min(t.when.end, when.end), -1);
  }
  return sweep_peak(ev);
}

ValidationReport validate_plan(const Plan& plan, const ShopModel& model) {
  ValidationReport rep;
  auto add = [&](ViolationKind k, std::string msg) { rep.violations.push_back({k, std::move(msg)}); };

  for (const auto& [key, s] : plan.slots()) {
    if (!model.operations.count(s.op)) rep.structural.push_back("slot references unknown operation '" + s.op + "'");
    if (!model.machines.count(s.machine)) rep.structural.push_back("slot references unknown machine '" + s.machine + "'");
  }
  for (const Reservation& r : plan.reservations()) {
    if (!plan.slots().count({r.op, r.part})) rep.structural.push_back("reservation for unplaced operation '" + r.op + "'");
  }
  for (const TransportBooking& t : plan.transports()) {
    if (!plan.has(t.from_op) || !plan.has(t.to_op)) {
      rep.structural.push_back("transport between unplaced operations '" + t.from_op + "' -> '" + t.to_op + "'");
    }
  }
  if (!rep.structural.empty()) return rep;

  // Disjunctive: slots sharing a machine must not overlap.
  std::map<std::string, std::vector<Slot>> per_machine;
  for (const auto& [key, s] : plan.slots()) per_machine[s.machine].push_back(s);
  for (auto& [mid, slots] : per_machine) {
    std::sort(slots.begin(), slots.end(),
              [](const Slot& a, const Slot& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < slots.size(); ++i) {
      for (std::size_t j = i + 1; j < slots.size() && slots[j].start < slots[i].end; ++j) {
        add(ViolationKind::disjunctive, slot_name(slots[i]) + " overlaps " + slot_name(slots[j]));
      }
    }
  }

  // Placement of each slot: working time, outages, capability, release.
  for (const auto& [key, s] : plan.slots()) {
    const Machine& m = model.machine(s.machine);
    const Operation& op = model.operation(s.op);
    const Interval core{s.start, s.end - s.overdraft};
    auto windows = m.calendar.windows(core);
    if (core.empty() || windows.size() != 1 || windows[0] != core ||
        (s.overdraft > 0 && !shift_ends_at(m, core.end))) {
      add(ViolationKind::out_of_shift, slot_name(s) + " is outside working time");
    }
    for (const Interval& o : m.outages) {
      if (o.overlaps(s.interval())) add(ViolationKind::machine_down, slot_name(s) + " runs while the machine is down");
    }
    if (!capable(m, op)) add(ViolationKind::capability, slot_name(s) + " on an incapable machine");
    auto oit = model.orders.find(op.order);
    if (oit != model.orders.end() && s.start < oit->second.release) {
      add(ViolationKind::release, slot_name(s) + " starts before release");
    }
  }

  // Durations and shift-split part chains.
  std::map<std::string, std::vector<Slot>> per_op;
  for (const auto& [key, s] : plan.slots()) per_op[s.op].push_back(s);
  std::map<std::string, Interval> op_span;
  for (auto& [op_id, parts] : per_op) {
    const Operation& op = model.operation(op_id);
    Minutes total = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      total += parts[i].duration();
      if (i > 0) {
        if (parts[i].machine != parts[0].machine) {
          add(ViolationKind::precedence, "parts of " + op_id + " on different machines");
        }
        if (parts[i].start < parts[i - 1].end) {
          add(ViolationKind::precedence, slot_name(parts[i]) + " starts before its previous part ends");
        }
      }
    }
    if (total != op.duration) {
      add(ViolationKind::duration_mismatch, op_id + " booked for " + std::to_string(total) +
                                                " of " + std::to_string(op.duration) + " minutes");
    }
    op_span[op_id] = {parts.front().start, parts.back().end};
  }

  // Precedence along each order's chain, tightened by transport time.
  auto check_pair = [&](const std::string& a, const std::string& b) {
    const auto pa = per_op.find(a);
    const auto pb = per_op.find(b);
    if (pa == per_op.end() || pb == per_op.end()) return;
    const Slot& last = pa->second.back();
    const Slot& first = pb->second.front();
    const Minutes lag = model.transit(last.machine, first.machine);
    if (first.start < last.end + lag) {
      add(ViolationKind::precedence, slot_name(first) + " starts before " + slot_name(last) +
                                         " ends" + (lag ? " plus transit" : ""));
      return;
    }
    if (lag > 0) {
      const bool booked = std::any_of(
          plan.transports().begin(), plan.transports().end(), [&](const TransportBooking& t) {
            return t.from_op == a && t.to_op == b && t.when.start >= last.end &&
                   t.when.end <= first.start && t.when.length() >= lag;
          });
      if (!booked) add(ViolationKind::missing_transport, "no transport booked from " + a + " to " + b);
    }
  };
  for (const auto& [oid, order] : model.orders) {
    auto st = model.stages(oid);
    for (std::size_t i = 0; i + 1 < st.size(); ++i) {
      for (const std::string& a : st[i]) {
        for (const std::string& b : st[i + 1]) check_pair(a, b);
      }
    }
    if (order.after && model.orders.count(*order.after) && !st.empty()) {
      Minutes prev_end = -kForever;
      for (const std::string& op : model.order(*order.after).operations) {
        if (op_span.count(op)) prev_end = std::max(prev_end, op_span[op].end);
      }
      for (const std::string& op : st.front()) {
        if (op_span.count(op) && op_span[op].start < prev_end) {
          add(ViolationKind::precedence, op + " starts before predecessor order " + *order.after + " ends");
        }
      }
    }
  }

  // Resource reservations cover every slot and never exceed stock.
  for (const auto& [key, s] : plan.slots()) {
    const Operation& op = model.operation(s.op);
    for (const ResourceNeed& need : op.resources) {
      const bool covered = std::any_of(
          plan.reservations().begin(), plan.reservations().end(), [&](const Reservation& r) {
            return r.op == s.op && r.part == s.part && r.item == need.item &&
                   r.when.contains(s.interval());
          });
      if (!covered) add(ViolationKind::missing_reservation, slot_name(s) + " lacks " + need.item);
    }
  }
  std::map<std::string, std::vector<std::pair<Minutes, int>>> usage;
  for (const Reservation& r : plan.reservations()) {
    usage[r.item].emplace_back(r.when.start, +1);
    usage[r.item].emplace_back(r.when.end, -1);
  }
  for (auto& [item, ev] : usage) {
    auto st = model.stock.find(item);
    const int initial = st == model.stock.end() ? 0 : st->second.initial;
    if (st != model.stock.end()) {
      for (Minutes t : st->second.consumed) ev.emplace_back(t, +1);  // stock shrinks = usage grows
    }
    std::sort(ev.begin(), ev.end());
    int cur = 0;
    for (const auto& [t, d] : ev) {
      cur += d;
      if (cur > initial) {
        add(ViolationKind::resource_overbooked, item + " overbooked at " + std::to_string(t));
        break;
      }
    }
  }

  std::map<std::string, std::vector<std::pair<Minutes, int>>> moves;
  for (const TransportBooking& t : plan.transports()) {
    moves[t.area].emplace_back(t.when.start, +1);
    moves[t.area].emplace_back(t.when.end, -1);
  }
  for (auto& [area, ev] : moves) {
    if (sweep_peak(ev) > model.transport_capacity(area)) {
      add(ViolationKind::transport_overbooked, "transport capacity of " + area + " exceeded");
    }
  }
  return rep;
}

}  // namespace mas
