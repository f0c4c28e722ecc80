#include "mas/model.hpp"

#include <algorithm>

namespace mas {

namespace {

void merge_into(std::vector<Interval>& out, Interval w) {
  if (!out.empty() && out.back().end >= w.start) {
    out.back().end = std::max(out.back().end, w.end);
  } else {
    out.push_back(w);
  }
}

Minutes floor_div(Minutes a, Minutes b) {
  Minutes q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::vector<Interval> ShiftCalendar::windows(Interval range) const {
  std::vector<Interval> out;
  if (range.empty()) return out;
  std::vector<Interval> sorted = weekly;
  std::sort(sorted.begin(), sorted.end());
  // Continuous calendars would otherwise expand week by week forever.
  if (sorted.size() == 1 && sorted[0].start == 0 && sorted[0].end == kWeek) {
    out.push_back(range);
    return out;
  }
  const Minutes first_week = floor_div(range.start, kWeek);
  const Minutes last_week = floor_div(range.end - 1, kWeek);
  for (Minutes wk = first_week; wk <= last_week; ++wk) {
    for (const Interval& w : sorted) {
      Interval abs{wk * kWeek + w.start, wk * kWeek + w.end};
      merge_into(out, abs);
    }
  }
  std::vector<Interval> clipped;
  for (const Interval& w : out) {
    Interval c{std::max(w.start, range.start), std::min(w.end, range.end)};
    if (!c.empty()) clipped.push_back(c);
  }
  return clipped;
}

void ShiftCalendar::check() const {
  for (std::size_t i = 0; i < weekly.size(); ++i) {
    const Interval& w = weekly[i];
    if (w.start < 0 || w.end > kWeek || w.empty()) {
      throw Error(Error::Code::invalid_argument, "shift window outside the week");
    }
    if (i > 0 && weekly[i - 1].end > w.start) {
      throw Error(Error::Code::invalid_argument, "shift windows overlap or are unsorted");
    }
  }
}

bool Machine::up_at(Minutes t) const {
  return std::none_of(outages.begin(), outages.end(),
                      [t](const Interval& o) { return o.contains(t); });
}

std::vector<Interval> Machine::available(Interval range) const {
  std::vector<Interval> result;
  for (const Interval& w : calendar.windows(range)) {
    std::vector<Interval> pieces{w};
    for (const Interval& o : outages) {
      std::vector<Interval> next;
      for (const Interval& p : pieces) {
        if (!p.overlaps(o)) {
          next.push_back(p);
          continue;
        }
        if (p.start < o.start) next.push_back({p.start, o.start});
        if (o.end < p.end) next.push_back({o.end, p.end});
      }
      pieces = std::move(next);
    }
    result.insert(result.end(), pieces.begin(), pieces.end());
  }
  return result;
}

bool capable(const Machine& m, const Operation& op) {
  bool process_ok = m.capability.processes.count(op.process) > 0;
  for (const std::string& alt : op.alternatives) {
    process_ok = process_ok || m.capability.processes.count(alt) > 0;
  }
  if (!process_ok) return false;
  for (const std::string& b : op.requirement.binary) {
    if (!m.capability.binary.count(b)) return false;
  }
  for (const auto& [name, need] : op.requirement.graded) {
    auto it = m.capability.graded.find(name);
    if (it == m.capability.graded.end() || it->second < need) return false;
  }
  return true;
}

std::vector<Minutes> Operation::lot_lengths() const {
  const int n = std::max(1, lots);
  const Minutes each = (duration + n - 1) / n;
  std::vector<Minutes> out;
  Minutes left = duration;
  for (int i = 0; i < n && left > 0; ++i) {
    const Minutes len = (i == n - 1) ? left : std::min(each, left);
    out.push_back(len);
    left -= len;
  }
  return out;
}

namespace {

template <class Map>
auto& lookup(Map& m, const std::string& id, const char* what) {
  auto it = m.find(id);
  if (it == m.end()) {
    throw Error(Error::Code::not_found, std::string("unknown ") + what + " '" + id + "'");
  }
  return it->second;
}

}  // namespace

const Machine& ShopModel::machine(const std::string& id) const { return lookup(machines, id, "machine"); }
Machine& ShopModel::machine(const std::string& id) { return lookup(machines, id, "machine"); }
const Order& ShopModel::order(const std::string& id) const { return lookup(orders, id, "order"); }
Order& ShopModel::order(const std::string& id) { return lookup(orders, id, "order"); }
const Operation& ShopModel::operation(const std::string& id) const {
  return lookup(operations, id, "operation");
}
Operation& ShopModel::operation(const std::string& id) { return lookup(operations, id, "operation"); }

Minutes ShopModel::transit(const std::string& from_machine, const std::string& to_machine) const {
  if (from_machine == to_machine) return 0;
  for (const TransitOverride& o : transit_overrides) {
    if ((o.from == from_machine && o.to == to_machine) ||
        (o.from == to_machine && o.to == from_machine)) {
      return o.transit;
    }
  }
  const Machine& a = machine(from_machine);
  const Machine& b = machine(to_machine);
  auto it = logistics.find(a.area);
  if (it == logistics.end()) return 0;
  return a.area == b.area ? it->second.transit_same_area : it->second.transit_cross_area;
}

const std::string& ShopModel::transport_area(const std::string& from_machine) const {
  return machine(from_machine).area;
}

int ShopModel::transport_capacity(const std::string& area) const {
  auto it = logistics.find(area);
  return it == logistics.end() ? std::numeric_limits<int>::max() : it->second.capacity;
}

int ShopModel::stock_of(const std::string& item) const {
  auto it = stock.find(item);
  return it == stock.end() ? 0 : it->second.current;
}

std::vector<std::vector<std::string>> ShopModel::stages(const std::string& order_id) const {
  std::map<int, std::vector<std::string>> by_seq;
  for (const std::string& op : order(order_id).operations) {
    by_seq[operation(op).sequence].push_back(op);
  }
  std::vector<std::vector<std::string>> out;
  for (auto& [seq, ops] : by_seq) {
    std::sort(ops.begin(), ops.end());
    out.push_back(std::move(ops));
  }
  return out;
}

const char* to_string(ResourceKind k) {
  switch (k) {
    case ResourceKind::tool: return "tool";
    case ResourceKind::jig: return "jig";
    case ResourceKind::material: return "material";
  }
  return "tool";
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::opt: return "OPT";
    case Strategy::force: return "Force";
    case Strategy::x_competition: return "X-Competition";
    case Strategy::wait_x: return "Wait-X";
    case Strategy::manual: return "Manual";
  }
  return "Force";
}

const char* to_string(ShiftSplitMode m) {
  switch (m) {
    case ShiftSplitMode::none: return "none";
    case ShiftSplitMode::within_lot: return "a";
    case ShiftSplitMode::after_lot: return "b";
    case ShiftSplitMode::after_k_lots: return "c";
  }
  return "none";
}

const char* to_string(OrderState s) {
  switch (s) {
    case OrderState::pending: return "pending";
    case OrderState::dispatched: return "dispatched";
    case OrderState::in_progress: return "in-progress";
    case OrderState::done: return "done";
    case OrderState::failed: return "failed";
    case OrderState::waiting: return "waiting";
    case OrderState::needs_approval: return "needs-approval";
    case OrderState::manual: return "manual-pending";
    case OrderState::outsourced: return "outsourced";
  }
  return "pending";
}

ResourceKind resource_kind_from(const std::string& s) {
  if (s == "tool") return ResourceKind::tool;
  if (s == "jig") return ResourceKind::jig;
  if (s == "material") return ResourceKind::material;
  throw Error(Error::Code::parse, "unknown resource kind '" + s + "'");
}

Strategy strategy_from(const std::string& s) {
  if (s == "OPT") return Strategy::opt;
  if (s == "Force") return Strategy::force;
  if (s == "X-Competition") return Strategy::x_competition;
  if (s == "Wait-X") return Strategy::wait_x;
  if (s == "Manual") return Strategy::manual;
  throw Error(Error::Code::parse, "unknown strategy '" + s + "'");
}

ShiftSplitMode shift_split_from(const std::string& s) {
  if (s == "none") return ShiftSplitMode::none;
  if (s == "a") return ShiftSplitMode::within_lot;
  if (s == "b") return ShiftSplitMode::after_lot;
  if (s == "c") return ShiftSplitMode::after_k_lots;
  throw Error(Error::Code::parse, "unknown shift-splitting mode '" + s + "'");
}

OrderState order_state_from(const std::string& s) {
  for (OrderState st : {OrderState::pending, OrderState::dispatched, OrderState::in_progress,
                        OrderState::done, OrderState::failed, OrderState::waiting,
                        OrderState::needs_approval, OrderState::manual, OrderState::outsourced}) {
    if (s == to_string(st)) return st;
  }
  throw Error(Error::Code::parse, "unknown order state '" + s + "'");
}

}  // namespace mas
