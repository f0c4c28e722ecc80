#include "mas/agents/resources.hpp"

#include <algorithm>
#include <set>

namespace mas::agents {

int free_stock(const ShopModel& model, const Plan& plan, const std::string& item, Interval when,
               const ReservationFilter& ignore) {
  return model.stock_of(item) - peak_usage(plan.reservations(), item, when, ignore);
}

ReserveResult resource_reserve(Plan& plan, const ShopModel& model, const std::string& op, int part,
                               const ResourceNeed& need, Interval when) {
  if (free_stock(model, plan, need.item, when) < 1) return {false, need.item};
  plan.add_reservation(Reservation{op, part, need.kind, need.item, when});
  return {};
}

DisturbResult resource_disturb(ShopModel& model, Plan& plan, const std::string& item, Minutes t,
                               MessageLog* log) {
  DisturbResult out;
  auto it = model.stock.find(item);
  if (it == model.stock.end() || it->second.current <= 0) return out;
  StockEntry& entry = it->second;
  entry.current -= 1;
  entry.consumed.push_back(t);

  std::vector<Reservation> live;
  for (const Reservation& r : plan.reservations()) {
    if (r.item == item && r.when.end > t) live.push_back(r);
  }
  std::sort(live.begin(), live.end(), [](const Reservation& a, const Reservation& b) {
    return std::tie(a.when.start, a.op, a.part) < std::tie(b.when.start, b.op, b.part);
  });

  std::set<std::string> affected;
  for (const Reservation& r : live) {
    if (r.when.contains(t)) affected.insert(r.op);
  }

  // Keep reservations in start order while the reduced stock can carry them.
  std::vector<Reservation> kept;
  std::set<std::string> voided;
  for (const Reservation& r : live) {
    if (peak_usage(kept, item, r.when) + 1 <= entry.current) {
      kept.push_back(r);
    } else {
      voided.insert(r.op);
    }
  }
  plan.erase_reservations_if([&](const Reservation& r) { return r.item == item && voided.count(r.op); });

  out.affected_ops.assign(affected.begin(), affected.end());
  out.voided_ops.assign(voided.begin(), voided.end());

  if (log) {
    std::set<std::string> notify(affected.begin(), affected.end());
    notify.insert(voided.begin(), voided.end());
    for (const std::string& op_id : notify) {
      const Operation& op = model.operation(op_id);
      const std::vector<Slot> slots = plan.slots_of(op_id);
      const std::string machine = slots.empty() ? std::string() : slots.front().machine;
      const std::string area = machine.empty() ? std::string() : model.machine(machine).area;
      const std::string corr = "disturb-" + std::to_string(log->next_correlation());
      const bool lost = voided.count(op_id) > 0;
      nlohmann::json payload = {{"item", item},
                                {"time", t},
                                {"operation", op_id},
                                {"resolution", lost ? "reservation-voided" : "spare-assigned"}};
      log->send(MessageKind::disturbance, supply_agent(to_string(entry.kind), area), ma(machine),
                corr, payload);
      log->send(MessageKind::disturbance, ma(machine), joa(op.order), corr, payload);
    }
  }
  return out;
}

TransferCheck la_check_transfer(const ShopModel& model, const Plan& plan,
                                const std::vector<TransportBooking>& pending,
                                const std::string& from_machine, const std::string& to_machine,
                                Minutes ready, Minutes latest_arrival, Direction direction) {
  TransferCheck out;
  const Minutes transit = model.transit(from_machine, to_machine);
  const std::string& area = model.transport_area(from_machine);
  out.booking.from_machine = from_machine;
  out.booking.to_machine = to_machine;
  out.booking.area = area;
  if (transit == 0) {
    if (ready <= latest_arrival) {
      out.feasible = true;
      out.booking.when = direction == Direction::forward ? Interval{ready, ready}
                                                         : Interval{latest_arrival, latest_arrival};
    }
    return out;
  }

  std::vector<TransportBooking> all = plan.transports();
  all.insert(all.end(), pending.begin(), pending.end());
  const int capacity = model.transport_capacity(area);

  std::vector<Minutes> departures;
  if (direction == Direction::forward) {
    departures.push_back(ready);
    for (const TransportBooking& b : all) {
      if (b.area == area && b.when.end > ready) departures.push_back(b.when.end);
    }
    std::sort(departures.begin(), departures.end());
  } else {
    departures.push_back(latest_arrival - transit);
    for (const TransportBooking& b : all) {
      if (b.area == area && b.when.start - transit < latest_arrival - transit) {
        departures.push_back(b.when.start - transit);
      }
    }
    std::sort(departures.rbegin(), departures.rend());
  }
  for (Minutes ts : departures) {
    if (ts < ready || ts + transit > latest_arrival) {
      if (direction == Direction::forward && ts + transit > latest_arrival) break;
      continue;
    }
    if (peak_transports(all, area, {ts, ts + transit}) < capacity) {
      out.feasible = true;
      out.booking.when = {ts, ts + transit};
      return out;
    }
  }
  return out;
}

}  // namespace mas::agents
