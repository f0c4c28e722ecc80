#pragma once

// Supply agents: the tool, jig and material ledgers (stock plus interval
// reservations) and the logistic agent's transport schedule.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mas/agents/messages.hpp"
#include "mas/model.hpp"
#include "mas/plan.hpp"

namespace mas::agents {

using ReservationFilter = std::function<bool(const Reservation&)>;

/// Stock of `item` left for a new reservation over `when` (stock minus peak use).
int free_stock(const ShopModel& model, const Plan& plan, const std::string& item, Interval when,
               const ReservationFilter& ignore = {});

struct ReserveResult {
  bool ok = true;
  std::string declined_item;
};

/// Books one unit of `need.item` for [when). Declines when no unit is free.
ReserveResult resource_reserve(Plan& plan, const ShopModel& model, const std::string& op, int part,
                               const ResourceNeed& need, Interval when);

struct DisturbResult {
  std::vector<std::string> affected_ops;  // reservation active at the damage instant
  std::vector<std::string> voided_ops;    // reservation dropped for lack of stock
};

/// Removes one unit of `item` at `t`, drops reservations the remaining stock
/// cannot carry (latest-starting first) and notifies the machine agents and
/// job order agents of every affected operation.
DisturbResult resource_disturb(ShopModel& model, Plan& plan, const std::string& item, Minutes t,
                               MessageLog* log);

struct TransferCheck {
  bool feasible = false;
  TransportBooking booking;
};

/// Finds a transport of `transit` minutes between the machines that departs no
/// earlier than `ready` and arrives no later than `latest_arrival`. Forward
/// picks the earliest departure, backward the latest arrival.
TransferCheck la_check_transfer(const ShopModel& model, const Plan& plan,
                                const std::vector<TransportBooking>& pending,
                                const std::string& from_machine, const std::string& to_machine,
                                Minutes ready, Minutes latest_arrival, Direction direction);

}  // namespace mas::agents
