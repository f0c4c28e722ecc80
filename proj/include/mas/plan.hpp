#pragma once

// The global assignment of operations to machine time, its gap arithmetic,
// and the constraint checker used as the gate for every accepted plan.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mas/model.hpp"

namespace mas {

struct SlotKey {
  std::string op;
  int part = 0;

  auto operator<=>(const SlotKey&) const = default;
};

struct Slot {
  std::string op;
  int part = 0;          // shift-split part index; 0 for an unsplit operation
  bool split = false;    // true when this slot is one part of a shift split
  std::string machine;
  Minutes start = 0;
  Minutes end = 0;
  bool frozen = false;
  Minutes overdraft = 0; // minutes of the slot beyond the end of its shift

  SlotKey key() const { return {op, part}; }
  Interval interval() const { return {start, end}; }
  Minutes duration() const { return end - start; }

  bool operator==(const Slot&) const = default;
};

struct Reservation {
  std::string op;
  int part = 0;
  ResourceKind kind = ResourceKind::tool;
  std::string item;
  Interval when;

  auto operator<=>(const Reservation&) const = default;
};

struct TransportBooking {
  std::string from_op;
  std::string to_op;
  std::string from_machine;
  std::string to_machine;
  std::string area;
  Interval when;

  auto operator<=>(const TransportBooking&) const = default;
};

class Plan {
 public:
  const std::map<SlotKey, Slot>& slots() const { return slots_; }
  const std::vector<Reservation>& reservations() const { return reservations_; }
  const std::vector<TransportBooking>& transports() const { return transports_; }

  bool empty() const { return slots_.empty(); }
  std::size_t size() const { return slots_.size(); }

  bool has(const std::string& op) const;
  /// All slots of an operation (shift-split parts in part order).
  std::vector<Slot> slots_of(const std::string& op) const;
  /// Slots booked on a machine, sorted by start.
  std::vector<Slot> on_machine(const std::string& machine) const;

  /// Raw insertion without constraint checks; replaces a slot with the same key.
  void put(Slot s) { slots_[s.key()] = std::move(s); }
  void add_reservation(Reservation r) { reservations_.push_back(std::move(r)); }
  void add_transport(TransportBooking t) { transports_.push_back(std::move(t)); }
  /// Removes every part of `op` and the reservations and transports that mention it.
  std::vector<Slot> erase(const std::string& op);
  void erase_reservations_if(const std::function<bool(const Reservation&)>& pred);
  void set_frozen(const SlotKey& key, bool frozen);
  void clear_frozen();

  bool operator==(const Plan& o) const;

 private:
  std::map<SlotKey, Slot> slots_;
  std::vector<Reservation> reservations_;
  std::vector<TransportBooking> transports_;
};

/// Latest end minus earliest start over all slots; 0 for an empty plan.
Minutes makespan(const Plan& plan);

enum class Direction { forward, backward };

struct Gap {
  std::string machine;
  Interval span;
  bool ends_at_shift_end = false;  // the gap is bounded by the end of a working window

  bool operator==(const Gap&) const = default;
};

/// Maximal free in-shift intervals on `machine` intersecting `window`, clipped to
/// it, with length >= min_duration. `booked` are the slots that block time.
std::vector<Gap> find_gaps(const Machine& machine, std::span<const Slot> booked,
                           Minutes min_duration, Interval window, Direction direction);

/// True when `t` is the end of a working window of `machine` (t-1 works, t does not).
bool shift_ends_at(const Machine& machine, Minutes t);
/// First instant >= t at which a working window of `machine` begins, or nullopt.
std::optional<Minutes> next_shift_start(const Machine& machine, Minutes t, Minutes horizon_end);

struct InsertResult {
  bool ok = true;
  std::optional<SlotKey> conflicting_slot;
  std::optional<Interval> violated_window;
  std::string reason;
};

/// Inserts a slot after checking machine overlap and shift placement
/// (a declared overdraft tail may extend past the end of its window).
InsertResult insert_slot(Plan& plan, const Slot& slot, const Machine& machine);

/// Removes all parts of `op`; returns the freed slots (empty if absent).
std::vector<Slot> remove_slot(Plan& plan, const std::string& op);

enum class ViolationKind {
  precedence,
  disjunctive,
  out_of_shift,
  machine_down,
  release,
  missing_reservation,
  resource_overbooked,
  missing_transport,
  transport_overbooked,
  duration_mismatch,
  capability
};

const char* to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<std::string> structural;  // unresolved ids
  std::vector<Violation> violations;

  bool ok() const { return structural.empty() && violations.empty(); }
  std::size_t count(ViolationKind k) const;
};

ValidationReport validate_plan(const Plan& plan, const ShopModel& model);

/// Concurrent use of `item` by reservations overlapping `when`, at the busiest instant.
int peak_usage(const std::vector<Reservation>& reservations, const std::string& item, Interval when,
               const std::function<bool(const Reservation&)>& ignore = {});
/// Concurrent transports of `area` overlapping `when`, at the busiest instant.
int peak_transports(const std::vector<TransportBooking>& transports, const std::string& area,
                    Interval when);

}  // namespace mas
