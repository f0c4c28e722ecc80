#pragma once

// Domain types shared by every layer of the scheduler: time, capabilities,
// machines, operations, orders and the shop-wide model that owns them.

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mas {

/// Integer minutes from the scenario epoch. Used for both instants and durations.
using Minutes = std::int64_t;

inline constexpr Minutes kForever = std::numeric_limits<Minutes>::max() / 4;
inline constexpr Minutes kWeek = 7 * 24 * 60;

struct Interval {
  Minutes start = 0;
  Minutes end = 0;

  Minutes length() const { return end - start; }
  bool empty() const { return end <= start; }
  bool overlaps(const Interval& o) const { return start < o.end && o.start < end; }
  bool contains(const Interval& o) const { return start <= o.start && o.end <= end; }
  bool contains(Minutes t) const { return start <= t && t < end; }

  auto operator<=>(const Interval&) const = default;
};

/// Error raised for structurally invalid input (unknown ids, malformed
/// arguments). Constraint violations of a plan are reported, not thrown.
class Error : public std::runtime_error {
 public:
  enum class Code { invalid_argument, not_found, conflict, parse, validation, io, runtime };

  Error(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

struct CapabilityVector {
  std::map<std::string, double> graded;
  std::set<std::string> binary;
  std::set<std::string> processes;

  bool operator==(const CapabilityVector&) const = default;
};

/// Weekly working windows, repeated over the horizon. Windows are [start, end)
/// minutes within one week.
struct ShiftCalendar {
  std::vector<Interval> weekly;

  static ShiftCalendar always() { return ShiftCalendar{{{0, kWeek}}}; }

  /// Absolute working windows intersecting `range`, merged where adjacent and
  /// clipped to `range`.
  std::vector<Interval> windows(Interval range) const;

  /// Throws Error when windows overlap, are unsorted, or leave the week.
  void check() const;

  bool operator==(const ShiftCalendar&) const = default;
};

struct Machine {
  std::string id;
  std::string area;
  CapabilityVector capability;
  std::optional<std::string> mounted_family;
  ShiftCalendar calendar = ShiftCalendar::always();
  Minutes apt = 60;
  bool apt_observed = false;
  std::vector<Interval> outages;  // down periods; end == kForever while down

  bool up_at(Minutes t) const;
  /// Working windows minus outages, clipped to `range`.
  std::vector<Interval> available(Interval range) const;

  bool operator==(const Machine&) const = default;
};

enum class ResourceKind { tool, jig, material };

struct ResourceNeed {
  ResourceKind kind = ResourceKind::tool;
  std::string item;

  auto operator<=>(const ResourceNeed&) const = default;
};

struct Operation {
  std::string id;
  std::string order;
  int sequence = 0;  // position in the order's chain; equal values are unordered
  std::string process;
  std::vector<std::string> alternatives;
  CapabilityVector requirement;
  Minutes duration = 1;
  Minutes robustness = 0;
  std::string setup_family;
  int lots = 1;
  std::vector<ResourceNeed> resources;
  std::optional<std::string> split_of;

  /// Transport-lot lengths: ceil(duration / lots), last lot takes the rest.
  std::vector<Minutes> lot_lengths() const;

  bool operator==(const Operation&) const = default;
};

/// Process membership (primary or alternative), binary parameters present and
/// every graded parameter at least the requirement.
bool capable(const Machine& m, const Operation& op);

enum class Strategy { opt, force, x_competition, wait_x, manual };
enum class ShiftSplitMode { none, within_lot, after_lot, after_k_lots };

struct DispatchOptions {
  bool robustness = true;
  bool overdraft = false;
  bool overdraft_approved = false;  // management already approved a prio-4 overdraft
  ShiftSplitMode shift_split = ShiftSplitMode::none;
  int split_lots = 1;  // k for after_k_lots
  bool long_split = false;
  int x = 1;  // priority threshold for X-Competition
  std::optional<Minutes> wait_deadline;

  bool operator==(const DispatchOptions&) const = default;
};

enum class OrderState {
  pending,
  dispatched,
  in_progress,
  done,
  failed,
  waiting,
  needs_approval,
  manual,
  outsourced
};

struct Order {
  std::string id;
  std::vector<std::string> operations;  // sorted by (sequence, id)
  int priority = 3;
  Minutes arrival = 0;
  Minutes release = 0;
  Minutes due = 0;
  OrderState state = OrderState::pending;
  Strategy strategy = Strategy::force;
  DispatchOptions options;
  std::string area;                     // current organizational scope
  std::optional<std::string> after;     // sibling order that must finish first
  std::vector<std::string> restricted_areas;

  Interval window() const { return {release, due}; }

  bool operator==(const Order&) const = default;
};

struct Area {
  std::string id;
  std::optional<std::string> parent;
  int level = 1;

  bool operator==(const Area&) const = default;
};

/// Transport parameters of one area (the logistic management data).
struct LogisticsParams {
  std::string area;
  int capacity = 1;  // concurrent transports
  Minutes transit_same_area = 0;
  Minutes transit_cross_area = 0;

  bool operator==(const LogisticsParams&) const = default;
};

struct TransitOverride {
  std::string from;
  std::string to;
  Minutes transit = 0;

  bool operator==(const TransitOverride&) const = default;
};

struct StockEntry {
  ResourceKind kind = ResourceKind::tool;
  std::string item;
  int initial = 0;
  int current = 0;
  std::vector<Minutes> consumed;  // instants of each removal

  bool operator==(const StockEntry&) const = default;
};

struct IndexWeights {
  double machine = 1.0;
  double robustness = 1.0;
  double position = 1.0;
  double setup = 1.0;
  double timeslot = 1.0;

  bool operator==(const IndexWeights&) const = default;
};

struct OptimizerConfig {
  bool enabled = true;
  Strategy strategy = Strategy::force;
  int level1_passes = 1;
  int level3_passes = 5;
  int level4_passes = 5;
  bool auto_accept = true;

  bool operator==(const OptimizerConfig&) const = default;
};

struct Config {
  std::uint64_t seed = 1;
  Minutes horizon = 4 * kWeek;
  double apt_alpha = 0.2;
  Minutes apt_initial = 60;
  IndexWeights weights;
  Minutes overdraft_limit = 30;
  Minutes long_split_threshold = 1200;
  Minutes long_split_min_part = 300;
  Minutes escalation_interval = 480;
  Minutes quiet_period = 30;
  OptimizerConfig optimizer;

  bool operator==(const Config&) const = default;
};

/// Everything the engine knows about the shop apart from the plan itself.
struct ShopModel {
  std::map<std::string, Machine> machines;
  std::map<std::string, Area> areas;
  std::map<std::string, Order> orders;
  std::map<std::string, Operation> operations;
  std::map<std::string, LogisticsParams> logistics;
  std::vector<TransitOverride> transit_overrides;
  std::map<std::string, StockEntry> stock;  // keyed by item
  Config config;

  const Machine& machine(const std::string& id) const;
  Machine& machine(const std::string& id);
  const Order& order(const std::string& id) const;
  Order& order(const std::string& id);
  const Operation& operation(const std::string& id) const;
  Operation& operation(const std::string& id);

  /// Transit minutes for a lot moving between two machines (0 on the same machine).
  Minutes transit(const std::string& from_machine, const std::string& to_machine) const;
  /// Area whose transport capacity a move between the two machines consumes.
  const std::string& transport_area(const std::string& from_machine) const;
  int transport_capacity(const std::string& area) const;
  int stock_of(const std::string& item) const;

  /// Operation ids of `order` grouped by sequence, ascending.
  std::vector<std::vector<std::string>> stages(const std::string& order) const;

  bool operator==(const ShopModel&) const = default;
};

const char* to_string(ResourceKind k);
const char* to_string(Strategy s);
const char* to_string(ShiftSplitMode m);
const char* to_string(OrderState s);
ResourceKind resource_kind_from(const std::string& s);
Strategy strategy_from(const std::string& s);
ShiftSplitMode shift_split_from(const std::string& s);
OrderState order_state_from(const std::string& s);

}  // namespace mas
