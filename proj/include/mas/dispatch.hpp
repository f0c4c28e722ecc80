#pragma once

// Dispatching strategies (OPT, Force, X-Competition, Wait-X, Manual), the
// Force/X-Competition fallback options (overdraft, shift splitting, long-time
// splitting) and the job-order/machine-agent negotiation that drives them.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mas/agents/messages.hpp"
#include "mas/indexes.hpp"
#include "mas/model.hpp"
#include "mas/plan.hpp"

namespace mas::dispatch {

/// A placement offered by a machine agent for one operation.
struct Proposal {
  std::string op;
  std::string machine;
  Minutes start = 0;
  Minutes end = 0;
  indexes::IndexVector indexes;
  double total = 0.0;
  std::vector<std::string> victims;  // displaced operations (X-Competition only)
  Minutes overdraft = 0;
  std::vector<Slot> parts;  // slots to book; one unless shift-split
  std::vector<TransportBooking> transports;
  bool needs_approval = false;
  std::string option;  // "", "overdraft" or "shift-split"
};

enum class OutcomeStatus { placed, needs_approval, waiting, failed };
const char* to_string(OutcomeStatus s);

/// Prio-4 overdraft waiting for a management decision.
struct ApprovalNeed {
  std::string order;
  std::string op;
  std::string machine;
  Minutes start = 0;
  Minutes excess = 0;
};

struct DispatchOutcome {
  OutcomeStatus status = OutcomeStatus::failed;
  std::vector<Slot> placed;
  std::optional<ApprovalNeed> approval;
  std::string failure_reason;
  std::string blocking_operation;
  bool due_violation = false;
  int overdrafts = 0;
  int shift_splits = 0;
  int long_splits = 0;
  std::vector<std::string> victim_orders;      // displaced and re-dispatched
  std::vector<std::string> unplaced_victims;   // displaced, now waiting
  std::vector<std::string> proposal_log;       // winning proposals, for audit
};

using ScopeFn = std::function<std::vector<std::string>(const Order&)>;

struct Context {
  ShopModel& model;
  Plan& plan;
  Minutes now = 0;
  ScopeFn scope;                                  // candidate machines per order; all when empty
  agents::MessageLog* messages = nullptr;         // negotiation trace, when recorded
  std::function<bool(const Slot&)> displaceable;  // X-Competition's "treated as free"

  Minutes horizon_end() const { return model.config.horizon; }
  std::vector<std::string> scope_of(const Order& order) const;
};

/// Capable machines of `scope` that are up at `now`, ordered by id.
std::vector<std::string> filter_machines(const Operation& op, const ShopModel& model,
                                         const std::vector<std::string>& scope, Minutes now);

enum class OverdraftDecision { allowed, needs_approval, denied };
const char* to_string(OverdraftDecision d);

/// The overdraft gate: excess below the limit is automatic at priority 5,
/// asks management at priority 4 and is unavailable below.
OverdraftDecision apply_overdraft(Minutes excess, int priority, Minutes limit = 30,
                                  bool approved = false);

/// Cut of an operation at a shift end: {first part, remainder}. Empty when the
/// mode cannot cut inside `free_before_end`.
std::vector<Minutes> split_across_shifts(const Operation& op, Minutes free_before_end,
                                         ShiftSplitMode mode, int k = 1);
/// Same cut on an explicit list of remaining transport lots.
std::vector<Minutes> split_lots(const std::vector<Minutes>& lots, Minutes free_before_end,
                                ShiftSplitMode mode, int k);

/// Long runners above `threshold` become the fewest equal parts that are each
/// at least `min_part` and shorter than 2 * min_part (remainder to the last).
std::vector<Operation> split_long_runner(const Operation& op, Minutes threshold = 1200,
                                         Minutes min_part = 300);

/// min(5, base + wait / interval).
int dynamic_priority(int base, Minutes wait_time, Minutes escalation_interval = 480);
int dynamic_priority(const Order& order, Minutes now, Minutes escalation_interval);

struct Request {
  Strategy strategy = Strategy::force;
  DispatchOptions options;
  Minutes deadline = kForever;  // latest end allowed (clipped to the horizon)
};

/// Every feasible plain placement for `op` on the candidate machines, scored
/// under the strategy's mask. Proposals are sorted best first.
std::vector<Proposal> generate_proposals(Context& ctx, const std::string& op, const Request& req);

/// Negotiates one operation: call for proposals, collect, award the best.
/// Falls back to the Force options when no contiguous placement exists.
/// Returns the awarded proposal, or nullopt.
std::optional<Proposal> negotiate(Context& ctx, const std::string& op, const Request& req,
                                  DispatchOutcome& outcome);

/// Books an accepted proposal: victims removed, slots, reservations, transports.
void award(Context& ctx, const Proposal& p);

DispatchOutcome dispatch_opt(Context& ctx, const std::string& order);
DispatchOutcome dispatch_force(Context& ctx, const std::string& order);
DispatchOutcome dispatch_x_competition(Context& ctx, const std::string& order, int x);
/// Places only when the order can finish by its due date; otherwise waiting.
DispatchOutcome dispatch_wait_x(Context& ctx, const std::string& order);
/// Dispatches with the order's own strategy.
DispatchOutcome dispatch_order(Context& ctx, const std::string& order);

/// Places unplaced operations of `order` in chain order (forward) or reverse
/// chain order (backward). All-or-nothing.
DispatchOutcome dispatch_chain(Context& ctx, const std::string& order, const Request& req);

struct WaitEntry {
  std::string order;
  Minutes deadline = 0;
  Minutes enqueued = 0;

  bool operator==(const WaitEntry&) const = default;
};

/// Orders held back until gaps open, by (deadline, order id).
struct WaitPool {
  std::vector<WaitEntry> entries;

  bool contains(const std::string& order) const;
  void remove(const std::string& order);
  bool operator==(const WaitPool&) const = default;
};

DispatchOutcome enqueue_wait_x(WaitPool& pool, const Order& order, Minutes deadline, Minutes now);
/// Retries every waiting order (Force semantics within the due date); placed
/// orders leave the pool. Returns one outcome per attempted order.
std::vector<std::pair<std::string, DispatchOutcome>> retry_waiting(Context& ctx, WaitPool& pool);
/// Removes and returns the orders whose deadline has been reached.
std::vector<std::string> expire_waiting(WaitPool& pool, Minutes now);

// Manual strategy.
enum class ManualKind { explicit_split, manual_split, change_restrictions, delete_and_replace, outsource };
const char* to_string(ManualKind k);
ManualKind manual_kind_from(const std::string& s);

struct ManualAction {
  ManualKind kind = ManualKind::outsource;
  std::string order;
  int parts = 2;                                // explicit_split
  std::string operation;                        // manual_split
  std::vector<Gap> gaps;                        // manual_split
  std::optional<int> priority;                  // change_restrictions
  std::optional<Minutes> due;                   // change_restrictions
  std::string victim;                           // delete_and_replace
};

struct ManualResult {
  DispatchOutcome outcome;
  std::vector<std::string> new_orders;     // explicit_split siblings
  std::vector<Violation> violations;       // rejected manual placement
  std::vector<std::string> released_orders;  // orders pushed back to the manual queue
  bool outsourced = false;
};

using RedispatchFn = std::function<DispatchOutcome(const std::string& order)>;

/// Applies a manual action. `redispatch` runs the regular (escalating) dispatch
/// for orders the action releases for automatic planning.
ManualResult manual_action(Context& ctx, const ManualAction& action, const RedispatchFn& redispatch);

/// Removes the unstarted slots of an order; returns the removed operation ids.
std::vector<std::string> unplace_order(Context& ctx, const std::string& order);

}  // namespace mas::dispatch
