#pragma once

// Discrete-event shop-floor simulation. One instant at a time the engine
// finishes and starts operations, delivers arrivals and scripted
// disturbances, re-dispatches what they break, and runs the optimizer in
// neutral phases. Everything it does lands in an append-only trace.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mas/agents/messages.hpp"
#include "mas/dispatch.hpp"
#include "mas/optimizer.hpp"
#include "mas/scenario.hpp"

namespace mas::sim {

using json = nlohmann::json;

enum class ApprovalKind { overdraft_prio4, wait_x_timeout, optimization_proposed, manual_dispatch };
enum class ApprovalState { pending, approved, rejected, expired };
const char* to_string(ApprovalKind k);
const char* to_string(ApprovalState s);

struct ApprovalRequest {
  std::string id;
  ApprovalKind kind = ApprovalKind::overdraft_prio4;
  Minutes created_at = 0;
  std::string subject;  // order or run id
  ApprovalState state = ApprovalState::pending;
  json detail = json::object();

  json to_json() const;
};

struct EventRecord {
  std::uint64_t seq = 0;
  Minutes time = 0;
  std::string kind;
  json payload = json::object();

  json to_json() const;
};

struct Metrics {
  Minutes makespan = 0;
  double due_hit_rate = 0.0;
  std::map<std::string, double> utilization;
  std::map<std::string, int> orders_by_state;
  int orders = 0;
  int escalations = 0;
  int overdrafts = 0;
  int shift_splits = 0;
  int long_splits = 0;
  int victims = 0;
  int disturbances = 0;
  int optimizations = 0;       // runs that found a shorter plan
  double improvement = 0.0;    // mean over those runs

  json to_json() const;
};

struct CommandResult {
  bool ok = true;
  std::string code;  // machine-readable rejection code
  std::string message;
  std::vector<std::uint64_t> event_ids;
  json data = json::object();

  json to_json() const;
};

/// A command as applied: clock time and the number of instants processed
/// before it. Replaying at the same point reproduces the run.
struct LoggedCommand {
  Minutes at = 0;
  std::uint64_t step = 0;
  json command;
};

class Engine {
 public:
  /// `seed` overrides the scenario's configured seed.
  explicit Engine(const Scenario& scenario, std::optional<std::uint64_t> seed = std::nullopt);

  /// Processes the next instant. False once nothing is left to do.
  bool step();
  /// Steps until done, applying scheduled replay commands on the way.
  void run();
  /// Processes every instant up to `t`, then parks the clock at `t`.
  void run_until(Minutes t);
  bool finished() const { return finished_; }

  /// Applies a gateway command at the current clock time.
  CommandResult command(const json& cmd);
  /// Commands to re-apply during run(), e.g. taken from a trace.
  void schedule_commands(std::vector<LoggedCommand> commands);
  static std::vector<LoggedCommand> commands_in(const std::vector<EventRecord>& trace);

  Minutes now() const { return now_; }
  std::uint64_t instants() const { return instants_; }
  const ShopModel& model() const { return model_; }
  const Plan& plan() const { return plan_; }
  std::uint64_t plan_version() const { return plan_version_; }
  const std::vector<EventRecord>& trace() const { return trace_; }
  const std::vector<ApprovalRequest>& approvals() const { return approvals_; }
  const std::vector<optimizer::OptimizationRun>& runs() const { return runs_; }
  const dispatch::WaitPool& waiting() const { return waiting_; }
  const agents::MessageLog& messages() const { return messages_; }
  Metrics metrics() const;

  /// One canonical JSON record per line.
  std::string trace_ndjson() const;
  /// FNV-1a over the canonical final state (model, plan, approvals, clock).
  std::string state_hash() const;
  json state_json() const;

  json snapshot() const;
  static Engine restore(const json& snapshot);

  /// Called after every handler that may have changed the plan.
  void set_observer(std::function<void(const Engine&)> f) { observer_ = std::move(f); }

 private:
  Engine() = default;

  struct Pending {
    Minutes time = 0;
    std::uint64_t seq = 0;
    std::string kind;  // "arrival" | "disturbance"
    json payload;
  };

  std::optional<Minutes> next_time() const;
  bool alive() const;
  void schedule(Minutes t, std::string kind, json payload);
  std::uint64_t emit(std::string kind, json payload);
  void observe();
  void touch() { ++plan_version_; }
  void activity();
  void sync_progress();
  dispatch::Context context();

  void handle_pending(const Pending& p);
  void arrive(const OrderSpec& spec, bool rush);
  void disturb(const Disturbance& d);
  void finish_ops();
  void start_ops();
  void shift_boundaries();
  void expire_waiting();
  void neutral_phase();
  void retry_waiting();
  void horizon_end();

  dispatch::DispatchOutcome place(const std::string& order, std::optional<Strategy> strategy, int x = 1);
  void settle(const std::string& order, const dispatch::DispatchOutcome& out, Strategy strategy);
  void to_manual(const std::string& order, const std::string& reason);
  void redispatch_affected(const std::set<std::string>& orders, const std::string& cause);

  std::string new_approval(ApprovalKind kind, const std::string& subject, json detail);
  void optimize_now();
  void decide_run(const std::string& run_id, const std::string& decision, CommandResult& res);
  CommandResult apply_command(const json& cmd);
  void apply_due_commands();

  ShopModel model_;
  Plan plan_;
  std::uint64_t plan_version_ = 0;
  Minutes now_ = 0;
  std::uint64_t instants_ = 0;
  bool finished_ = false;
  bool horizon_done_ = false;

  std::vector<Pending> queue_;  // kept sorted by (time, seq)
  std::uint64_t next_pending_ = 1;
  std::vector<EventRecord> trace_;
  std::uint64_t next_event_ = 1;
  agents::MessageLog messages_;
  dispatch::WaitPool waiting_;
  std::vector<ApprovalRequest> approvals_;
  std::vector<optimizer::OptimizationRun> runs_;
  std::set<SlotKey> started_;
  std::set<SlotKey> finished_slots_;
  std::map<std::string, Minutes> completed_at_;  // order -> completion
  std::mt19937_64 rng_;

  std::optional<Minutes> neutral_due_;
  bool optimize_requested_ = false;
  std::optional<std::uint64_t> last_optimized_version_;
  Minutes shift_cursor_ = 0;
  bool activity_now_ = false;

  int escalations_ = 0, overdrafts_ = 0, shift_splits_ = 0, long_splits_ = 0, victims_ = 0, disturbances_ = 0;

  std::vector<LoggedCommand> replay_;
  std::function<void(const Engine&)> observer_;
};

}  // namespace mas::sim
