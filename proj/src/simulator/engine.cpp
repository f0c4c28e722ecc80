#include "mas/engine.hpp"

#include <algorithm>
#include <sstream>

#include "mas/agents/org.hpp"
#include "mas/agents/resources.hpp"
#include "mas/indexes.hpp"

namespace mas::sim {

using dispatch::OutcomeStatus;

const char* to_string(ApprovalKind k) {
  switch (k) {
    case ApprovalKind::overdraft_prio4: return "overdraft-prio4";
    case ApprovalKind::wait_x_timeout: return "wait-x-timeout";
    case ApprovalKind::optimization_proposed: return "optimization-proposed";
    case ApprovalKind::manual_dispatch: return "manual-dispatch";
  }
  return "?";
}

const char* to_string(ApprovalState s) {
  switch (s) {
    case ApprovalState::pending: return "pending";
    case ApprovalState::approved: return "approved";
    case ApprovalState::rejected: return "rejected";
    case ApprovalState::expired: return "expired";
  }
  return "?";
}

namespace {

ApprovalKind approval_kind_from(const std::string& s) {
  for (auto k : {ApprovalKind::overdraft_prio4, ApprovalKind::wait_x_timeout, ApprovalKind::optimization_proposed,
                 ApprovalKind::manual_dispatch}) {
    if (s == to_string(k)) return k;
  }
  throw Error(Error::Code::parse, "unknown approval kind '" + s + "'");
}

ApprovalState approval_state_from(const std::string& s) {
  for (auto k : {ApprovalState::pending, ApprovalState::approved, ApprovalState::rejected, ApprovalState::expired}) {
    if (s == to_string(k)) return k;
  }
  throw Error(Error::Code::parse, "unknown approval state '" + s + "'");
}

optimizer::RunStatus run_status_from(const std::string& s) {
  using optimizer::RunStatus;
  for (auto k : {RunStatus::proposed, RunStatus::accepted, RunStatus::denied, RunStatus::restored}) {
    if (s == optimizer::to_string(k)) return k;
  }
  throw Error(Error::Code::parse, "unknown run status '" + s + "'");
}

json run_to_json(const optimizer::OptimizationRun& r) {
  json j = r.summary();
  j["plan_version"] = r.plan_version;
  j["accepted_version"] = r.accepted_version;
  j["base"] = codec::to_json(r.base);
  j["candidate"] = codec::to_json(r.candidate);
  return j;
}

optimizer::OptimizationRun run_from_json(const json& j) {
  optimizer::OptimizationRun r;
  r.id = j.at("id");
  r.seed = j.at("seed");
  r.created_at = j.at("created_at");
  r.status = run_status_from(j.at("status"));
  r.before = j.at("makespan_before");
  r.after = j.at("makespan_after");
  r.plan_version = j.at("plan_version");
  r.accepted_version = j.at("accepted_version");
  r.base = codec::plan_from(j.at("base"));
  r.candidate = codec::plan_from(j.at("candidate"));
  for (const json& s : j.at("levels")) {
    r.steps.push_back({s.at("level"), s.at("pass"), s.at("makespan"), s.at("kept"), s.at("note")});
  }
  return r;
}

template <class T>
json issues_json(const std::vector<T>& issues) {
  json a = json::array();
  for (const auto& i : issues) a.push_back({{"path", i.path}, {"message", i.message}});
  return a;
}

CommandResult reject(std::string code, std::string message) {
  CommandResult r;
  r.ok = false;
  r.code = std::move(code);
  r.message = std::move(message);
  return r;
}

}  // namespace

json ApprovalRequest::to_json() const {
  return {{"id", id},           {"kind", sim::to_string(kind)}, {"created_at", created_at},
          {"subject", subject}, {"state", sim::to_string(state)}, {"detail", detail}};
}

json EventRecord::to_json() const { return {{"seq", seq}, {"time", time}, {"kind", kind}, {"payload", payload}}; }

json Metrics::to_json() const {
  return {{"makespan", makespan},         {"due_hit_rate", due_hit_rate},   {"utilization", utilization},
          {"orders_by_state", orders_by_state}, {"orders", orders},     {"escalations", escalations},
          {"overdrafts", overdrafts},     {"shift_splits", shift_splits},   {"long_splits", long_splits},
          {"victims", victims},           {"disturbances", disturbances},   {"optimizations", optimizations},
          {"improvement", improvement}};
}

json CommandResult::to_json() const {
  json j = {{"ok", ok}, {"event_ids", event_ids}, {"data", data}};
  if (!ok) j["error"] = {{"code", code}, {"message", message}};
  return j;
}

// ---- construction and bookkeeping ----

Engine::Engine(const Scenario& scenario, std::optional<std::uint64_t> seed) {
  model_ = scenario.shop;
  model_.orders.clear();
  model_.operations.clear();
  if (seed) model_.config.seed = *seed;
  rng_.seed(model_.config.seed);
  for (const OrderSpec& o : scenario.orders) schedule(o.order.arrival, "arrival", codec::to_json(o));
  for (const Disturbance& d : scenario.disturbances) schedule(d.at, "disturbance", codec::to_json(d));
}

void Engine::schedule(Minutes t, std::string kind, json payload) {
  Pending p{t, next_pending_++, std::move(kind), std::move(payload)};
  auto it = std::upper_bound(queue_.begin(), queue_.end(), p, [](const Pending& a, const Pending& b) {
    return std::tie(a.time, a.seq) < std::tie(b.time, b.seq);
  });
  queue_.insert(it, std::move(p));
}

std::uint64_t Engine::emit(std::string kind, json payload) {
  trace_.push_back({next_event_++, now_, std::move(kind), std::move(payload)});
  return trace_.back().seq;
}

void Engine::observe() {
  if (observer_) observer_(*this);
}

void Engine::activity() {
  neutral_due_ = now_ + model_.config.quiet_period;
  activity_now_ = true;
}

void Engine::sync_progress() {
  std::erase_if(started_, [&](const SlotKey& k) { return !plan_.slots().count(k); });
  std::erase_if(finished_slots_, [&](const SlotKey& k) { return !plan_.slots().count(k); });
}

dispatch::Context Engine::context() {
  return dispatch::Context{model_, plan_, now_, [this](const Order& o) { return agents::org_scope(model_, o); },
                           &messages_, {}};
}

namespace {

std::vector<Minutes> shift_boundaries_of(const ShopModel& model, Minutes after, bool starts) {
  std::vector<Minutes> out;
  const Minutes horizon = model.config.horizon;
  for (const auto& [id, m] : model.machines) {
    for (const Interval& w : m.calendar.windows({0, horizon})) {
      const Minutes t = starts ? w.start : w.end;
      if (t > after && t > 0 && t < horizon) out.push_back(t);
    }
  }
  return out;
}

std::optional<Minutes> next_boundary(const ShopModel& model, Minutes after) {
  std::optional<Minutes> best;
  for (bool starts : {true, false}) {
    for (Minutes t : shift_boundaries_of(model, after, starts)) {
      if (!best || t < *best) best = t;
    }
  }
  return best;
}

}  // namespace

bool Engine::alive() const {
  if (!queue_.empty() || !waiting_.entries.empty() || neutral_due_ || !replay_.empty()) return true;
  for (const auto& [key, s] : plan_.slots()) {
    if (!finished_slots_.count(key)) return true;
  }
  return false;
}

std::optional<Minutes> Engine::next_time() const {
  std::optional<Minutes> best;
  auto consider = [&](Minutes t) {
    t = std::max(t, now_);
    if (!best || t < *best) best = t;
  };
  if (!queue_.empty()) consider(queue_.front().time);
  for (const auto& [key, s] : plan_.slots()) {
    if (!started_.count(key)) consider(s.start);
    else if (!finished_slots_.count(key)) consider(s.end);
  }
  for (const auto& e : waiting_.entries) consider(e.deadline);
  if (neutral_due_) consider(*neutral_due_);
  if (best || alive()) {
    if (auto b = next_boundary(model_, shift_cursor_)) {
      if (best) consider(*b);
    }
  }
  return best;
}

// ---- the loop ----

bool Engine::step() {
  apply_due_commands();
  if (finished_) return false;
  sync_progress();
  const auto t = next_time();
  if (!t) {
    // Nothing left to happen: the clock rests at the horizon.
    now_ = std::max(now_, model_.config.horizon);
    finished_ = true;
    return false;
  }
  if (*t > model_.config.horizon) {
    now_ = std::max(now_, model_.config.horizon);
    ++instants_;
    horizon_end();
    observe();
    finished_ = true;
    return false;
  }
  now_ = *t;
  ++instants_;
  activity_now_ = false;
  finish_ops();
  while (!queue_.empty() && queue_.front().time <= now_) {
    Pending p = std::move(queue_.front());
    queue_.erase(queue_.begin());
    handle_pending(p);
    observe();
  }
  expire_waiting();
  start_ops();
  shift_boundaries();
  if (neutral_due_ && *neutral_due_ <= now_ && !activity_now_) neutral_phase();
  observe();
  return true;
}

void Engine::apply_due_commands() {
  while (!replay_.empty() && replay_.front().step <= instants_) {
    LoggedCommand c = std::move(replay_.front());
    replay_.erase(replay_.begin());
    now_ = std::max(now_, c.at);
    command(c.command);
  }
}

void Engine::run() {
  for (;;) {
    apply_due_commands();
    if (!step()) break;
  }
  apply_due_commands();
}

void Engine::run_until(Minutes t) {
  for (;;) {
    apply_due_commands();
    if (finished_) break;
    sync_progress();
    const auto next = next_time();
    if (!next || *next > t || *next > model_.config.horizon) break;
    step();
  }
  if (!finished_ && t > now_) now_ = std::min(t, model_.config.horizon);
}

void Engine::schedule_commands(std::vector<LoggedCommand> commands) {
  std::stable_sort(commands.begin(), commands.end(),
                   [](const LoggedCommand& a, const LoggedCommand& b) { return a.step < b.step; });
  replay_ = std::move(commands);
}

std::vector<LoggedCommand> Engine::commands_in(const std::vector<EventRecord>& trace) {
  std::vector<LoggedCommand> out;
  for (const EventRecord& e : trace) {
    if (e.kind != "command") continue;
    out.push_back({e.time, e.payload.at("step").get<std::uint64_t>(), e.payload.at("command")});
  }
  return out;
}

void Engine::handle_pending(const Pending& p) {
  std::vector<Issue> issues;
  if (p.kind == "arrival") {
    arrive(codec::order_spec_from(codec::Reader(&p.payload, "", &issues), {}), false);
  } else {
    disturb(codec::disturbance_from(codec::Reader(&p.payload, "", &issues), {}));
  }
}

void Engine::finish_ops() {
  std::set<std::string> touched_orders;
  for (const auto& [key, s] : plan_.slots()) {
    if (!started_.count(key) || finished_slots_.count(key) || s.end > now_) continue;
    finished_slots_.insert(key);
    emit("op-finish", {{"op", s.op}, {"part", s.part}, {"machine", s.machine}});
    const auto parts = plan_.slots_of(s.op);
    const bool op_done = std::all_of(parts.begin(), parts.end(),
                                     [&](const Slot& x) { return finished_slots_.count(x.key()) > 0; });
    if (!op_done) continue;
    Minutes total = 0;
    for (const Slot& x : parts) total += x.duration();
    Machine& m = model_.machine(s.machine);
    m = indexes::update_apt(m, total, model_.config.apt_alpha);
    touched_orders.insert(model_.operation(s.op).order);
  }
  for (const std::string& oid : touched_orders) {
    Order& o = model_.order(oid);
    const bool done = std::all_of(o.operations.begin(), o.operations.end(), [&](const std::string& op) {
      const auto parts = plan_.slots_of(op);
      return !parts.empty() && std::all_of(parts.begin(), parts.end(),
                                           [&](const Slot& x) { return finished_slots_.count(x.key()) > 0; });
    });
    if (!done || o.state == OrderState::done) continue;
    o.state = OrderState::done;
    completed_at_[oid] = now_;
    emit("order-done", {{"order", oid}, {"due", o.due}, {"on_time", now_ <= o.due}});
  }
}

void Engine::start_ops() {
  for (const auto& [key, s] : plan_.slots()) {
    if (started_.count(key) || s.start > now_) continue;
    started_.insert(key);
    emit("op-start", {{"op", s.op}, {"part", s.part}, {"machine", s.machine}, {"end", s.end}});
    Order& o = model_.order(model_.operation(s.op).order);
    if (o.state == OrderState::dispatched) o.state = OrderState::in_progress;
  }
}

void Engine::shift_boundaries() {
  const auto b = next_boundary(model_, shift_cursor_);
  if (!b || *b > now_) return;
  for (bool starts : {false, true}) {
    json machines = json::array();
    for (const auto& [id, m] : model_.machines) {
      for (const Interval& w : m.calendar.windows({0, model_.config.horizon})) {
        if ((starts ? w.start : w.end) == *b) machines.push_back(id);
      }
    }
    if (!machines.empty()) emit(starts ? "shift-start" : "shift-end", {{"machines", machines}});
  }
  shift_cursor_ = *b;
}

void Engine::expire_waiting() {
  for (const std::string& oid : dispatch::expire_waiting(waiting_, now_)) {
    Order& o = model_.order(oid);
    o.state = OrderState::failed;
    emit("order-failed", {{"order", oid}, {"reason", "waiting deadline reached"}});
    new_approval(ApprovalKind::wait_x_timeout, oid, {{"due", o.due}});
  }
}

void Engine::horizon_end() {
  emit("horizon-end", {{"horizon", model_.config.horizon}});
  const auto entries = waiting_.entries;
  waiting_.entries.clear();
  for (const auto& e : entries) {
    Order& o = model_.order(e.order);
    o.state = OrderState::failed;
    emit("order-failed", {{"order", e.order}, {"reason", "horizon reached while waiting"}});
    new_approval(ApprovalKind::wait_x_timeout, e.order, {{"due", o.due}});
  }
  for (ApprovalRequest& a : approvals_) {
    if (a.kind != ApprovalKind::overdraft_prio4 || a.state != ApprovalState::pending) continue;
    a.state = ApprovalState::expired;
    emit("approval-resolved", a.to_json());
    if (model_.order(a.subject).state == OrderState::needs_approval) to_manual(a.subject, "approval open at horizon");
  }
  horizon_done_ = true;
}

// ---- dispatching ----

dispatch::DispatchOutcome Engine::place(const std::string& order_id, std::optional<Strategy> strategy, int x) {
  Order& order = model_.order(order_id);
  const Strategy s = strategy.value_or(order.strategy);
  if (s == Strategy::manual) {
    to_manual(order_id, "manual strategy");
    return {};
  }
  const int threshold = s == Strategy::x_competition && !strategy ? order.options.x : x;
  auto ctx = context();
  auto attempt = [&]() {
    try {
      switch (s) {
        case Strategy::opt: return dispatch::dispatch_opt(ctx, order_id);
        case Strategy::force: return dispatch::dispatch_force(ctx, order_id);
        case Strategy::x_competition: return dispatch::dispatch_x_competition(ctx, order_id, threshold);
        case Strategy::wait_x: return dispatch::dispatch_wait_x(ctx, order_id);
        case Strategy::manual: break;
      }
    } catch (const Error& e) {
      dispatch::DispatchOutcome out;
      out.failure_reason = e.what();
      return out;
    }
    return dispatch::DispatchOutcome{};
  };
  const auto res = agents::dispatch_escalating(model_, order_id, attempt);
  for (std::size_t i = 1; i < res.areas.size(); ++i) {
    ++escalations_;
    emit("escalation", {{"order", order_id}, {"from", res.areas[i - 1]}, {"to", res.areas[i]}});
  }
  if (res.outcome.status == OutcomeStatus::placed) touch();
  settle(order_id, res.outcome, s);
  return res.outcome;
}

void Engine::to_manual(const std::string& order_id, const std::string& reason) {
  model_.order(order_id).state = OrderState::manual;
  emit("order-manual", {{"order", order_id}, {"reason", reason}});
}

void Engine::settle(const std::string& order_id, const dispatch::DispatchOutcome& out, Strategy s) {
  Order& o = model_.order(order_id);
  switch (out.status) {
    case OutcomeStatus::placed: {
      const bool started = std::any_of(o.operations.begin(), o.operations.end(), [&](const std::string& op) {
        for (const Slot& x : plan_.slots_of(op)) {
          if (started_.count(x.key())) return true;
        }
        return false;
      });
      o.state = started ? OrderState::in_progress : OrderState::dispatched;
      waiting_.remove(order_id);
      overdrafts_ += out.overdrafts;
      shift_splits_ += out.shift_splits;
      long_splits_ += out.long_splits;
      victims_ += static_cast<int>(out.victim_orders.size());
      std::set<std::string> machines;
      for (const Slot& x : out.placed) machines.insert(x.machine);
      emit("order-dispatched", {{"order", order_id},
                                {"strategy", to_string(s)},
                                {"slots", out.placed.size()},
                                {"machines", machines},
                                {"due_violation", out.due_violation},
                                {"overdrafts", out.overdrafts},
                                {"shift_splits", out.shift_splits},
                                {"long_splits", out.long_splits},
                                {"victims", out.victim_orders}});
      for (const std::string& v : out.victim_orders) {
        const bool requeued = std::find(out.unplaced_victims.begin(), out.unplaced_victims.end(), v) != out.unplaced_victims.end();
        emit("order-displaced", {{"order", v}, {"by", order_id}, {"requeued", requeued}});
      }
      for (const std::string& v : out.unplaced_victims) place(v, Strategy::force);
      break;
    }
    case OutcomeStatus::needs_approval: {
      o.state = OrderState::needs_approval;
      json detail = json::object();
      if (out.approval) {
        detail = {{"op", out.approval->op},
                  {"machine", out.approval->machine},
                  {"start", out.approval->start},
                  {"excess", out.approval->excess}};
      }
      new_approval(ApprovalKind::overdraft_prio4, order_id, detail);
      break;
    }
    case OutcomeStatus::waiting:
    case OutcomeStatus::failed: {
      const bool wants_wait = s == Strategy::wait_x || o.options.wait_deadline.has_value();
      const Minutes deadline = o.options.wait_deadline.value_or(o.due);
      if (wants_wait && deadline > now_) {
        dispatch::enqueue_wait_x(waiting_, o, deadline, now_);
        o.state = OrderState::waiting;
        emit("order-waiting", {{"order", order_id}, {"deadline", deadline}, {"reason", out.failure_reason}});
      } else if (wants_wait) {
        o.state = OrderState::failed;
        emit("order-failed", {{"order", order_id}, {"reason", "waiting deadline already passed"}});
        new_approval(ApprovalKind::wait_x_timeout, order_id, {{"due", o.due}});
      } else {
        to_manual(order_id, out.failure_reason.empty() ? "no placement at any organizational level" : out.failure_reason);
      }
      break;
    }
  }
}

void Engine::redispatch_affected(const std::set<std::string>& orders, const std::string& cause) {
  std::vector<std::string> ordered(orders.begin(), orders.end());
  std::sort(ordered.begin(), ordered.end(), [&](const std::string& a, const std::string& b) {
    const int pa = model_.order(a).priority, pb = model_.order(b).priority;
    return pa != pb ? pa > pb : a < b;
  });
  auto ctx = context();
  for (const std::string& oid : ordered) {
    if (dispatch::unplace_order(ctx, oid).size()) touch();
  }
  sync_progress();
  for (const std::string& oid : ordered) {
    const auto out = place(oid, Strategy::force);
    if (model_.order(oid).state == OrderState::manual) {
      new_approval(ApprovalKind::manual_dispatch, oid, {{"cause", cause}, {"reason", out.failure_reason}});
    }
  }
}

void Engine::retry_waiting() {
  if (waiting_.entries.empty()) return;
  auto ctx = context();
  for (auto& [oid, out] : dispatch::retry_waiting(ctx, waiting_)) {
    if (out.status != OutcomeStatus::placed) continue;
    touch();
    activity();
    settle(oid, out, Strategy::wait_x);
  }
}

// ---- arrivals and disturbances ----

void Engine::arrive(const OrderSpec& spec, bool rush) {
  const std::string& id = spec.order.id;
  emit(rush ? "rush-order" : "order-arrival", {{"order", id},
                                                {"priority", spec.order.priority},
                                                {"strategy", to_string(spec.order.strategy)},
                                                {"due", spec.order.due},
                                                {"operations", spec.operations.size()}});
  activity();
  bool supported = false;
  try {
    supported = agents::mma_create_job(model_, spec.order, spec.operations);
  } catch (const Error& e) {
    emit("order-rejected", {{"order", id}, {"reason", e.what()}});
    return;
  }
  Order& o = model_.order(id);
  if (!spec.order.area.empty()) o.area = spec.order.area;
  if (!supported) {
    to_manual(id, "no machine in the network can run every operation");
    return;
  }
  if (rush) {
    place(id, Strategy::x_competition, o.priority);
  } else if (o.strategy == Strategy::manual) {
    to_manual(id, "manual strategy");
  } else {
    place(id, std::nullopt);
  }
}

void Engine::disturb(const Disturbance& d) {
  using K = Disturbance::Kind;
  ++disturbances_;
  activity();
  switch (d.kind) {
    case K::machine_down: {
      Machine& m = model_.machine(d.machine);
      m.outages.push_back({now_, d.until.value_or(kForever)});
      std::sort(m.outages.begin(), m.outages.end());
      std::set<std::string> ops, orders;
      for (const Slot& s : plan_.on_machine(d.machine)) {
        if (s.end > now_) ops.insert(s.op);
      }
      for (const std::string& op : ops) {
        const std::string& oid = model_.operation(op).order;
        orders.insert(oid);
        plan_.erase(op);
        messages_.send(agents::MessageKind::disturbance, agents::ma(d.machine), agents::joa(oid),
                       "dist-" + std::to_string(messages_.next_correlation()),
                       {{"machine", d.machine}, {"operation", op}, {"at", now_}});
      }
      if (!ops.empty()) touch();
      sync_progress();
      emit("machine-down", {{"machine", d.machine},
                            {"until", d.until ? json(*d.until) : json(nullptr)},
                            {"voided", ops},
                            {"orders", orders}});
      if (d.until) {
        Disturbance up;
        up.kind = K::machine_up;
        up.at = *d.until;
        up.machine = d.machine;
        schedule(up.at, "disturbance", codec::to_json(up));
      }
      redispatch_affected(orders, "machine-down");
      retry_waiting();
      break;
    }
    case K::machine_up: {
      Machine& m = model_.machine(d.machine);
      for (Interval& o : m.outages) {
        if (o.start <= now_ && o.end > now_) o.end = now_;
      }
      emit("machine-up", {{"machine", d.machine}});
      retry_waiting();
      break;
    }
    case K::tool_damage: {
      const auto r = agents::resource_disturb(model_, plan_, d.item, now_, &messages_);
      std::set<std::string> orders;
      for (const std::string& op : r.voided_ops) {
        orders.insert(model_.operation(op).order);
        plan_.erase(op);
      }
      if (!r.voided_ops.empty()) touch();
      sync_progress();
      emit("tool-damage", {{"item", d.item},
                           {"stock_left", model_.stock_of(d.item)},
                           {"affected", r.affected_ops},
                           {"voided", r.voided_ops}});
      redispatch_affected(orders, "tool-damage");
      retry_waiting();
      break;
    }
    case K::rush_order:
      if (d.rush) arrive(*d.rush, true);
      break;
    case K::back_order: {
      auto it = model_.orders.find(d.order);
      if (it == model_.orders.end()) {
        emit("back-order", {{"order", d.order}, {"applied", false}});
        break;
      }
      Order& o = it->second;
      o.due += d.extend_by;
      emit("back-order", {{"order", d.order}, {"applied", true}, {"due", o.due}});
      if (o.state == OrderState::dispatched || o.state == OrderState::in_progress) {
        auto ctx = context();
        if (!dispatch::unplace_order(ctx, d.order).empty()) touch();
        sync_progress();
        place(d.order, std::nullopt);
        retry_waiting();
      }
      break;
    }
  }
}

// ---- approvals and optimization ----

std::string Engine::new_approval(ApprovalKind kind, const std::string& subject, json detail) {
  ApprovalRequest a;
  a.id = "AP" + std::to_string(approvals_.size() + 1);
  a.kind = kind;
  a.created_at = now_;
  a.subject = subject;
  a.detail = std::move(detail);
  approvals_.push_back(a);
  emit("approval-emitted", a.to_json());
  return a.id;
}

void Engine::neutral_phase() {
  neutral_due_.reset();
  emit("neutral-phase", {{"plan_version", plan_version_}, {"requested", optimize_requested_}});
  const bool changed = !last_optimized_version_ || *last_optimized_version_ != plan_version_;
  if (model_.config.optimizer.enabled && (changed || optimize_requested_)) optimize_now();
  optimize_requested_ = false;
}

void Engine::optimize_now() {
  last_optimized_version_ = plan_version_;
  const bool movable = std::any_of(plan_.slots().begin(), plan_.slots().end(),
                                   [&](const auto& kv) { return kv.second.start >= now_ && !started_.count(kv.first); });
  if (!movable) return;
  const std::uint64_t seed = rng_();
  auto run = optimizer::optimize(model_, plan_, now_, seed, model_.config.optimizer);
  if (run.after >= run.before) return;
  run.id = "R" + std::to_string(runs_.size() + 1);
  run.plan_version = plan_version_;
  runs_.push_back(run);
  emit("optimize-proposed", runs_.back().summary());
  if (model_.config.optimizer.auto_accept) {
    optimizer::accept_run(runs_.back(), plan_, plan_version_);
    last_optimized_version_ = plan_version_;
    sync_progress();
    emit("optimize-accepted", {{"run", run.id}, {"makespan", makespan(plan_)}});
    retry_waiting();
  } else {
    new_approval(ApprovalKind::optimization_proposed, run.id, {{"before", run.before}, {"after", run.after}});
  }
}

void Engine::decide_run(const std::string& run_id, const std::string& decision, CommandResult& res) {
  auto it = std::find_if(runs_.begin(), runs_.end(), [&](const auto& r) { return r.id == run_id; });
  if (it == runs_.end()) {
    res = reject("not_found", "unknown optimization run '" + run_id + "'");
    return;
  }
  auto settle_approval = [&](ApprovalState st) {
    for (ApprovalRequest& a : approvals_) {
      if (a.kind == ApprovalKind::optimization_proposed && a.subject == run_id && a.state == ApprovalState::pending) {
        a.state = st;
        res.event_ids.push_back(emit("approval-resolved", a.to_json()));
      }
    }
  };
  try {
    if (decision == "accept") {
      optimizer::accept_run(*it, plan_, plan_version_);
      sync_progress();
      settle_approval(ApprovalState::approved);
      res.event_ids.push_back(emit("optimize-accepted", {{"run", run_id}, {"makespan", makespan(plan_)}}));
      last_optimized_version_ = plan_version_;
      retry_waiting();
    } else if (decision == "deny") {
      optimizer::deny_run(*it);
      settle_approval(ApprovalState::rejected);
      res.event_ids.push_back(emit("optimize-denied", {{"run", run_id}}));
    } else if (decision == "restore") {
      optimizer::restore_run(*it, plan_, plan_version_);
      sync_progress();
      res.event_ids.push_back(emit("optimize-restored", {{"run", run_id}, {"makespan", makespan(plan_)}}));
    } else {
      res = reject("invalid_argument", "decision must be accept, deny or restore");
    }
  } catch (const Error& e) {
    const bool stale = it->status == optimizer::RunStatus::proposed && decision == "accept";
    if (stale) settle_approval(ApprovalState::expired);
    res = reject("conflict", e.what());
  }
}

// ---- commands ----

CommandResult Engine::command(const json& cmd) {
  const std::size_t before = trace_.size();
  CommandResult r;
  try {
    r = apply_command(cmd);
  } catch (const Error& e) {
    r = reject("runtime", e.what());
  }
  if (r.ok) {
    for (std::size_t i = before; i < trace_.size(); ++i) {
      if (std::find(r.event_ids.begin(), r.event_ids.end(), trace_[i].seq) == r.event_ids.end()) {
        r.event_ids.push_back(trace_[i].seq);
      }
    }
    std::sort(r.event_ids.begin(), r.event_ids.end());
  }
  observe();
  return r;
}

CommandResult Engine::apply_command(const json& cmd) {
  if (!cmd.is_object() || !cmd.contains("type") || !cmd.at("type").is_string()) {
    return reject("invalid_argument", "command needs a string field 'type'");
  }
  const std::string type = cmd.at("type");
  auto record = [&]() { return emit("command", {{"command", cmd}, {"step", instants_}}); };
  CommandResult res;

  if (type == "submit-order") {
    if (!cmd.contains("order")) return reject("invalid_argument", "missing 'order'");
    std::vector<Issue> issues;
    OrderSpec spec = codec::order_spec_from(codec::Reader(&cmd.at("order"), "/order", &issues), {});
    if (!issues.empty()) {
      auto r = reject("validation", issues.front().path + ": " + issues.front().message);
      r.data["issues"] = issues_json(issues);
      return r;
    }
    if (model_.orders.count(spec.order.id)) return reject("conflict", "order '" + spec.order.id + "' exists");
    for (const Operation& op : spec.operations) {
      if (model_.operations.count(op.id)) return reject("conflict", "operation '" + op.id + "' exists");
      for (const ResourceNeed& n : op.resources) {
        if (!model_.stock.count(n.item)) return reject("validation", "unknown stock item '" + n.item + "'");
      }
    }
    if (!spec.order.area.empty() && !model_.areas.count(spec.order.area)) {
      return reject("validation", "unknown area '" + spec.order.area + "'");
    }
    for (const Pending& p : queue_) {
      if (p.kind == "arrival" && p.payload.value("id", "") == spec.order.id) {
        return reject("conflict", "order '" + spec.order.id + "' is scheduled to arrive");
      }
    }
    spec.order.arrival = now_;
    spec.order.release = std::max(spec.order.release, now_);
    if (spec.order.due <= spec.order.release) return reject("validation", "due must follow release");
    record();
    arrive(spec, false);
    res.data["order"] = spec.order.id;
    return res;
  }

  if (type == "resolve-approval") {
    const std::string id = cmd.value("id", "");
    const std::string decision = cmd.value("decision", "");
    if (decision != "approve" && decision != "reject") {
      return reject("invalid_argument", "decision must be approve or reject");
    }
    auto it = std::find_if(approvals_.begin(), approvals_.end(), [&](const ApprovalRequest& a) { return a.id == id; });
    if (it == approvals_.end()) return reject("not_found", "unknown approval '" + id + "'");
    if (it->state != ApprovalState::pending) {
      return reject("already_resolved", "approval '" + id + "' is already " + to_string(it->state));
    }
    const bool approve = decision == "approve";
    record();
    const std::size_t idx = static_cast<std::size_t>(it - approvals_.begin());
    if (approvals_[idx].kind == ApprovalKind::optimization_proposed) {
      decide_run(approvals_[idx].subject, approve ? "accept" : "deny", res);
      return res;
    }
    approvals_[idx].state = approve ? ApprovalState::approved : ApprovalState::rejected;
    emit("approval-resolved", approvals_[idx].to_json());
    activity();
    const std::string subject = approvals_[idx].subject;
    Order& o = model_.order(subject);
    switch (approvals_[idx].kind) {
      case ApprovalKind::overdraft_prio4:
        if (o.state != OrderState::needs_approval) break;
        if (approve) o.options.overdraft_approved = true;
        else o.options.overdraft = false;
        place(subject, std::nullopt);
        break;
      case ApprovalKind::wait_x_timeout:
        if (approve && o.state == OrderState::failed) to_manual(subject, "handed to manual dispatch after timeout");
        break;
      case ApprovalKind::manual_dispatch:
        if (!approve && o.state == OrderState::manual) {
          o.state = OrderState::failed;
          emit("order-failed", {{"order", subject}, {"reason", "manual dispatch declined"}});
        }
        break;
      case ApprovalKind::optimization_proposed: break;
    }
    return res;
  }

  if (type == "manual-action") {
    if (!cmd.contains("action") || !cmd.at("action").is_object()) return reject("invalid_argument", "missing 'action'");
    const json& a = cmd.at("action");
    dispatch::ManualAction act;
    try {
      act.kind = dispatch::manual_kind_from(a.at("kind"));
      act.order = a.at("order");
      act.parts = a.value("parts", 2);
      act.operation = a.value("operation", "");
      if (a.contains("gaps")) {
        for (const json& g : a.at("gaps")) act.gaps.push_back({g.at("machine"), {g.at("start"), g.at("end")}, false});
      }
      if (a.contains("priority")) act.priority = a.at("priority").get<int>();
      if (a.contains("due")) act.due = a.at("due").get<Minutes>();
      act.victim = a.value("victim", "");
    } catch (const std::exception& e) {
      return reject("invalid_argument", std::string("malformed manual action: ") + e.what());
    }
    if (!model_.orders.count(act.order)) return reject("not_found", "unknown order '" + act.order + "'");
    if (!act.victim.empty() && !model_.orders.count(act.victim)) {
      return reject("not_found", "unknown order '" + act.victim + "'");
    }
    record();
    activity();
    auto ctx = context();
    dispatch::ManualResult mr;
    try {
      mr = dispatch::manual_action(ctx, act, [&](const std::string& oid) { return place(oid, Strategy::force); });
    } catch (const Error& e) {
      emit("manual-action", {{"kind", to_string(act.kind)}, {"order", act.order}, {"ok", false}, {"reason", e.what()}});
      return reject(e.code() == Error::Code::not_found ? "not_found" : "validation", e.what());
    }
    touch();
    sync_progress();
    const bool ok = mr.violations.empty() && (mr.outsourced || act.kind == dispatch::ManualKind::change_restrictions ||
                                              act.kind == dispatch::ManualKind::explicit_split ||
                                              mr.outcome.status == OutcomeStatus::placed);
    json violations = json::array();
    for (const Violation& v : mr.violations) violations.push_back(v.message);
    emit("manual-action", {{"kind", to_string(act.kind)},
                           {"order", act.order},
                           {"ok", ok},
                           {"new_orders", mr.new_orders},
                           {"released", mr.released_orders},
                           {"violations", violations}});
    if (act.kind == dispatch::ManualKind::manual_split && ok) {
      Order& o = model_.order(act.order);
      o.state = OrderState::dispatched;
    }
    if (mr.outsourced) {
      messages_.send(agents::MessageKind::scm_outsource, agents::kMma, agents::kScm, "scm-" + act.order,
                     {{"order", act.order}});
    }
    for (ApprovalRequest& ap : approvals_) {
      const OrderState st = model_.orders.count(ap.subject) ? model_.order(ap.subject).state : OrderState::pending;
      if (ap.state == ApprovalState::pending && ap.subject == act.order &&
          (ap.kind == ApprovalKind::wait_x_timeout || ap.kind == ApprovalKind::manual_dispatch) &&
          st != OrderState::manual && st != OrderState::failed) {
        ap.state = ApprovalState::expired;
        emit("approval-resolved", ap.to_json());
      }
    }
    retry_waiting();
    if (!ok) {
      auto r = reject("validation", violations.empty() ? "manual action did not place the order"
                                                       : violations.front().get<std::string>());
      return r;
    }
    return res;
  }

  if (type == "optimize-now") {
    record();
    if (neutral_due_ && now_ < *neutral_due_) {
      optimize_requested_ = true;
      res.data["deferred"] = true;
      return res;
    }
    const std::size_t before = runs_.size();
    optimize_now();
    res.data["deferred"] = false;
    res.data["run"] = runs_.size() > before ? json(runs_.back().id) : json(nullptr);
    return res;
  }

  if (type == "optimization") {
    const std::string run = cmd.value("run", "");
    const std::string decision = cmd.value("decision", "");
    auto it = std::find_if(runs_.begin(), runs_.end(), [&](const auto& r) { return r.id == run; });
    if (it == runs_.end()) return reject("not_found", "unknown optimization run '" + run + "'");
    if (decision != "accept" && decision != "deny" && decision != "restore") {
      return reject("invalid_argument", "decision must be accept, deny or restore");
    }
    using optimizer::RunStatus;
    if ((decision == "restore" && (it->status != RunStatus::accepted || it->accepted_version != plan_version_)) ||
        (decision != "restore" && it->status != RunStatus::proposed) ||
        (decision == "accept" && it->plan_version != plan_version_)) {
      return reject("conflict", "run '" + run + "' cannot be " + (decision == "deny" ? "denied" : decision + "ed") +
                                    " in state " + optimizer::to_string(it->status) +
                                    (it->plan_version != plan_version_ ? " (plan changed since)" : ""));
    }
    record();
    decide_run(run, decision, res);
    return res;
  }

  if (type == "disturbance") {
    if (!cmd.contains("disturbance")) return reject("invalid_argument", "missing 'disturbance'");
    json d = cmd.at("disturbance");
    if (d.is_object()) d["at"] = now_;
    std::vector<Issue> issues;
    Disturbance dist = codec::disturbance_from(codec::Reader(&d, "/disturbance", &issues), {});
    if (!issues.empty()) {
      auto r = reject("validation", issues.front().path + ": " + issues.front().message);
      r.data["issues"] = issues_json(issues);
      return r;
    }
    using K = Disturbance::Kind;
    if ((dist.kind == K::machine_down || dist.kind == K::machine_up) && !model_.machines.count(dist.machine)) {
      return reject("not_found", "unknown machine '" + dist.machine + "'");
    }
    if (dist.kind == K::tool_damage && !model_.stock.count(dist.item)) {
      return reject("not_found", "unknown stock item '" + dist.item + "'");
    }
    if (dist.kind == K::back_order && !model_.orders.count(dist.order)) {
      return reject("not_found", "unknown order '" + dist.order + "'");
    }
    if (dist.kind == K::rush_order && dist.rush && model_.orders.count(dist.rush->order.id)) {
      return reject("conflict", "order '" + dist.rush->order.id + "' exists");
    }
    record();
    disturb(dist);
    return res;
  }

  return reject("invalid_argument", "unknown command type '" + type + "'");
}

// ---- reporting ----

Metrics Engine::metrics() const {
  Metrics m;
  m.makespan = makespan(plan_);
  Minutes horizon_end = 0;
  for (const auto& [key, s] : plan_.slots()) horizon_end = std::max(horizon_end, s.end);
  for (const auto& [id, machine] : model_.machines) {
    Minutes busy = 0, avail = 0;
    for (const Slot& s : plan_.on_machine(id)) busy += std::max<Minutes>(0, std::min(s.end, horizon_end) - std::max<Minutes>(s.start, 0));
    for (const Interval& w : machine.available({0, horizon_end})) avail += w.length();
    m.utilization[id] = avail > 0 ? static_cast<double>(busy) / static_cast<double>(avail) : 0.0;
  }
  int hits = 0, counted = 0;
  for (const auto& [id, o] : model_.orders) {
    m.orders_by_state[to_string(o.state)] += 1;
    ++m.orders;
    if (o.state == OrderState::outsourced) continue;
    ++counted;
    auto it = completed_at_.find(id);
    if (o.state == OrderState::done && it != completed_at_.end() && it->second <= o.due) ++hits;
  }
  m.due_hit_rate = counted > 0 ? static_cast<double>(hits) / counted : 0.0;
  m.escalations = escalations_;
  m.overdrafts = overdrafts_;
  m.shift_splits = shift_splits_;
  m.long_splits = long_splits_;
  m.victims = victims_;
  m.disturbances = disturbances_;
  double sum = 0.0;
  for (const auto& r : runs_) {
    ++m.optimizations;
    sum += r.improvement();
  }
  m.improvement = m.optimizations > 0 ? sum / m.optimizations : 0.0;
  return m;
}

std::string Engine::trace_ndjson() const {
  std::string out;
  for (const EventRecord& e : trace_) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

json Engine::state_json() const {
  json approvals = json::array();
  for (const auto& a : approvals_) approvals.push_back(a.to_json());
  json waiting = json::array();
  for (const auto& e : waiting_.entries) waiting.push_back({{"order", e.order}, {"deadline", e.deadline}, {"enqueued", e.enqueued}});
  return {{"now", now_},
          {"model", codec::model_to_json(model_)},
          {"plan", codec::to_json(plan_)},
          {"plan_version", plan_version_},
          {"approvals", approvals},
          {"waiting", waiting}};
}

std::string Engine::state_hash() const { return hex64(fnv1a(state_json().dump())); }

json Engine::snapshot() const {
  json j = state_json();
  json queue = json::array();
  for (const Pending& p : queue_) queue.push_back({{"time", p.time}, {"seq", p.seq}, {"kind", p.kind}, {"payload", p.payload}});
  json trace = json::array();
  for (const EventRecord& e : trace_) trace.push_back(e.to_json());
  json runs = json::array();
  for (const auto& r : runs_) runs.push_back(run_to_json(r));
  auto keys = [](const std::set<SlotKey>& s) {
    json a = json::array();
    for (const SlotKey& k : s) a.push_back({k.op, k.part});
    return a;
  };
  std::ostringstream rng;
  rng << rng_;
  j["format"] = "masched-snapshot";
  j["version"] = 1;
  j["instants"] = instants_;
  j["finished"] = finished_;
  j["horizon_done"] = horizon_done_;
  j["queue"] = queue;
  j["next_pending"] = next_pending_;
  j["trace"] = trace;
  j["next_event"] = next_event_;
  j["messages"] = messages_.to_json();
  j["runs"] = runs;
  j["started"] = keys(started_);
  j["finished_slots"] = keys(finished_slots_);
  j["completed_at"] = completed_at_;
  j["rng"] = rng.str();
  j["neutral_due"] = neutral_due_ ? json(*neutral_due_) : json(nullptr);
  j["optimize_requested"] = optimize_requested_;
  j["last_optimized_version"] = last_optimized_version_ ? json(*last_optimized_version_) : json(nullptr);
  j["shift_cursor"] = shift_cursor_;
  j["counters"] = {{"escalations", escalations_}, {"overdrafts", overdrafts_},   {"shift_splits", shift_splits_},
                   {"long_splits", long_splits_}, {"victims", victims_},         {"disturbances", disturbances_}};
  json replay = json::array();
  for (const auto& c : replay_) replay.push_back({{"at", c.at}, {"step", c.step}, {"command", c.command}});
  j["replay"] = replay;
  return j;
}

Engine Engine::restore(const json& j) {
  if (j.value("format", "") != "masched-snapshot") throw Error(Error::Code::parse, "not a snapshot document");
  if (j.value("version", 0) != 1) throw Error(Error::Code::parse, "unsupported snapshot version");
  Engine e;
  try {
    e.now_ = j.at("now");
    e.model_ = codec::model_from_json(j.at("model"));
    e.plan_ = codec::plan_from(j.at("plan"));
    e.plan_version_ = j.at("plan_version");
    for (const json& a : j.at("approvals")) {
      ApprovalRequest r;
      r.id = a.at("id");
      r.kind = approval_kind_from(a.at("kind"));
      r.created_at = a.at("created_at");
      r.subject = a.at("subject");
      r.state = approval_state_from(a.at("state"));
      r.detail = a.at("detail");
      e.approvals_.push_back(r);
    }
    for (const json& w : j.at("waiting")) e.waiting_.entries.push_back({w.at("order"), w.at("deadline"), w.at("enqueued")});
    e.instants_ = j.at("instants");
    e.finished_ = j.at("finished");
    e.horizon_done_ = j.at("horizon_done");
    for (const json& p : j.at("queue")) e.queue_.push_back({p.at("time"), p.at("seq"), p.at("kind"), p.at("payload")});
    e.next_pending_ = j.at("next_pending");
    for (const json& t : j.at("trace")) e.trace_.push_back({t.at("seq"), t.at("time"), t.at("kind"), t.at("payload")});
    e.next_event_ = j.at("next_event");
    e.messages_ = agents::MessageLog::from_json(j.at("messages"));
    for (const json& r : j.at("runs")) e.runs_.push_back(run_from_json(r));
    for (const json& k : j.at("started")) e.started_.insert({k.at(0), k.at(1)});
    for (const json& k : j.at("finished_slots")) e.finished_slots_.insert({k.at(0), k.at(1)});
    e.completed_at_ = j.at("completed_at").get<std::map<std::string, Minutes>>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> e.rng_;
    if (!j.at("neutral_due").is_null()) e.neutral_due_ = j.at("neutral_due").get<Minutes>();
    e.optimize_requested_ = j.at("optimize_requested");
    if (!j.at("last_optimized_version").is_null()) e.last_optimized_version_ = j.at("last_optimized_version").get<std::uint64_t>();
    e.shift_cursor_ = j.at("shift_cursor");
    const json& c = j.at("counters");
    e.escalations_ = c.at("escalations");
    e.overdrafts_ = c.at("overdrafts");
    e.shift_splits_ = c.at("shift_splits");
    e.long_splits_ = c.at("long_splits");
    e.victims_ = c.at("victims");
    e.disturbances_ = c.at("disturbances");
    for (const json& r : j.at("replay")) e.replay_.push_back({r.at("at"), r.at("step"), r.at("command")});
  } catch (const json::exception& ex) {
    throw Error(Error::Code::parse, std::string("malformed snapshot: ") + ex.what());
  }
  return e;
}

}  // namespace mas::sim
