#include <doctest.h>

#include "mas/engine.hpp"
#include "oracles.hpp"

using namespace mas;
using namespace mas::test;
using sim::Engine;
using json = nlohmann::json;

namespace {

std::vector<std::string> kinds(const Engine& e, const std::string& kind) {
  std::vector<std::string> out;
  for (const auto& ev : e.trace()) {
    if (ev.kind == kind) out.push_back(ev.payload.dump());
  }
  return out;
}

int count(const Engine& e, const std::string& kind) { return static_cast<int>(kinds(e, kind).size()); }

void no_robustness(ShopModel& model) {
  for (auto& [id, o] : model.orders) o.options.robustness = false;
}

bool terminal(OrderState s) {
  return s == OrderState::done || s == OrderState::failed || s == OrderState::outsourced || s == OrderState::manual;
}

// Plan validity after every handler.
struct Watch {
  int checks = 0;
  std::vector<std::string> problems;
  void attach(Engine& e) {
    e.set_observer([this](const Engine& en) {
      ++checks;
      auto report = validate_plan(en.plan(), en.model());
      if (!report.ok() && problems.size() < 5) {
        problems.push_back("t=" + std::to_string(en.now()) + ": " +
                           (report.violations.empty() ? report.structural.front() : report.violations.front().message));
      }
    });
  }
};

}  // namespace

TEST_CASE("one machine, two orders: utilization by hand") {
  ShopModel model = shop_with(1);
  add_order(model, "A", {{"milling", 60}}, 3, 0, 1000);
  add_order(model, "B", {{"milling", 40}}, 3, 200, 1000);
  no_robustness(model);
  Engine e(scenario_of(model));
  e.run();
  CHECK(e.model().order("A").state == OrderState::done);
  CHECK(e.model().order("B").state == OrderState::done);
  auto m = e.metrics();
  // A [0,60), B [200,240): busy 100 of 240 available minutes.
  CHECK(m.makespan == 240);
  CHECK(m.utilization.at("M1") == doctest::Approx(100.0 / 240.0));
  CHECK(m.due_hit_rate == 1.0);
  CHECK(count(e, "op-finish") == 2);
  CHECK(e.model().machine("M1").apt_observed);
}

TEST_CASE("empty scenario yields an empty trace") {
  Scenario s;
  s.shop = shop_with(2);
  Engine e(s);
  e.run();
  CHECK(e.trace().empty());
  CHECK(e.metrics().makespan == 0);
  CHECK(e.finished());
}

TEST_CASE("same scenario and seed give byte-identical traces") {
  for (std::uint64_t seed : {3u, 11u, 42u}) {
    Scenario s = random_scenario(seed, 4, 16, true);
    Engine a(s), b(s);
    a.run();
    b.run();
    CHECK(a.trace_ndjson() == b.trace_ndjson());
    CHECK(a.state_hash() == b.state_hash());
    CHECK_FALSE(a.trace().empty());
  }
}

TEST_CASE("events are ordered by time and sequence") {
  Engine e(random_scenario(5, 5, 20, true));
  e.run();
  for (std::size_t i = 1; i < e.trace().size(); ++i) {
    CHECK(e.trace()[i].time >= e.trace()[i - 1].time);
    CHECK(e.trace()[i].seq == e.trace()[i - 1].seq + 1);
  }
}

TEST_CASE("machine down voids its future slots and re-dispatches them") {
  ShopModel model = shop_with(2);
  for (int i = 1; i <= 6; ++i) add_order(model, "O" + std::to_string(i), {{"milling", 60}}, 3, 0, 2000);
  no_robustness(model);
  Scenario s = scenario_of(model);
  Disturbance d;
  d.kind = Disturbance::Kind::machine_down;
  d.at = 30;
  d.machine = "M1";
  s.disturbances.push_back(d);
  Engine e(s);
  Watch w;
  w.attach(e);
  e.run_until(29);
  int on_m1 = 0;
  for (const Slot& sl : e.plan().on_machine("M1")) on_m1 += sl.end > 30;
  REQUIRE(on_m1 == 3);
  e.run();
  CHECK(w.problems.empty());
  for (const Slot& sl : e.plan().on_machine("M1")) CHECK(sl.end <= 30);
  auto down = e.trace();
  auto it = std::find_if(down.begin(), down.end(), [](const auto& ev) { return ev.kind == "machine-down"; });
  REQUIRE(it != down.end());
  CHECK(it->payload.at("voided").size() == 3);
  int redispatched = 0;
  for (auto j = it; j != down.end(); ++j) redispatched += j->kind == "order-dispatched";
  CHECK(redispatched == 3);
  for (const auto& [id, o] : e.model().orders) CHECK(o.state == OrderState::done);
}

TEST_CASE("rush order into a full shop displaces and re-queues the victim") {
  ShopModel model = shop_with(1);
  model.config.horizon = 1000;
  add_order(model, "A", {{"milling", 300}}, 1, 0, 600);
  add_order(model, "B", {{"milling", 300}}, 1, 0, 600);
  no_robustness(model);
  Scenario s = scenario_of(model);
  Disturbance d;
  d.kind = Disturbance::Kind::rush_order;
  d.at = 10;
  OrderSpec r;
  r.order.id = "R";
  r.order.priority = 5;
  r.order.arrival = r.order.release = 10;
  r.order.due = 500;
  Operation op;
  op.id = "R.1";
  op.order = "R";
  op.sequence = 1;
  op.process = "milling";
  op.duration = 100;
  r.order.operations = {"R.1"};
  r.operations = {op};
  d.rush = r;
  s.disturbances.push_back(d);

  Engine e(s);
  Watch w;
  w.attach(e);
  e.run_until(10);
  // A has started and stays; B's slot was free game for the rush order.
  CHECK(e.plan().slots_of("R.1").front().interval() == Interval{300, 400});
  CHECK(e.plan().slots_of("B.1").front().interval() == Interval{400, 700});
  auto displaced = kinds(e, "order-displaced");
  REQUIRE(displaced.size() == 1);
  CHECK(json::parse(displaced[0]).at("order") == "B");
  e.run();
  CHECK(w.problems.empty());
  for (const auto& [id, o] : e.model().orders) CHECK(o.state == OrderState::done);
}

TEST_CASE("tool damage with a spare keeps every slot in place") {
  ShopModel model = shop_with(1);
  add_order(model, "A", {{"milling", 60}}, 3, 0, 1000);
  model.operations["A.1"].resources.push_back({ResourceKind::tool, "T"});
  model.stock["T"] = StockEntry{ResourceKind::tool, "T", 2, 2, {}};
  no_robustness(model);
  Scenario s = scenario_of(model);
  Disturbance d;
  d.kind = Disturbance::Kind::tool_damage;
  d.at = 10;
  d.item = "T";
  s.disturbances.push_back(d);
  Engine e(s);
  e.run_until(9);
  const auto before = e.plan().slots();
  e.run_until(10);
  CHECK(e.plan().slots() == before);
  CHECK(e.model().stock_of("T") == 1);
  CHECK(validate_plan(e.plan(), e.model()).ok());
  e.run();
  CHECK(e.model().order("A").state == OrderState::done);
}

TEST_CASE("tool damage without a spare re-dispatches or hands over") {
  ShopModel model = shop_with(1);
  add_order(model, "A", {{"milling", 60}}, 3, 0, 1000);
  model.operations["A.1"].resources.push_back({ResourceKind::tool, "T"});
  model.stock["T"] = StockEntry{ResourceKind::tool, "T", 1, 1, {}};
  no_robustness(model);
  Scenario s = scenario_of(model);
  Disturbance d;
  d.kind = Disturbance::Kind::tool_damage;
  d.at = 10;
  d.item = "T";
  s.disturbances.push_back(d);
  Engine e(s);
  e.run();
  CHECK_FALSE(e.plan().has("A.1"));
  CHECK(e.model().order("A").state == OrderState::manual);
  CHECK(count(e, "order-manual") == 1);
  bool asked = false;
  for (const auto& a : e.approvals()) asked = asked || a.kind == sim::ApprovalKind::manual_dispatch;
  CHECK(asked);
}

namespace {

Scenario overdraft_scenario() {
  ShopModel model = shop_with(1);
  model.config.horizon = 1440;
  model.machines["M1"].calendar = daily(0, 480);
  add_order(model, "X", {{"milling", 395}}, 3, 0, 1000);
  auto& a = add_order(model, "A", {{"milling", 110}}, 4, 1, 1000);
  a.options.overdraft = true;
  no_robustness(model);
  return scenario_of(model);
}

}  // namespace

TEST_CASE("overdraft approval: approve places, second resolve is rejected") {
  Engine e(overdraft_scenario());
  e.run_until(1);
  REQUIRE(e.approvals().size() == 1);
  const auto id = e.approvals()[0].id;
  CHECK(e.approvals()[0].kind == sim::ApprovalKind::overdraft_prio4);
  CHECK(e.approvals()[0].detail.at("excess") == 25);
  CHECK(e.model().order("A").state == OrderState::needs_approval);

  auto res = e.command({{"type", "resolve-approval"}, {"id", id}, {"decision", "approve"}});
  CHECK(res.ok);
  CHECK(e.plan().slots_of("A.1").front().interval() == Interval{395, 505});
  CHECK(count(e, "approval-resolved") == 1);

  auto again = e.command({{"type", "resolve-approval"}, {"id", id}, {"decision", "reject"}});
  CHECK_FALSE(again.ok);
  CHECK(again.code == "already_resolved");
  auto missing = e.command({{"type", "resolve-approval"}, {"id", "AP99"}, {"decision", "approve"}});
  CHECK(missing.code == "not_found");
  e.run();
  CHECK(e.model().order("A").state == OrderState::done);
}

TEST_CASE("overdraft approval: reject falls back to failure handling") {
  Engine e(overdraft_scenario());
  e.run_until(1);
  auto res = e.command({{"type", "resolve-approval"}, {"id", e.approvals()[0].id}, {"decision", "reject"}});
  CHECK(res.ok);
  CHECK_FALSE(e.plan().has("A.1"));
  CHECK(e.model().order("A").state == OrderState::manual);
  CHECK_FALSE(e.model().order("A").options.overdraft);
}

TEST_CASE("wait-x timeout emits an approval and fails the order") {
  ShopModel model = shop_with(1);
  model.config.horizon = 2000;
  add_order(model, "X", {{"milling", 600}}, 3, 0, 1000);
  auto& w = add_order(model, "W", {{"milling", 100}}, 3, 1, 300, Strategy::wait_x);
  w.options.wait_deadline = 300;
  no_robustness(model);
  Engine e(scenario_of(model));
  e.run();
  CHECK(count(e, "order-waiting") == 1);
  CHECK(e.model().order("W").state == OrderState::failed);
  REQUIRE(e.approvals().size() == 1);
  CHECK(e.approvals()[0].kind == sim::ApprovalKind::wait_x_timeout);
  CHECK(e.approvals()[0].created_at == 300);
  auto res = e.command({{"type", "resolve-approval"}, {"id", e.approvals()[0].id}, {"decision", "approve"}});
  CHECK(res.ok);
  CHECK(e.model().order("W").state == OrderState::manual);
}

TEST_CASE("optimize-now during active dispatch waits for the neutral phase") {
  ShopModel model = shop_with(2, {"p0"});
  add_order(model, "A", {{"p0", 100}}, 3, 0, 5000);
  add_order(model, "B", {{"p0", 100}}, 3, 0, 5000);
  Engine e(scenario_of(model));
  REQUIRE(e.step());
  auto res = e.command({{"type", "optimize-now"}});
  CHECK(res.ok);
  CHECK(res.data.at("deferred") == true);
  e.run();
  auto phases = kinds(e, "neutral-phase");
  REQUIRE_FALSE(phases.empty());
  CHECK(json::parse(phases.front()).at("requested") == true);
  CHECK(count(e, "command") == 1);
}

TEST_CASE("unknown and malformed commands are rejected without trace entries") {
  Engine e(overdraft_scenario());
  e.run_until(1);
  const auto n = e.trace().size();
  CHECK(e.command({{"type", "launch"}}).code == "invalid_argument");
  CHECK(e.command(json::array()).code == "invalid_argument");
  CHECK(e.command({{"type", "submit-order"}, {"order", {{"id", "Z"}}}}).code == "validation");
  CHECK(e.command({{"type", "optimization"}, {"run", "R9"}, {"decision", "accept"}}).code == "not_found");
  CHECK(e.command({{"type", "disturbance"}, {"disturbance", {{"kind", "machine-down"}, {"machine", "M9"}}}}).code ==
        "not_found");
  CHECK(e.trace().size() == n);
}

TEST_CASE("submitted orders arrive at the current clock") {
  ShopModel model = shop_with(1);
  add_order(model, "A", {{"milling", 60}}, 3, 0, 1000);
  Engine e(scenario_of(model));
  e.run_until(100);
  CHECK(e.now() == 100);
  json order = {{"id", "N"},
                {"priority", 3},
                {"release", 0},
                {"due", 2000},
                {"strategy", "Force"},
                {"operations", json::array({{{"id", "N.1"}, {"sequence", 1}, {"process", "milling"}, {"duration", 30}}})}};
  auto res = e.command({{"type", "submit-order"}, {"order", order}});
  REQUIRE(res.ok);
  int arrivals = 0;
  for (auto id : res.event_ids) arrivals += e.trace()[id - 1].kind == "order-arrival";
  CHECK(arrivals == 1);
  CHECK(e.model().order("N").arrival == 100);
  CHECK(e.plan().slots_of("N.1").front().start >= 100);
  CHECK(e.command({{"type", "submit-order"}, {"order", order}}).code == "conflict");
  e.run();
  CHECK(e.model().order("N").state == OrderState::done);
}

TEST_CASE("replaying the command log reproduces the trace") {
  Scenario s = random_scenario(8, 4, 14, true);
  Engine live(s);
  live.run_until(200);
  live.command({{"type", "optimize-now"}});
  json order = {{"id", "N"},
                {"priority", 5},
                {"release", 0},
                {"due", 3000},
                {"strategy", "X-Competition"},
                {"operations", json::array({{{"id", "N.1"}, {"sequence", 1}, {"process", "p0"}, {"duration", 45}}})}};
  live.command({{"type", "submit-order"}, {"order", order}});
  live.run_until(700);
  live.command({{"type", "disturbance"}, {"disturbance", {{"kind", "machine-down"}, {"machine", "M2"}, {"until", 900}}}});
  live.run();

  Engine again(s);
  again.schedule_commands(Engine::commands_in(live.trace()));
  again.run();
  CHECK(again.trace_ndjson() == live.trace_ndjson());
  CHECK(again.state_hash() == live.state_hash());
}

TEST_CASE("snapshot and restore mid-run continue like the uninterrupted run") {
  for (std::uint64_t seed : {2u, 9u, 21u}) {
    Scenario s = random_scenario(seed, 5, 20, true);
    Engine whole(s);
    whole.run();

    Engine first(s);
    for (int i = 0; i < 25 && first.step(); ++i) {}
    const json snap = first.snapshot();
    Engine second = Engine::restore(json::parse(snap.dump()));
    second.run();
    CHECK(second.trace_ndjson() == whole.trace_ndjson());
    CHECK(second.state_hash() == whole.state_hash());
  }
}

TEST_CASE("restore rejects foreign documents") {
  CHECK_THROWS_AS(Engine::restore(json{{"format", "other"}}), Error);
  CHECK_THROWS_AS(Engine::restore(json{{"format", "masched-snapshot"}, {"version", 1}}), Error);
}

TEST_CASE("no arrived order is lost and every plan validates") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    Scenario s = random_scenario(seed, 2 + static_cast<int>(seed % 5), 8 + static_cast<int>(seed % 20), seed % 2 == 0);
    Engine e(s);
    Watch w;
    w.attach(e);
    e.run();
    CHECK_MESSAGE(w.problems.empty(), "seed " << seed << ": " << (w.problems.empty() ? "" : w.problems.front()));
    for (const auto& [id, o] : e.model().orders) {
      CHECK_MESSAGE(terminal(o.state), "seed " << seed << " order " << id << " is " << to_string(o.state));
    }
  }
}

TEST_CASE("down machine in the order's area forces an escalation") {
  ShopModel model;
  model.areas["plant"] = Area{"plant", std::nullopt, 1};
  model.areas["2a"] = Area{"2a", "plant", 2};
  model.areas["3a"] = Area{"3a", "2a", 3};
  model.areas["3b"] = Area{"3b", "2a", 3};
  model.machines["M1"] = make_machine("M1", {"milling"}, "3a");
  model.machines["M3"] = make_machine("M3", {"drilling"}, "3a");
  model.machines["M2"] = make_machine("M2", {"milling", "drilling"}, "3b");
  add_order(model, "A", {{"milling", 120}, {"drilling", 60}}, 3, 0, 2000).area = "3a";
  no_robustness(model);
  Scenario s = scenario_of(model);
  Disturbance d;
  d.kind = Disturbance::Kind::machine_down;
  d.at = 30;
  d.machine = "M1";
  s.disturbances.push_back(d);
  Engine e(s);
  Watch w;
  w.attach(e);
  e.run_until(0);
  REQUIRE(e.plan().slots_of("A.1").front().machine == "M1");
  e.run();
  CHECK(w.problems.empty());
  auto esc = kinds(e, "escalation");
  REQUIRE(esc.size() == 1);
  CHECK(json::parse(esc[0]).at("from") == "3a");
  CHECK(json::parse(esc[0]).at("to") == "2a");
  CHECK(e.plan().slots_of("A.1").front().machine == "M2");
  CHECK(e.model().order("A").state == OrderState::done);
  CHECK(e.metrics().escalations == 1);
}

TEST_CASE("stepping by hand applies replayed commands at their instant") {
  Scenario s = random_scenario(4, 3, 12, true);
  Engine live(s);
  live.run_until(150);
  live.command({{"type", "optimize-now"}});
  live.run_until(600);
  live.command({{"type", "disturbance"}, {"disturbance", {{"kind", "machine-down"}, {"machine", "M1"}, {"until", 800}}}});
  live.run_until(2000);
  live.run();

  Engine stepped(s);
  stepped.schedule_commands(Engine::commands_in(live.trace()));
  while (stepped.step()) {}
  CHECK(stepped.trace_ndjson() == live.trace_ndjson());
  // Idle clock advances are not logged; the finished clock rests at the horizon either way.
  CHECK(stepped.now() == s.shop.config.horizon);
  CHECK(stepped.state_hash() == live.state_hash());
}
