// Acceptance harness: one PASS/FAIL line per criterion, details indented
// below it. Exit status is nonzero when any line fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mas/engine.hpp"
#include "mas/optimizer.hpp"
#include "oracles.hpp"

using namespace mas;
using namespace mas::test;
using sim::Engine;
using json = nlohmann::json;

namespace {

int failures = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %-26s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

void note(const std::string& line) { std::printf("     %s\n", line.c_str()); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

std::string distribution(const std::vector<double>& v) {
  std::ostringstream os;
  os << "min " << fmt("%.1f%%", 100 * quantile(v, 0)) << "  p25 " << fmt("%.1f%%", 100 * quantile(v, 0.25)) << "  median "
     << fmt("%.1f%%", 100 * quantile(v, 0.5)) << "  p75 " << fmt("%.1f%%", 100 * quantile(v, 0.75)) << "  p90 "
     << fmt("%.1f%%", 100 * quantile(v, 0.9)) << "  max " << fmt("%.1f%%", 100 * quantile(v, 1));
  return os.str();
}

bool terminal(OrderState s) {
  return s == OrderState::done || s == OrderState::failed || s == OrderState::outsourced || s == OrderState::manual;
}

// Slots on a machine while it is down, or tool use beyond the remaining stock.
std::string dead_resource_use(const Engine& e) {
  for (const auto& [mid, m] : e.model().machines) {
    for (const Slot& s : e.plan().on_machine(mid)) {
      for (const Interval& out : m.outages) {
        if (s.start < out.end && out.start < s.end) {
          return "slot " + s.op + " on " + mid + " overlaps an outage at " + std::to_string(out.start);
        }
      }
    }
  }
  for (const auto& [item, entry] : e.model().stock) {
    std::vector<std::pair<Minutes, int>> edges;
    for (const auto& [key, s] : e.plan().slots()) {
      if (s.end <= e.now()) continue;
      for (const auto& r : e.model().operation(s.op).resources) {
        if (r.item != item) continue;
        edges.push_back({std::max(s.start, e.now()), 1});
        edges.push_back({s.end, -1});
      }
    }
    std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : a.second < b.second;
    });
    int live = 0;
    for (const auto& [t, d] : edges) {
      live += d;
      if (live > e.model().stock_of(item)) return "tool " + item + " overbooked at " + std::to_string(t);
    }
  }
  return "";
}

// Validator plus dead-resource check after every engine handler.
struct Watch {
  long checks = 0;
  std::string first;
  void attach(Engine& e, bool resources) {
    e.set_observer([this, resources](const Engine& en) {
      ++checks;
      if (!first.empty()) return;
      const auto r = validate_plan(en.plan(), en.model());
      if (!r.ok()) {
        first = "t=" + std::to_string(en.now()) + " " + (r.violations.empty() ? r.structural.front() : r.violations.front().message);
      } else if (resources) {
        const std::string dead = dead_resource_use(en);
        if (!dead.empty()) first = "t=" + std::to_string(en.now()) + " " + dead;
      }
    });
  }
};

// ---- feasibility ----

void feasibility() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240611);
  long checks = 0, orders = 0, optimizer_runs = 0;
  int bad = 0, lost = 0, with_disturbances = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const int machines = 2 + static_cast<int>(rng() % 7);
    const int ops = 5 + static_cast<int>(rng() % 36);
    const bool disturbances = rng() % 2 == 0;
    with_disturbances += disturbances;
    Engine e(random_scenario(seed, machines, ops, disturbances));
    Watch w;
    w.attach(e, true);
    e.run();
    checks += w.checks;
    optimizer_runs += static_cast<long>(e.runs().size());
    for (const auto& [id, o] : e.model().orders) {
      ++orders;
      lost += !terminal(o.state);
    }
    if (!w.first.empty()) {
      ++bad;
      if (first.empty()) first = "seed " + std::to_string(seed) + ": " + w.first;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  verdict(bad == 0 && lost == 0, "feasibility",
          "1000 scenarios, " + std::to_string(bad) + " with violations, " + std::to_string(lost) + " orders not terminal");
  note(std::to_string(with_disturbances) + " with disturbances, " + std::to_string(orders) + " orders, " +
       std::to_string(optimizer_runs) + " optimizer runs, " + std::to_string(checks) + " plan checks, " + fmt("%.1f s", secs));
  if (!first.empty()) note("first: " + first);
}

// ---- oracle ----

void oracle() {
  std::vector<double> gaps;
  int below = 0, optimal = 0;
  std::uint64_t seed = 5000;
  while (gaps.size() < 200) {
    ++seed;
    const int machines = 1 + static_cast<int>(seed % 3);
    const int ops = 3 + static_cast<int>((seed / 3) % 5);
    ShopModel model = random_instance(seed, machines, ops);
    Plan base = naive_plan(model);
    const auto run = optimizer::optimize(model, base, 0, seed, OptimizerConfig{});
    const Minutes best = brute_force_makespan(model);
    below += run.after < best;
    optimal += run.after == best;
    gaps.push_back(static_cast<double>(run.after - best) / static_cast<double>(best));
  }
  const double median = quantile(gaps, 0.5);
  verdict(below == 0 && median <= 0.15, "oracle",
          "200 instances, " + std::to_string(below) + " below optimum, median gap " + fmt("%.1f%%", 100 * median) +
              " (target <= 15%)");
  note(distribution(gaps));
  note(std::to_string(optimal) + " of 200 optimal");
}

// ---- improvement ----

void improvement() {
  std::vector<double> gains;
  int worse = 0, invalid = 0, in_band = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    ShopModel model = random_instance(7000 + seed, 5, 20);
    Plan base = naive_plan(model);
    const auto run = optimizer::optimize(model, base, 0, seed, OptimizerConfig{});
    worse += run.after > run.before;
    invalid += !validate_plan(run.candidate, model).ok();
    const double g = static_cast<double>(run.before - run.after) / static_cast<double>(run.before);
    in_band += g >= 0.10 && g <= 0.35;
    gains.push_back(g);
  }
  const double mean = std::accumulate(gains.begin(), gains.end(), 0.0) / static_cast<double>(gains.size());
  verdict(mean > 0 && worse == 0 && invalid == 0, "improvement",
          "100 instances 5x20, mean " + fmt("%.2f%%", 100 * mean) + ", " + std::to_string(worse) + " worse, " +
              std::to_string(invalid) + " invalid");
  note(distribution(gains));
  note("mean in 10-35% band: " + std::string(mean >= 0.10 && mean <= 0.35 ? "yes" : "no") + "; instances in band: " +
       std::to_string(in_band) + " of 100");
}

// ---- strategy table ----

struct Row {
  std::string name;
  bool ok;
  std::string detail;
};

Row overdraft_row() {
  std::string detail;
  bool ok = true;
  for (int prio : {5, 4, 3}) {
    ShopModel model = shop_with(1);
    model.config.horizon = 1440;
    model.machines["M1"].calendar = daily(0, 480);
    Plan plan;
    Slot x = slot("X.1", "M1", 0, 395);
    add_order(model, "X", {{"milling", 395}});
    plan.put(x);
    auto& o = add_order(model, "A", {{"milling", 110}}, prio);
    o.options.overdraft = true;
    o.options.robustness = false;
    dispatch::Context ctx{model, plan, 0, {}, nullptr, {}};
    const auto out = dispatch::dispatch_force(ctx, "A");
    std::string got;
    if (out.status == dispatch::OutcomeStatus::placed && plan.slots_of("A.1").front().overdraft == 25) got = "auto";
    if (out.status == dispatch::OutcomeStatus::needs_approval && out.approval && out.approval->excess == 25) got = "ask";
    if (out.status == dispatch::OutcomeStatus::failed) got = "deny";
    const std::string want = prio == 5 ? "auto" : prio == 4 ? "ask" : "deny";
    ok = ok && got == want;
    detail += "prio " + std::to_string(prio) + " " + (got.empty() ? "?" : got) + (prio > 3 ? ", " : "");
  }
  return {"overdraft 25 min", ok, detail};
}

Row long_split_row() {
  Operation op;
  op.id = "L";
  bool ok = true;
  op.duration = 1200;
  ok = ok && dispatch::split_long_runner(op).size() == 1;
  op.duration = 1201;
  const auto parts = dispatch::split_long_runner(op);
  Minutes sum = 0;
  for (const auto& p : parts) {
    sum += p.duration;
    ok = ok && p.duration >= 300;
  }
  ok = ok && parts.size() > 1 && sum == 1201;
  op.duration = 1500;
  const auto five = dispatch::split_long_runner(op);
  ok = ok && five.size() == 3 && std::all_of(five.begin(), five.end(), [](const Operation& p) { return p.duration == 500; });
  return {"long split 1200/300", ok,
          "1200 stays whole, 1201 -> " + std::to_string(parts.size()) + " parts >= 300, 1500 -> " + std::to_string(five.size()) + "x500"};
}

Row x_competition_row() {
  ShopModel model = shop_with(1);
  model.config.horizon = 480;
  Plan plan;
  add_order(model, "V", {{"milling", 480}}, 1);
  plan.put(slot("V.1", "M1", 0, 480));
  add_order(model, "H", {{"milling", 60}}, 5);
  add_order(model, "R", {{"milling", 60}}, 5);
  dispatch::Context ctx{model, plan, 0, {}, nullptr, {}};
  const auto out = dispatch::dispatch_x_competition(ctx, "R", 3);
  const bool took = out.status == dispatch::OutcomeStatus::placed && plan.slots_of("R.1").front().interval() == Interval{0, 60} &&
                    out.unplaced_victims == std::vector<std::string>{"V"};
  // A priority-5 booking is not free for X = 3.
  Plan full;
  full.put(slot("H.1", "M1", 0, 480));
  dispatch::Context hctx{model, full, 0, {}, nullptr, {}};
  const bool blocked = dispatch::dispatch_x_competition(hctx, "R", 3).status != dispatch::OutcomeStatus::placed;
  return {"X-Competition", took && blocked && validate_plan(plan, model).ok(),
          std::string("prio 1 slot taken at [0,60): ") + (took ? "yes" : "no") + ", prio 5 slot respected: " + (blocked ? "yes" : "no")};
}

Row wait_x_row() {
  ShopModel model = shop_with(1);
  model.config.horizon = 2000;
  add_order(model, "X", {{"milling", 600}}, 3, 0, 1000).options.robustness = false;
  auto& w = add_order(model, "W", {{"milling", 100}}, 3, 1, 300, Strategy::wait_x);
  w.options.wait_deadline = 300;
  w.options.robustness = false;
  Engine e(scenario_of(model));
  e.run();
  int waiting = 0;
  for (const auto& ev : e.trace()) waiting += ev.kind == "order-waiting";
  const bool approval = e.approvals().size() == 1 && e.approvals()[0].kind == sim::ApprovalKind::wait_x_timeout &&
                        e.approvals()[0].created_at == 300 && e.approvals()[0].subject == "W";
  const bool failed = e.model().order("W").state == OrderState::failed;
  return {"Wait-X timeout", waiting == 1 && approval && failed,
          std::string("waiting once, wait-x-timeout approval at 300: ") + (approval ? "yes" : "no") + ", order failed: " +
              (failed ? "yes" : "no")};
}

Row opt_row() {
  ShopModel model = shop_with(3);
  model.machines["M1"].calendar = daily(0, 960);
  model.machines["M2"].calendar = daily(360, 1320);
  model.machines["M1"].capability.graded["axes"] = 5;
  model.machines["M2"].capability.graded["axes"] = 3;
  model.machines["M3"].capability.graded["axes"] = 4;
  Plan plan;
  dispatch::Context ctx{model, plan, 0, {}, nullptr, {}};
  int checked = 0, matched = 0;
  for (int k = 0; k < 4; ++k) {
    auto& o = add_order(model, "O" + std::to_string(k), {{"milling", 90 + 30 * k}, {"milling", 60}}, 3, 0, 1440 + 500 * k, Strategy::opt);
    model.operation(o.operations[0]).requirement.graded["axes"] = 3;
    model.operation(o.operations[1]).robustness = 20 * k;
    const Order& order = model.order(o.id);
    dispatch::Request req{Strategy::opt, order.options, order.due};
    for (auto it = order.operations.rbegin(); it != order.operations.rend(); ++it) {
      const auto all = dispatch::generate_proposals(ctx, *it, req);
      double best = -1;
      for (const auto& p : all) {
        double sum = 0;
        for (std::size_t i = 0; i < indexes::kIndexCount; ++i) sum += p.indexes.value[i].value_or(0.0);
        best = std::max(best, sum / static_cast<double>(indexes::kIndexCount));
      }
      dispatch::DispatchOutcome scratch;
      const auto won = dispatch::negotiate(ctx, *it, req, scratch);
      ++checked;
      if (won && std::abs(won->total - best) < 1e-12) ++matched;
      if (won) dispatch::award(ctx, *won);
    }
  }
  return {"OPT argmax", checked == 8 && matched == 8 && validate_plan(plan, model).ok(),
          std::to_string(matched) + " of " + std::to_string(checked) + " awards at the maximum total index"};
}

void strategy_table() {
  const std::vector<Row> rows{overdraft_row(), long_split_row(), x_competition_row(), wait_x_row(), opt_row()};
  bool ok = true;
  for (const Row& r : rows) ok = ok && r.ok;
  verdict(ok, "strategy table", std::to_string(std::count_if(rows.begin(), rows.end(), [](const Row& r) { return r.ok; })) +
                                    " of " + std::to_string(rows.size()) + " rows reproduce");
  for (const Row& r : rows) note(std::string(r.ok ? "ok   " : "FAIL ") + r.name + ": " + r.detail);
}

// ---- determinism ----

// Drives a live engine with a random command log.
void drive(Engine& e, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919);
  int n = 0;
  while (!e.finished()) {
    e.run_until(e.now() + 60 + static_cast<Minutes>(rng() % 400));
    switch (rng() % 5) {
      case 0:
        e.command({{"type", "optimize-now"}});
        break;
      case 1: {
        const std::string id = "S" + std::to_string(++n);
        e.command({{"type", "submit-order"},
                   {"order",
                    {{"id", id},
                     {"priority", 1 + static_cast<int>(rng() % 5)},
                     {"release", 0},
                     {"due", e.now() + 600},
                     {"strategy", rng() % 2 ? "Force" : "X-Competition"},
                     {"operations", json::array({{{"id", id + ".1"}, {"sequence", 1}, {"process", "p0"}, {"duration", 30 + rng() % 90}}})}}}});
        break;
      }
      case 2:
        e.command({{"type", "disturbance"},
                   {"disturbance", {{"kind", "machine-down"}, {"machine", "M" + std::to_string(1 + rng() % 2)}, {"until", e.now() + 120}}}});
        break;
      case 3:
        for (const auto& a : e.approvals()) {
          if (a.state == sim::ApprovalState::pending) {
            e.command({{"type", "resolve-approval"}, {"id", a.id}, {"decision", rng() % 2 ? "approve" : "reject"}});
            break;
          }
        }
        break;
      default:
        break;
    }
    if (e.now() >= e.model().config.horizon) e.run();
  }
}

void determinism() {
  int replay_bad = 0, snapshot_bad = 0, commands = 0;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const Scenario s = random_scenario(seed, 3 + static_cast<int>(seed % 4), 10 + static_cast<int>(seed % 20), seed % 3 != 0);
    Engine live(s);
    drive(live, seed);
    const auto log = Engine::commands_in(live.trace());
    commands += static_cast<int>(log.size());

    Engine a(s), b(s);
    a.schedule_commands(log);
    b.schedule_commands(log);
    a.run();
    b.run();
    if (a.trace_ndjson() != b.trace_ndjson() || a.trace_ndjson() != live.trace_ndjson() || a.state_hash() != live.state_hash()) {
      ++replay_bad;
    }

    // Interrupt the replay part way, carry the snapshot through text.
    Engine first(s);
    first.schedule_commands(log);
    const int cut = 5 + static_cast<int>(seed * 13 % 60);
    for (int i = 0; i < cut && first.step(); ++i) {}
    Engine second = Engine::restore(json::parse(first.snapshot().dump()));
    second.run();
    if (second.trace_ndjson() != live.trace_ndjson() || second.state_hash() != live.state_hash()) ++snapshot_bad;
  }
  verdict(replay_bad == 0 && snapshot_bad == 0, "determinism",
          "60 scenarios with " + std::to_string(commands) + " logged commands; replay mismatches " + std::to_string(replay_bad) +
              ", snapshot mismatches " + std::to_string(snapshot_bad));
}

// ---- disturbance compensation ----

std::string fixture(const std::string& name) {
  std::ifstream in(std::string(MAS_FIXTURES) + "/" + name, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void compensation() {
  int runs = 0, bad = 0, downs = 0, damages = 0;
  std::string first;
  for (std::uint64_t seed = 1; runs < 200; ++seed) {
    Scenario s = random_scenario(seed, 3 + static_cast<int>(seed % 5), 10 + static_cast<int>(seed % 25), true);
    // Guarantee both kinds in every script.
    Disturbance down;
    down.kind = Disturbance::Kind::machine_down;
    down.at = 100 + static_cast<Minutes>(seed % 600);
    down.machine = s.shop.machines.begin()->first;
    if (seed % 2) down.until = down.at + 300;
    s.disturbances.push_back(down);
    if (!s.shop.stock.count("T1")) continue;
    Disturbance dmg;
    dmg.kind = Disturbance::Kind::tool_damage;
    dmg.at = 50 + static_cast<Minutes>(seed % 900);
    dmg.item = "T1";
    s.disturbances.push_back(dmg);
    s.disturbances.push_back(dmg);
    std::stable_sort(s.disturbances.begin(), s.disturbances.end(), [](const Disturbance& a, const Disturbance& b) { return a.at < b.at; });
    ++runs;
    Engine e(s);
    Watch w;
    w.attach(e, true);
    e.run();
    for (const auto& ev : e.trace()) {
      downs += ev.kind == "machine-down";
      damages += ev.kind == "tool-damage";
    }
    if (!w.first.empty()) {
      ++bad;
      if (first.empty()) first = "seed " + std::to_string(seed) + ": " + w.first;
    }
  }

  Engine esc(parse_scenario(fixture("escalation.json")));
  Watch ew;
  ew.attach(esc, true);
  esc.run();
  int escalations = 0;
  std::string hop;
  for (const auto& ev : esc.trace()) {
    if (ev.kind != "escalation") continue;
    ++escalations;
    hop = ev.payload.at("from").get<std::string>() + " -> " + ev.payload.at("to").get<std::string>();
  }
  const bool fixture_ok = escalations == 1 && ew.first.empty() && esc.model().order("J1").state == OrderState::done;

  verdict(bad == 0 && fixture_ok, "disturbance compensation",
          std::to_string(runs) + " scripted runs (" + std::to_string(downs) + " machine-down, " + std::to_string(damages) +
              " tool-damage), " + std::to_string(bad) + " with dead-resource slots or violations");
  note("escalation fixture: " + std::to_string(escalations) + " escalation" + (hop.empty() ? "" : " (" + hop + ")") +
       ", validator " + (ew.first.empty() ? "clean" : ew.first));
  if (!first.empty()) note("first: " + first);
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<void()>> all{{"feasibility", feasibility},   {"oracle", oracle},
                                                          {"improvement", improvement},   {"strategy", strategy_table},
                                                          {"determinism", determinism},   {"compensation", compensation}};
  const std::vector<std::string> order{"feasibility", "oracle", "improvement", "strategy", "determinism", "compensation"};
  for (const std::string& name : order) {
    if (argc > 1 && std::find(argv + 1, argv + argc, name) == argv + argc) continue;
    all.at(name)();
  }
  std::printf("%s\n", failures == 0 ? "all criteria pass" : (std::to_string(failures) + " criteria fail").c_str());
  return failures == 0 ? 0 : 1;
}
