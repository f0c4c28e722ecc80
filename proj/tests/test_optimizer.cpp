#include <doctest.h>

#include "mas/optimizer.hpp"
#include "oracles.hpp"

using namespace mas;
using namespace mas::optimizer;
using namespace mas::test;

namespace {

LevelContext ctx_for(const ShopModel& model, std::vector<LevelStep>* steps) {
  return LevelContext{model, 0, Strategy::force, steps};
}

}  // namespace

TEST_CASE("single machine plan without idle time is left alone") {
  ShopModel model = shop_with(1);
  add_order(model, "A", {{"milling", 60}});
  add_order(model, "B", {{"milling", 90}});
  Plan plan = naive_plan(model);
  REQUIRE(makespan(plan) == 150);
  auto run = optimize(model, plan, 0, 7, OptimizerConfig{});
  CHECK(run.improvement() == 0.0);
  CHECK(run.candidate == plan);
  CHECK(run.before == 150);
  CHECK(run.after == 150);
}

TEST_CASE("empty plan") {
  ShopModel model = shop_with(2);
  auto run = optimize(model, Plan{}, 0, 1, OptimizerConfig{});
  CHECK(run.before == 0);
  CHECK(run.improvement() == 0.0);
}

TEST_CASE("machines ranked by largest internal gap") {
  Plan plan;
  plan.put(slot("a", "M2", 0, 100));
  plan.put(slot("b", "M2", 120, 200));  // gap 20
  plan.put(slot("c", "M1", 0, 100));
  plan.put(slot("d", "M1", 400, 500));  // gap 300
  plan.put(slot("e", "M3", 0, 10));     // single slot: not ranked
  CHECK(machines_by_largest_gap(plan) == std::vector<std::string>{"M1", "M2"});
}

TEST_CASE("level 2 fills an early gap on another machine") {
  ShopModel model = shop_with(2);
  model.machines["M1"].capability.processes = {"milling"};
  model.machines["M2"].capability.processes = {"drilling"};
  add_order(model, "A", {{"milling", 60}});
  add_order(model, "B", {{"milling", 60}});
  add_order(model, "D", {{"drilling", 60}});
  Plan plan;
  plan.put(slot("A.1", "M1", 0, 60));
  plan.put(slot("B.1", "M1", 300, 360));
  plan.put(slot("D.1", "M2", 360, 420));
  REQUIRE(validate_plan(plan, model).ok());
  std::vector<LevelStep> steps;
  Plan out = level2_basic_shuffle(ctx_for(model, &steps), plan);
  // M1 stays as it was, D.1 moves to the front of M2.
  CHECK(makespan(out) == 360);
  CHECK(out.slots_of("D.1").front().start == 0);
  CHECK(out.slots_of("B.1").front().start == 300);
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].note == "freeze M1");
  CHECK(steps[0].kept);
  CHECK(validate_plan(out, model).ok());
}

TEST_CASE("single machine level 2 pass is a no-op") {
  ShopModel model = shop_with(1);
  add_order(model, "A", {{"milling", 60}});
  add_order(model, "B", {{"milling", 60}});
  Plan plan;
  plan.put(slot("A.1", "M1", 0, 60));
  plan.put(slot("B.1", "M1", 100, 160));
  std::vector<LevelStep> steps;
  CHECK(level2_basic_shuffle(ctx_for(model, &steps), plan) == plan);
  CHECK_FALSE(steps.at(0).kept);
}

TEST_CASE("level 1 swaps a long early operation behind a short one") {
  ShopModel model = shop_with(2);
  model.machines["M1"].capability.processes = {"milling"};
  model.machines["M2"].capability.processes = {"drilling"};
  add_order(model, "A", {{"milling", 200}});
  add_order(model, "B", {{"milling", 50}, {"drilling", 200}});
  Plan plan;
  plan.put(slot("A.1", "M1", 0, 200));
  plan.put(slot("B.1", "M1", 200, 250));
  plan.put(slot("B.2", "M2", 250, 450));
  REQUIRE(validate_plan(plan, model).ok());
  std::vector<LevelStep> steps;
  Plan out = level1_repair_swaps(ctx_for(model, &steps), plan);
  CHECK(out.slots_of("B.1").front().start == 0);
  CHECK(out.slots_of("A.1").front().start == 50);
  CHECK(out.slots_of("B.2").front().start == 50);
  CHECK(makespan(out) == 250);
  CHECK(makespan(out) == brute_force_makespan(model));
  CHECK(validate_plan(out, model).ok());
}

TEST_CASE("level 1 keeps the plan when no swap helps") {
  ShopModel model = shop_with(1);
  add_order(model, "A", {{"milling", 60}});
  add_order(model, "B", {{"milling", 60}});
  Plan plan = naive_plan(model);
  std::vector<LevelStep> steps;
  CHECK(level1_repair_swaps(ctx_for(model, &steps), plan) == plan);
}

TEST_CASE("level 1 never swaps operations of one order") {
  ShopModel model = shop_with(1);
  add_order(model, "A", {{"milling", 200}, {"milling", 10}});
  Plan plan = naive_plan(model);
  std::vector<LevelStep> steps;
  Plan out = level1_repair_swaps(ctx_for(model, &steps), plan);
  CHECK(out == plan);
}

TEST_CASE("level 3 freezes only orders entirely inside the window") {
  ShopModel model = shop_with(2);
  add_order(model, "X", {{"milling", 50}, {"milling", 50}, {"milling", 50}});
  add_order(model, "Y", {{"milling", 50}, {"milling", 50}});
  Plan plan;
  plan.put(slot("X.1", "M1", 100, 150));
  plan.put(slot("X.2", "M1", 150, 200));
  plan.put(slot("X.3", "M1", 200, 250));
  plan.put(slot("Y.1", "M2", 100, 150));
  plan.put(slot("Y.2", "M2", 400, 450));
  CHECK(complete_orders_inside(model, plan, {100, 300}) == std::set<std::string>{"X.1", "X.2", "X.3"});
  CHECK(complete_orders_inside(model, plan, {120, 300}).empty());
}

TEST_CASE("level 3 window is reproducible and sized 10 to 40 percent") {
  Plan plan;
  plan.put(slot("a", "M1", 0, 600));
  plan.put(slot("b", "M2", 200, 1000));
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    std::mt19937_64 r1(seed), r2(seed);
    const Interval w1 = random_window(plan, r1);
    CHECK(w1 == random_window(plan, r2));
    CHECK(w1.length() >= 100);
    CHECK(w1.length() <= 400);
    CHECK(w1.start >= 0);
    CHECK(w1.end <= 1000);
  }
}

TEST_CASE("level 4 freezes the two idlest machines off the critical path") {
  ShopModel model = shop_with(4);
  add_order(model, "A", {{"milling", 500}});
  add_order(model, "B", {{"milling", 100}});
  add_order(model, "C", {{"milling", 50}});
  add_order(model, "D", {{"milling", 200}});
  Plan plan;
  plan.put(slot("A.1", "M1", 0, 500));
  plan.put(slot("B.1", "M2", 0, 100));
  plan.put(slot("C.1", "M3", 0, 50));
  plan.put(slot("D.1", "M4", 0, 200));
  CHECK(critical_machines(model, plan) == std::set<std::string>{"M1"});
  std::vector<LevelStep> steps;
  level4_horizontal_shuffle(ctx_for(model, &steps), plan, 1);
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].note == "freeze M3, M2");
}

TEST_CASE("level 4 needs three machines") {
  ShopModel model = shop_with(2);
  add_order(model, "A", {{"milling", 60}});
  Plan plan = naive_plan(model);
  std::vector<LevelStep> steps;
  CHECK(level4_horizontal_shuffle(ctx_for(model, &steps), plan) == plan);
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].note.rfind("skipped", 0) == 0);
}

TEST_CASE("level 4 re-dispatch off the critical machine shortens the plan") {
  ShopModel model = shop_with(4);
  add_order(model, "A", {{"milling", 100}});
  add_order(model, "B", {{"milling", 100}});
  Plan plan;
  plan.put(slot("A.1", "M1", 0, 100));
  plan.put(slot("B.1", "M1", 100, 200));
  CHECK(critical_machines(model, plan) == std::set<std::string>{"M1"});
  std::vector<LevelStep> steps;
  Plan out = level4_horizontal_shuffle(ctx_for(model, &steps), plan, 1);
  CHECK(makespan(out) == 100);
  CHECK(validate_plan(out, model).ok());
}

TEST_CASE("critical path follows chain predecessors across machines") {
  ShopModel model = shop_with(3);
  add_order(model, "A", {{"milling", 100}, {"milling", 100}});
  add_order(model, "B", {{"milling", 20}});
  Plan plan;
  plan.put(slot("A.1", "M1", 0, 100));
  plan.put(slot("A.2", "M2", 100, 200));
  plan.put(slot("B.1", "M3", 0, 20));
  CHECK(critical_machines(model, plan) == std::set<std::string>{"M1", "M2"});
}

TEST_CASE("accept, deny and restore") {
  ShopModel model = shop_with(2);
  add_order(model, "A", {{"milling", 100}});
  add_order(model, "B", {{"milling", 100}});
  Plan live;
  live.put(slot("A.1", "M1", 0, 100));
  live.put(slot("B.1", "M1", 100, 200));
  const Plan snapshot = live;
  std::uint64_t version = 3;

  auto run = optimize(model, live, 0, 1, OptimizerConfig{});
  run.plan_version = version;
  REQUIRE(run.after < run.before);
  CHECK(run.improvement() == doctest::Approx(0.5));

  SUBCASE("deny leaves the live plan untouched") {
    deny_run(run);
    CHECK(run.status == RunStatus::denied);
    CHECK(live == snapshot);
    CHECK_THROWS_AS(accept_run(run, live, version), Error);
  }
  SUBCASE("accept then restore gives back the snapshot") {
    accept_run(run, live, version);
    CHECK(live == run.candidate);
    CHECK(version == 4);
    restore_run(run, live, version);
    CHECK(live == snapshot);
    CHECK(run.status == RunStatus::restored);
  }
  SUBCASE("restore is refused once the plan moved on") {
    accept_run(run, live, version);
    ++version;  // a dispatch happened
    CHECK_THROWS_AS(restore_run(run, live, version), Error);
    CHECK(live == run.candidate);
  }
  SUBCASE("accept is refused on a stale run") {
    ++version;
    CHECK_THROWS_AS(accept_run(run, live, version), Error);
    CHECK(live == snapshot);
  }
}

TEST_CASE("summary carries the level log") {
  ShopModel model = shop_with(3);
  add_order(model, "A", {{"milling", 100}});
  add_order(model, "B", {{"milling", 100}});
  Plan plan;
  plan.put(slot("A.1", "M1", 0, 100));
  plan.put(slot("B.1", "M1", 100, 200));
  auto run = optimize(model, plan, 0, 9, OptimizerConfig{});
  run.id = "R1";
  auto j = run.summary();
  CHECK(j["id"] == "R1");
  CHECK(j["seed"] == 9);
  CHECK(j["makespan_before"] == 200);
  CHECK(j["levels"].size() == run.steps.size());
  CHECK_FALSE(run.steps.empty());
}

TEST_CASE("started operations stay where they are") {
  ShopModel model = shop_with(2);
  add_order(model, "A", {{"milling", 100}});
  add_order(model, "B", {{"milling", 100}});
  Plan plan;
  plan.put(slot("A.1", "M1", 0, 100));
  plan.put(slot("B.1", "M1", 100, 200));
  CHECK(implicitly_frozen(plan, 50) == std::set<std::string>{"A.1"});
  auto out = reschedule(model, plan, {}, 50, Strategy::force);
  REQUIRE(out);
  CHECK(out->slots_of("A.1").front().start == 0);
  CHECK(out->slots_of("B.1").front().start == 50);
}

TEST_CASE("property: candidates are valid, never worse and reproducible") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    CAPTURE(seed);
    ShopModel model = random_instance(seed, 3 + static_cast<int>(seed % 3), 10);
    Plan base = naive_plan(model);
    REQUIRE(validate_plan(base, model).ok());
    auto run = optimize(model, base, 0, seed, OptimizerConfig{});
    CHECK(run.after <= run.before);
    CHECK(validate_plan(run.candidate, model).ok());
    CHECK(run.candidate.slots().size() == base.slots().size());
    auto again = optimize(model, base, 0, seed, OptimizerConfig{});
    CHECK(again.candidate == run.candidate);
    CHECK(again.steps == run.steps);
  }
}

TEST_CASE("property: frozen slots survive a reschedule verbatim") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    CAPTURE(seed);
    ShopModel model = random_instance(seed, 3, 9);
    Plan base = naive_plan(model);
    std::mt19937_64 rng(seed);
    std::set<std::string> frozen;
    for (const auto& [key, s] : base.slots()) {
      if (rng() % 3 == 0) frozen.insert(s.op);
    }
    auto out = reschedule(model, base, frozen, 0, Strategy::force);
    if (!out) continue;
    for (const std::string& op : frozen) {
      const auto a = base.slots_of(op);
      const auto b = out->slots_of(op);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].machine == b[i].machine);
        CHECK(a[i].start == b[i].start);
        CHECK(a[i].end == b[i].end);
      }
    }
  }
}

TEST_CASE("property: never better than the brute-force optimum") {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    CAPTURE(seed);
    ShopModel model = random_instance(seed, 1 + static_cast<int>(seed % 3), 2 + static_cast<int>(seed % 6));
    Plan base = naive_plan(model);
    auto run = optimize(model, base, 0, seed, OptimizerConfig{});
    CHECK(run.after >= brute_force_makespan(model));
  }
}
