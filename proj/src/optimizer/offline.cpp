#include "mas/offline.hpp"

#include <algorithm>

#include "mas/agents/org.hpp"

namespace mas {

OfflineResult plan_offline(const Scenario& scenario, std::uint64_t seed) {
  OfflineResult r;
  r.model = scenario.shop;
  r.model.orders.clear();
  r.model.operations.clear();
  std::vector<const OrderSpec*> specs;
  for (const OrderSpec& o : scenario.orders) specs.push_back(&o);
  std::stable_sort(specs.begin(), specs.end(), [](const OrderSpec* a, const OrderSpec* b) {
    return std::tie(a->order.arrival, a->order.id) < std::tie(b->order.arrival, b->order.id);
  });
  dispatch::Context ctx{r.model, r.base, 0, [&](const Order& o) { return agents::org_scope(r.model, o); }, nullptr, {}};
  for (const OrderSpec* spec : specs) {
    if (!agents::mma_create_job(r.model, spec->order, spec->operations)) {
      r.unplaced.push_back(spec->order.id);
      continue;
    }
    if (!spec->order.area.empty()) r.model.order(spec->order.id).area = spec->order.area;
    const std::string& id = spec->order.id;
    const auto res = agents::dispatch_escalating(r.model, id, [&] {
      try {
        return dispatch::dispatch_order(ctx, id);
      } catch (const Error& e) {
        dispatch::DispatchOutcome out;
        out.failure_reason = e.what();
        return out;
      }
    });
    if (res.outcome.status != dispatch::OutcomeStatus::placed) r.unplaced.push_back(id);
    else r.model.order(id).state = OrderState::dispatched;
  }
  r.run = optimizer::optimize(r.model, r.base, 0, seed, r.model.config.optimizer);
  r.run.id = "offline";
  return r;
}

nlohmann::json offline_report(const OfflineResult& r) {
  nlohmann::json j = r.run.summary();
  j["base"] = codec::to_json(r.base);
  j["candidate"] = codec::to_json(r.run.candidate);
  j["unplaced"] = r.unplaced;
  j["candidate_valid"] = validate_plan(r.run.candidate, r.model).ok();
  return j;
}

}  // namespace mas
