#include "mas/scenario.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "mas/agents/org.hpp"

namespace mas {

namespace {

std::string join_issues(const std::vector<Issue>& issues) {
  std::string out = std::to_string(issues.size()) + " issue(s)";
  if (!issues.empty()) out += "; first at " + issues.front().path + ": " + issues.front().message;
  return out;
}

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

}  // namespace

ScenarioError::ScenarioError(std::vector<Issue> issues)
    : Error(Code::validation, join_issues(issues)), issues_(std::move(issues)) {}

const char* to_string(Disturbance::Kind k) {
  switch (k) {
    case Disturbance::Kind::machine_down: return "machine-down";
    case Disturbance::Kind::machine_up: return "machine-up";
    case Disturbance::Kind::tool_damage: return "tool-damage";
    case Disturbance::Kind::rush_order: return "rush-order";
    case Disturbance::Kind::back_order: return "back-order";
  }
  return "?";
}

Disturbance::Kind disturbance_kind_from(const std::string& s) {
  for (auto k : {Disturbance::Kind::machine_down, Disturbance::Kind::machine_up, Disturbance::Kind::tool_damage,
                 Disturbance::Kind::rush_order, Disturbance::Kind::back_order}) {
    if (s == to_string(k)) return k;
  }
  throw Error(Error::Code::parse, "unknown disturbance kind '" + s + "'");
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace codec {

// ---- writing ----

namespace {

json intervals(const std::vector<Interval>& v) {
  json a = json::array();
  for (const Interval& i : v) a.push_back({i.start, i.end});
  return a;
}

json nullable(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }
json nullable(const std::optional<Minutes>& s) { return s ? json(*s) : json(nullptr); }

}  // namespace

json to_json(const Config& c) {
  return {{"seed", c.seed},
          {"horizon", c.horizon},
          {"apt_alpha", c.apt_alpha},
          {"apt_initial", c.apt_initial},
          {"weights",
           {{"machine", c.weights.machine},
            {"robustness", c.weights.robustness},
            {"position", c.weights.position},
            {"setup", c.weights.setup},
            {"timeslot", c.weights.timeslot}}},
          {"overdraft_limit", c.overdraft_limit},
          {"long_split_threshold", c.long_split_threshold},
          {"long_split_min_part", c.long_split_min_part},
          {"escalation_interval", c.escalation_interval},
          {"quiet_period", c.quiet_period},
          {"optimizer",
           {{"enabled", c.optimizer.enabled},
            {"strategy", to_string(c.optimizer.strategy)},
            {"level1_passes", c.optimizer.level1_passes},
            {"level3_passes", c.optimizer.level3_passes},
            {"level4_passes", c.optimizer.level4_passes},
            {"auto_accept", c.optimizer.auto_accept}}}};
}

json to_json(const Machine& m, bool runtime) {
  json graded = json::object();
  for (const auto& [k, v] : m.capability.graded) graded[k] = v;
  json j = {{"id", m.id},
            {"area", m.area},
            {"processes", m.capability.processes},
            {"binary", m.capability.binary},
            {"graded", graded},
            {"mounted_family", nullable(m.mounted_family)},
            {"calendar", intervals(m.calendar.weekly)},
            {"apt", m.apt}};
  if (runtime) {
    j["apt_observed"] = m.apt_observed;
    j["outages"] = intervals(m.outages);
  }
  return j;
}

json to_json(const Area& a) { return {{"id", a.id}, {"parent", nullable(a.parent)}, {"level", a.level}}; }

json to_json(const Operation& op) {
  json graded = json::object();
  for (const auto& [k, v] : op.requirement.graded) graded[k] = v;
  json res = json::array();
  for (const ResourceNeed& n : op.resources) res.push_back({{"kind", to_string(n.kind)}, {"item", n.item}});
  json j = {{"id", op.id},
            {"sequence", op.sequence},
            {"process", op.process},
            {"alternatives", op.alternatives},
            {"requirement", {{"graded", graded}, {"binary", op.requirement.binary}}},
            {"duration", op.duration},
            {"robustness", op.robustness},
            {"setup_family", op.setup_family},
            {"lots", op.lots},
            {"resources", res}};
  if (op.split_of) j["split_of"] = *op.split_of;
  return j;
}

json to_json(const DispatchOptions& o) {
  return {{"robustness", o.robustness},
          {"overdraft", o.overdraft},
          {"overdraft_approved", o.overdraft_approved},
          {"shift_split", to_string(o.shift_split)},
          {"split_lots", o.split_lots},
          {"long_split", o.long_split},
          {"x", o.x},
          {"wait_deadline", nullable(o.wait_deadline)}};
}

json to_json(const Order& o, bool runtime) {
  json j = {{"id", o.id},
            {"priority", o.priority},
            {"arrival", o.arrival},
            {"release", o.release},
            {"due", o.due},
            {"strategy", to_string(o.strategy)},
            {"options", to_json(o.options)},
            {"area", o.area},
            {"after", nullable(o.after)},
            {"restricted_areas", o.restricted_areas}};
  if (runtime) {
    j["state"] = to_string(o.state);
    j["operations"] = o.operations;
  }
  return j;
}

json to_json(const OrderSpec& o) {
  json j = to_json(o.order, false);
  json ops = json::array();
  for (const Operation& op : o.operations) ops.push_back(to_json(op));
  j["operations"] = ops;
  return j;
}

json to_json(const Disturbance& d) {
  json j = {{"at", d.at}, {"kind", to_string(d.kind)}};
  switch (d.kind) {
    case Disturbance::Kind::machine_down:
      j["machine"] = d.machine;
      j["until"] = nullable(d.until);
      break;
    case Disturbance::Kind::machine_up: j["machine"] = d.machine; break;
    case Disturbance::Kind::tool_damage: j["item"] = d.item; break;
    case Disturbance::Kind::rush_order:
      j["order"] = d.rush ? to_json(*d.rush) : json(nullptr);
      break;
    case Disturbance::Kind::back_order:
      j["order"] = d.order;
      j["extend_by"] = d.extend_by;
      break;
  }
  return j;
}

json to_json(const Slot& s) {
  return {{"op", s.op},       {"part", s.part},   {"split", s.split},   {"machine", s.machine},
          {"start", s.start}, {"end", s.end},     {"frozen", s.frozen}, {"overdraft", s.overdraft}};
}

json to_json(const Plan& p) {
  json slots = json::array(), res = json::array(), tr = json::array();
  for (const auto& [key, s] : p.slots()) slots.push_back(to_json(s));
  for (const Reservation& r : p.reservations()) {
    res.push_back({{"op", r.op}, {"part", r.part}, {"kind", to_string(r.kind)}, {"item", r.item},
                   {"start", r.when.start}, {"end", r.when.end}});
  }
  for (const TransportBooking& t : p.transports()) {
    tr.push_back({{"from_op", t.from_op}, {"to_op", t.to_op}, {"from_machine", t.from_machine},
                  {"to_machine", t.to_machine}, {"area", t.area}, {"start", t.when.start}, {"end", t.when.end}});
  }
  return {{"slots", slots}, {"reservations", res}, {"transports", tr}};
}

namespace {

json logistics_json(const LogisticsParams& l) {
  return {{"area", l.area}, {"capacity", l.capacity}, {"transit_same_area", l.transit_same_area},
          {"transit_cross_area", l.transit_cross_area}};
}

json overrides_json(const std::vector<TransitOverride>& v) {
  json a = json::array();
  for (const auto& t : v) a.push_back({{"from", t.from}, {"to", t.to}, {"transit", t.transit}});
  return a;
}

}  // namespace

json model_to_json(const ShopModel& m) {
  json machines = json::array(), areas = json::array(), orders = json::array(), ops = json::array(),
       logistics = json::array(), stock = json::array();
  for (const auto& [id, x] : m.machines) machines.push_back(to_json(x, true));
  for (const auto& [id, a] : m.areas) areas.push_back(to_json(a));
  for (const auto& [id, o] : m.orders) orders.push_back(to_json(o, true));
  for (const auto& [id, op] : m.operations) {
    json j = to_json(op);
    j["order"] = op.order;
    ops.push_back(j);
  }
  for (const auto& [id, l] : m.logistics) logistics.push_back(logistics_json(l));
  for (const auto& [id, s] : m.stock) {
    stock.push_back({{"item", s.item}, {"kind", to_string(s.kind)}, {"initial", s.initial}, {"current", s.current},
                     {"consumed", s.consumed}});
  }
  return {{"config", to_json(m.config)}, {"machines", machines},     {"areas", areas},
          {"orders", orders},            {"operations", ops},        {"logistics", logistics},
          {"stock", stock},              {"transit_overrides", overrides_json(m.transit_overrides)}};
}

// ---- reading ----

Reader::Reader(const json* j, std::string path, std::vector<Issue>* issues)
    : j_(j), path_(std::move(path)), issues_(issues) {
  if (j_ && !j_->is_object()) {
    issues_->push_back({path_.empty() ? "/" : path_, "expected an object"});
    j_ = nullptr;
  }
}

std::string Reader::path(const std::string& key) const { return path_ + "/" + escape_pointer(key); }

void Reader::issue(const std::string& key, const std::string& message) {
  issues_->push_back({key.empty() ? path_ : path(key), message});
}

bool Reader::has(const std::string& key) const { return j_ && j_->contains(key); }

const json* Reader::find(const std::string& key, bool required) {
  seen_.insert(key);
  if (!j_) return nullptr;
  auto it = j_->find(key);
  if (it == j_->end()) {
    if (required) issue(key, "missing required field");
    return nullptr;
  }
  return &*it;
}

const json* Reader::raw(const std::string& key) { return find(key, false); }

Minutes Reader::integer(const std::string& key, std::optional<Minutes> fallback) {
  const json* v = find(key, !fallback);
  if (!v) return fallback.value_or(0);
  if (!v->is_number_integer()) {
    issue(key, "expected an integer");
    return fallback.value_or(0);
  }
  return v->get<Minutes>();
}

double Reader::number(const std::string& key, std::optional<double> fallback) {
  const json* v = find(key, !fallback);
  if (!v) return fallback.value_or(0.0);
  if (!v->is_number()) {
    issue(key, "expected a number");
    return fallback.value_or(0.0);
  }
  return v->get<double>();
}

bool Reader::boolean(const std::string& key, std::optional<bool> fallback) {
  const json* v = find(key, !fallback);
  if (!v) return fallback.value_or(false);
  if (!v->is_boolean()) {
    issue(key, "expected true or false");
    return fallback.value_or(false);
  }
  return v->get<bool>();
}

std::string Reader::string(const std::string& key, std::optional<std::string> fallback) {
  const json* v = find(key, !fallback);
  if (!v) return fallback.value_or("");
  if (!v->is_string()) {
    issue(key, "expected a string");
    return fallback.value_or("");
  }
  return v->get<std::string>();
}

std::optional<std::string> Reader::nullable_string(const std::string& key) {
  const json* v = find(key, false);
  if (!v || v->is_null()) return std::nullopt;
  if (!v->is_string()) {
    issue(key, "expected a string or null");
    return std::nullopt;
  }
  return v->get<std::string>();
}

std::optional<Minutes> Reader::nullable_integer(const std::string& key) {
  const json* v = find(key, false);
  if (!v || v->is_null()) return std::nullopt;
  if (!v->is_number_integer()) {
    issue(key, "expected an integer or null");
    return std::nullopt;
  }
  return v->get<Minutes>();
}

std::vector<const json*> Reader::array(const std::string& key, bool required) {
  std::vector<const json*> out;
  const json* v = find(key, required);
  if (!v) return out;
  if (!v->is_array()) {
    issue(key, "expected an array");
    return out;
  }
  for (const json& e : *v) out.push_back(&e);
  return out;
}

std::vector<std::string> Reader::strings(const std::string& key, bool required) {
  std::vector<std::string> out;
  const auto items = array(key, required);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i]->is_string()) {
      issues_->push_back({path(key) + "/" + std::to_string(i), "expected a string"});
      continue;
    }
    out.push_back(items[i]->get<std::string>());
  }
  return out;
}

Reader Reader::object(const std::string& key, bool required) {
  const json* v = find(key, required);
  return Reader(v, path(key), issues_);
}

std::map<std::string, double> Reader::numbers(const std::string& key) {
  std::map<std::string, double> out;
  const json* v = find(key, false);
  if (!v) return out;
  if (!v->is_object()) {
    issue(key, "expected an object");
    return out;
  }
  for (const auto& [k, x] : v->items()) {
    if (!x.is_number()) {
      issues_->push_back({path(key) + "/" + escape_pointer(k), "expected a number"});
      continue;
    }
    out[k] = x.get<double>();
  }
  return out;
}

void Reader::finish() {
  if (!j_) return;
  for (const auto& [key, v] : j_->items()) {
    if (!seen_.count(key)) issue(key, "unknown field");
  }
}

namespace {

template <class F>
auto enum_field(Reader& r, const std::string& key, const std::string& fallback, F parse) {
  const std::string s = r.string(key, fallback);
  try {
    return parse(s);
  } catch (const Error& e) {
    r.issue(key, e.what());
    return parse(fallback);
  }
}

std::vector<Interval> read_intervals(Reader& r, const std::string& key, std::vector<Issue>* issues,
                                     std::optional<std::vector<Interval>> fallback) {
  if (!r.has(key) && fallback) {
    r.raw(key);
    return *fallback;
  }
  std::vector<Interval> out;
  const auto items = r.array(key, !fallback);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const json& e = *items[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      issues->push_back({r.path(key) + "/" + std::to_string(i), "expected [start, end] integers"});
      continue;
    }
    out.push_back({e[0].get<Minutes>(), e[1].get<Minutes>()});
  }
  return out;
}

ResourceNeed need_from(Reader r) {
  ResourceNeed n;
  n.kind = enum_field(r, "kind", "tool", resource_kind_from);
  n.item = r.string("item");
  r.finish();
  return n;
}

}  // namespace

Config config_from(Reader r) {
  Config c;
  c.seed = static_cast<std::uint64_t>(r.integer("seed", 1));
  c.horizon = r.integer("horizon", c.horizon);
  c.apt_alpha = r.number("apt_alpha", c.apt_alpha);
  c.apt_initial = r.integer("apt_initial", c.apt_initial);
  {
    Reader w = r.object("weights");
    c.weights.machine = w.number("machine", 1.0);
    c.weights.robustness = w.number("robustness", 1.0);
    c.weights.position = w.number("position", 1.0);
    c.weights.setup = w.number("setup", 1.0);
    c.weights.timeslot = w.number("timeslot", 1.0);
    w.finish();
  }
  c.overdraft_limit = r.integer("overdraft_limit", c.overdraft_limit);
  c.long_split_threshold = r.integer("long_split_threshold", c.long_split_threshold);
  c.long_split_min_part = r.integer("long_split_min_part", c.long_split_min_part);
  c.escalation_interval = r.integer("escalation_interval", c.escalation_interval);
  c.quiet_period = r.integer("quiet_period", c.quiet_period);
  {
    Reader o = r.object("optimizer");
    c.optimizer.enabled = o.boolean("enabled", true);
    c.optimizer.strategy = enum_field(o, "strategy", "Force", strategy_from);
    c.optimizer.level1_passes = static_cast<int>(o.integer("level1_passes", 1));
    c.optimizer.level3_passes = static_cast<int>(o.integer("level3_passes", 5));
    c.optimizer.level4_passes = static_cast<int>(o.integer("level4_passes", 5));
    c.optimizer.auto_accept = o.boolean("auto_accept", true);
    o.finish();
  }
  if (c.horizon <= 0) r.issue("horizon", "must be positive");
  if (c.apt_alpha <= 0 || c.apt_alpha > 1) r.issue("apt_alpha", "must lie in (0, 1]");
  if (c.quiet_period < 0) r.issue("quiet_period", "must not be negative");
  r.finish();
  return c;
}

Machine machine_from(Reader r, bool runtime) {
  Machine m;
  m.id = r.string("id");
  m.area = r.string("area", "");
  for (auto& p : r.strings("processes", true)) m.capability.processes.insert(p);
  for (auto& b : r.strings("binary")) m.capability.binary.insert(b);
  m.capability.graded = r.numbers("graded");
  m.mounted_family = r.nullable_string("mounted_family");
  std::vector<Issue> cal_issues;
  m.calendar.weekly = read_intervals(r, "calendar", &cal_issues, ShiftCalendar::always().weekly);
  for (auto& i : cal_issues) r.issue("calendar", i.message);
  try {
    m.calendar.check();
  } catch (const Error& e) {
    r.issue("calendar", e.what());
  }
  m.apt = r.integer("apt", -1);
  if (runtime) {
    m.apt_observed = r.boolean("apt_observed", false);
    std::vector<Issue> out_issues;
    m.outages = read_intervals(r, "outages", &out_issues, std::vector<Interval>{});
    for (auto& i : out_issues) r.issue("outages", i.message);
  }
  r.finish();
  return m;
}

Area area_from(Reader r) {
  Area a;
  a.id = r.string("id");
  a.parent = r.nullable_string("parent");
  a.level = static_cast<int>(r.integer("level", a.parent ? 2 : 1));
  r.finish();
  return a;
}

Operation operation_from(Reader r) {
  Operation op;
  op.id = r.string("id");
  op.sequence = static_cast<int>(r.integer("sequence"));
  op.process = r.string("process");
  op.alternatives = r.strings("alternatives");
  {
    Reader req = r.object("requirement");
    op.requirement.graded = req.numbers("graded");
    for (auto& b : req.strings("binary")) op.requirement.binary.insert(b);
    req.finish();
  }
  op.duration = r.integer("duration");
  if (op.duration <= 0) r.issue("duration", "must be positive");
  op.robustness = r.integer("robustness", 0);
  if (op.robustness < 0) r.issue("robustness", "must not be negative");
  op.setup_family = r.string("setup_family", op.process);
  op.lots = static_cast<int>(r.integer("lots", 1));
  if (op.lots < 1) r.issue("lots", "must be at least 1");
  const auto needs = r.array("resources");
  for (std::size_t i = 0; i < needs.size(); ++i) {
    op.resources.push_back(need_from(r.nested(needs[i], r.path("resources") + "/" + std::to_string(i))));
  }
  op.split_of = r.nullable_string("split_of");
  if (r.has("order")) op.order = r.string("order");
  r.finish();
  return op;
}

DispatchOptions options_from(Reader r) {
  DispatchOptions o;
  o.robustness = r.boolean("robustness", true);
  o.overdraft = r.boolean("overdraft", false);
  o.overdraft_approved = r.boolean("overdraft_approved", false);
  o.shift_split = enum_field(r, "shift_split", "none", shift_split_from);
  o.split_lots = static_cast<int>(r.integer("split_lots", 1));
  o.long_split = r.boolean("long_split", false);
  o.x = static_cast<int>(r.integer("x", 1));
  if (o.x < 1 || o.x > 5) r.issue("x", "must lie within 1..5");
  o.wait_deadline = r.nullable_integer("wait_deadline");
  r.finish();
  return o;
}

namespace {

Order order_header(Reader& r, bool runtime, const ParseOptions& opts) {
  Order o;
  o.id = r.string("id");
  o.priority = static_cast<int>(r.integer("priority", 3));
  if (o.priority < 1 || o.priority > 5) r.issue("priority", "must lie within 1..5");
  o.arrival = r.integer("arrival", 0);
  o.release = r.integer("release", o.arrival);
  o.due = r.integer("due");
  if (r.has("due") && o.due <= o.release) r.issue("due", "must follow release");
  o.strategy = enum_field(r, "strategy", to_string(opts.default_strategy), strategy_from);
  o.options = options_from(r.object("options"));
  o.area = r.string("area", "");
  o.after = r.nullable_string("after");
  o.restricted_areas = r.strings("restricted_areas");
  if (runtime) o.state = enum_field(r, "state", "pending", order_state_from);
  return o;
}

}  // namespace

Order order_from(Reader r, bool runtime, const ParseOptions& opts) {
  Order o = order_header(r, runtime, opts);
  if (runtime) o.operations = r.strings("operations");
  r.finish();
  return o;
}

OrderSpec order_spec_from(Reader r, const ParseOptions& opts) {
  OrderSpec spec;
  spec.order = order_header(r, false, opts);
  const auto ops = r.array("operations", true);
  if (r.has("operations") && ops.empty()) r.issue("operations", "an order needs at least one operation");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    Operation op = operation_from(r.nested(ops[i], r.path("operations") + "/" + std::to_string(i)));
    op.order = spec.order.id;
    spec.operations.push_back(std::move(op));
  }
  std::stable_sort(spec.operations.begin(), spec.operations.end(),
                   [](const Operation& a, const Operation& b) { return std::tie(a.sequence, a.id) < std::tie(b.sequence, b.id); });
  for (const Operation& op : spec.operations) spec.order.operations.push_back(op.id);
  r.finish();
  return spec;
}

Disturbance disturbance_from(Reader r, const ParseOptions& opts) {
  Disturbance d;
  d.at = r.integer("at");
  if (d.at < 0) r.issue("at", "must not be negative");
  d.kind = enum_field(r, "kind", "machine-down", disturbance_kind_from);
  switch (d.kind) {
    case Disturbance::Kind::machine_down:
      d.machine = r.string("machine");
      d.until = r.nullable_integer("until");
      if (d.until && *d.until <= d.at) r.issue("until", "repair must follow the breakdown");
      break;
    case Disturbance::Kind::machine_up: d.machine = r.string("machine"); break;
    case Disturbance::Kind::tool_damage: d.item = r.string("item"); break;
    case Disturbance::Kind::rush_order: {
      const json* o = r.raw("order");
      if (!o) r.issue("order", "missing required field");
      else d.rush = order_spec_from(r.nested(o, r.path("order")), opts);
      break;
    }
    case Disturbance::Kind::back_order:
      d.order = r.string("order");
      d.extend_by = r.integer("extend_by");
      if (d.extend_by <= 0) r.issue("extend_by", "must be positive");
      break;
  }
  r.finish();
  return d;
}

Plan plan_from(const json& j) {
  Plan p;
  for (const json& s : j.at("slots")) {
    Slot x;
    x.op = s.at("op");
    x.part = s.at("part");
    x.split = s.at("split");
    x.machine = s.at("machine");
    x.start = s.at("start");
    x.end = s.at("end");
    x.frozen = s.at("frozen");
    x.overdraft = s.at("overdraft");
    p.put(x);
  }
  for (const json& r : j.at("reservations")) {
    p.add_reservation({r.at("op"), r.at("part"), resource_kind_from(r.at("kind")), r.at("item"),
                       {r.at("start"), r.at("end")}});
  }
  for (const json& t : j.at("transports")) {
    p.add_transport({t.at("from_op"), t.at("to_op"), t.at("from_machine"), t.at("to_machine"), t.at("area"),
                     {t.at("start"), t.at("end")}});
  }
  return p;
}

ShopModel model_from_json(const json& j) {
  std::vector<Issue> issues;
  ShopModel m;
  Reader root(&j, "", &issues);
  m.config = config_from(root.object("config", true));
  for (const json* e : root.array("machines")) {
    Machine x = machine_from(Reader(e, "/machines", &issues), true);
    m.machines[x.id] = x;
  }
  for (const json* e : root.array("areas")) {
    Area a = area_from(Reader(e, "/areas", &issues));
    m.areas[a.id] = a;
  }
  for (const json* e : root.array("orders")) {
    Order o = order_from(Reader(e, "/orders", &issues), true, {});
    m.orders[o.id] = o;
  }
  for (const json* e : root.array("operations")) {
    Operation op = operation_from(Reader(e, "/operations", &issues));
    m.operations[op.id] = op;
  }
  for (const json* e : root.array("logistics")) {
    LogisticsParams l{e->at("area"), e->at("capacity"), e->at("transit_same_area"), e->at("transit_cross_area")};
    m.logistics[l.area] = l;
  }
  for (const json* e : root.array("transit_overrides")) {
    m.transit_overrides.push_back({e->at("from"), e->at("to"), e->at("transit")});
  }
  for (const json* e : root.array("stock")) {
    StockEntry s{resource_kind_from(e->at("kind")), e->at("item"), e->at("initial"), e->at("current"),
                 e->at("consumed").get<std::vector<Minutes>>()};
    m.stock[s.item] = s;
  }
  root.finish();
  if (!issues.empty()) throw ScenarioError(issues);
  return m;
}

}  // namespace codec

// ---- scenarios ----

namespace {

using codec::json;
using codec::Reader;

struct Paths {
  std::map<std::string, std::string> machine, area, order, op, stock, disturbance;
};

void reference_issues(const Scenario& s, const Paths& paths, std::vector<Issue>& issues) {
  const ShopModel& shop = s.shop;
  auto at = [](const std::map<std::string, std::string>& m, const std::string& id, const std::string& field) {
    auto it = m.find(id);
    return (it == m.end() ? std::string("/") : it->second) + (field.empty() ? "" : "/" + field);
  };
  for (const std::string& e : agents::check_org(shop)) {
    // check_org speaks in ids; point at the entity it names first.
    std::string where = "/areas";
    for (const auto& [id, m] : shop.machines) {
      if (e.find("machine '" + id + "'") != std::string::npos) where = at(paths.machine, id, "area");
    }
    for (const auto& [id, a] : shop.areas) {
      if (e.rfind("area '" + id + "'", 0) == 0) where = at(paths.area, id, "parent");
    }
    issues.push_back({where, e});
  }
  for (const auto& [id, l] : shop.logistics) {
    if (!shop.areas.count(id)) {
      bool used = std::any_of(shop.machines.begin(), shop.machines.end(),
                              [&](const auto& kv) { return kv.second.area == id; });
      if (!used) issues.push_back({"/logistics", "logistics for unknown area '" + id + "'"});
    }
  }
  for (std::size_t i = 0; i < shop.transit_overrides.size(); ++i) {
    const auto& t = shop.transit_overrides[i];
    for (const auto* end : {&t.from, &t.to}) {
      if (!shop.machines.count(*end)) {
        issues.push_back({"/transit_overrides/" + std::to_string(i), "unknown machine '" + *end + "'"});
      }
    }
  }
  std::set<std::string> order_ids;
  for (const OrderSpec& o : s.orders) order_ids.insert(o.order.id);
  for (const Disturbance& d : s.disturbances) {
    if (d.rush) order_ids.insert(d.rush->order.id);
  }
  auto check_order = [&](const OrderSpec& spec, const std::string& base) {
    const Order& o = spec.order;
    if (!o.area.empty() && !shop.areas.count(o.area)) {
      issues.push_back({base + "/area", "order '" + o.id + "' references unknown area '" + o.area + "'"});
    }
    for (std::size_t i = 0; i < o.restricted_areas.size(); ++i) {
      if (!shop.areas.count(o.restricted_areas[i])) {
        issues.push_back({base + "/restricted_areas/" + std::to_string(i), "unknown area '" + o.restricted_areas[i] + "'"});
      }
    }
    if (o.after && !order_ids.count(*o.after)) {
      issues.push_back({base + "/after", "unknown order '" + *o.after + "'"});
    }
    for (std::size_t i = 0; i < spec.operations.size(); ++i) {
      const Operation& op = spec.operations[i];
      for (std::size_t k = 0; k < op.resources.size(); ++k) {
        if (!shop.stock.count(op.resources[k].item)) {
          issues.push_back({at(paths.op, op.id, "resources/" + std::to_string(k) + "/item"),
                            "unknown stock item '" + op.resources[k].item + "'"});
        }
      }
    }
  };
  for (const OrderSpec& o : s.orders) check_order(o, at(paths.order, o.order.id, ""));
  for (std::size_t i = 0; i < s.disturbances.size(); ++i) {
    const Disturbance& d = s.disturbances[i];
    const std::string base = "/disturbances/" + std::to_string(i);
    using K = Disturbance::Kind;
    if ((d.kind == K::machine_down || d.kind == K::machine_up) && !shop.machines.count(d.machine)) {
      issues.push_back({base + "/machine", "unknown machine '" + d.machine + "'"});
    }
    if (d.kind == K::tool_damage && !shop.stock.count(d.item)) {
      issues.push_back({base + "/item", "unknown stock item '" + d.item + "'"});
    }
    if (d.kind == K::back_order && !order_ids.count(d.order)) {
      issues.push_back({base + "/order", "unknown order '" + d.order + "'"});
    }
    if (d.kind == K::rush_order && d.rush) check_order(*d.rush, base + "/order");
  }
}

Scenario read_scenario(const json& j, const ParseOptions& opts, std::vector<Issue>& issues, Paths& paths) {
  Scenario s;
  Reader root(&j, "", &issues);
  const std::string format = root.string("format");
  if (root.has("format") && format != kScenarioFormat) root.issue("format", "expected '" + std::string(kScenarioFormat) + "'");
  const Minutes version = root.integer("version");
  if (root.has("version") && version != kScenarioVersion) {
    root.issue("version", "unsupported version " + std::to_string(version) + ", expected " + std::to_string(kScenarioVersion));
  }
  s.shop.config = codec::config_from(root.object("config"));

  auto indexed = [](const std::string& key, std::size_t i) { return "/" + key + "/" + std::to_string(i); };
  const auto areas = root.array("areas");
  for (std::size_t i = 0; i < areas.size(); ++i) {
    Area a = codec::area_from(Reader(areas[i], indexed("areas", i), &issues));
    if (s.shop.areas.count(a.id)) issues.push_back({indexed("areas", i) + "/id", "duplicate area '" + a.id + "'"});
    paths.area[a.id] = indexed("areas", i);
    s.shop.areas[a.id] = a;
  }
  const auto machines = root.array("machines", true);
  for (std::size_t i = 0; i < machines.size(); ++i) {
    Reader r(machines[i], indexed("machines", i), &issues);
    const bool has_apt = r.has("apt");
    Machine m = codec::machine_from(r, false);
    if (!has_apt) m.apt = s.shop.config.apt_initial;
    if (s.shop.machines.count(m.id)) issues.push_back({indexed("machines", i) + "/id", "duplicate machine '" + m.id + "'"});
    paths.machine[m.id] = indexed("machines", i);
    s.shop.machines[m.id] = m;
  }
  const auto logistics = root.array("logistics");
  for (std::size_t i = 0; i < logistics.size(); ++i) {
    Reader r(logistics[i], indexed("logistics", i), &issues);
    LogisticsParams l;
    l.area = r.string("area");
    l.capacity = static_cast<int>(r.integer("capacity", 1));
    if (l.capacity < 1) r.issue("capacity", "must be at least 1");
    l.transit_same_area = r.integer("transit_same_area", 0);
    l.transit_cross_area = r.integer("transit_cross_area", 0);
    r.finish();
    s.shop.logistics[l.area] = l;
  }
  const auto overrides = root.array("transit_overrides");
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    Reader r(overrides[i], indexed("transit_overrides", i), &issues);
    TransitOverride t{r.string("from"), r.string("to"), r.integer("transit")};
    r.finish();
    s.shop.transit_overrides.push_back(t);
  }
  const auto stock = root.array("stock");
  for (std::size_t i = 0; i < stock.size(); ++i) {
    Reader r(stock[i], indexed("stock", i), &issues);
    StockEntry e;
    e.item = r.string("item");
    e.kind = codec::enum_field(r, "kind", "tool", resource_kind_from);
    e.initial = e.current = static_cast<int>(r.integer("quantity"));
    if (e.initial < 0) r.issue("quantity", "must not be negative");
    r.finish();
    if (s.shop.stock.count(e.item)) issues.push_back({indexed("stock", i) + "/item", "duplicate stock item '" + e.item + "'"});
    paths.stock[e.item] = indexed("stock", i);
    s.shop.stock[e.item] = e;
  }
  std::set<std::string> op_ids;
  auto note_ops = [&](const OrderSpec& spec, const std::string& base, const json& raw) {
    const json* ops = raw.is_object() && raw.contains("operations") ? &raw.at("operations") : nullptr;
    for (std::size_t k = 0; k < spec.operations.size(); ++k) {
      const Operation& op = spec.operations[k];
      // Operations were sorted; find the original index for the path.
      std::string where = base + "/operations";
      if (ops && ops->is_array()) {
        for (std::size_t q = 0; q < ops->size(); ++q) {
          if ((*ops)[q].is_object() && (*ops)[q].value("id", "") == op.id) where += "/" + std::to_string(q);
        }
      }
      if (!op_ids.insert(op.id).second) issues.push_back({where + "/id", "duplicate operation '" + op.id + "'"});
      paths.op[op.id] = where;
    }
  };
  std::set<std::string> seen_orders;
  const auto orders = root.array("orders");
  for (std::size_t i = 0; i < orders.size(); ++i) {
    OrderSpec spec = codec::order_spec_from(Reader(orders[i], indexed("orders", i), &issues), opts);
    if (!seen_orders.insert(spec.order.id).second) {
      issues.push_back({indexed("orders", i) + "/id", "duplicate order '" + spec.order.id + "'"});
    }
    paths.order[spec.order.id] = indexed("orders", i);
    note_ops(spec, indexed("orders", i), *orders[i]);
    s.orders.push_back(std::move(spec));
  }
  const auto dist = root.array("disturbances");
  for (std::size_t i = 0; i < dist.size(); ++i) {
    Disturbance d = codec::disturbance_from(Reader(dist[i], indexed("disturbances", i), &issues), opts);
    if (d.rush) {
      const std::string base = indexed("disturbances", i) + "/order";
      if (!seen_orders.insert(d.rush->order.id).second) {
        issues.push_back({base + "/id", "duplicate order '" + d.rush->order.id + "'"});
      }
      note_ops(*d.rush, base, dist[i]->is_object() && dist[i]->contains("order") ? dist[i]->at("order") : json());
    }
    s.disturbances.push_back(std::move(d));
  }
  std::stable_sort(s.disturbances.begin(), s.disturbances.end(),
                   [](const Disturbance& a, const Disturbance& b) { return a.at < b.at; });
  root.finish();
  return s;
}

}  // namespace

std::vector<Issue> lint_scenario(const std::string& text, const ParseOptions& opts) {
  std::vector<Issue> issues;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Byte offset to line/column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    issues.push_back({"line " + std::to_string(line) + ", column " + std::to_string(col), e.what()});
    return issues;
  }
  Paths paths;
  Scenario s = read_scenario(j, opts, issues, paths);
  reference_issues(s, paths, issues);
  return issues;
}

Scenario parse_scenario(const std::string& text, const ParseOptions& opts) {
  std::vector<Issue> issues;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw ScenarioError(lint_scenario(text, opts));
  }
  Paths paths;
  Scenario s = read_scenario(j, opts, issues, paths);
  reference_issues(s, paths, issues);
  if (!issues.empty()) throw ScenarioError(issues);
  return s;
}

Scenario load_scenario(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Error::Code::io, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), opts);
}

std::string serialize_scenario(const Scenario& s) {
  json areas = json::array(), machines = json::array(), logistics = json::array(), stock = json::array(),
       orders = json::array(), dist = json::array();
  for (const auto& [id, a] : s.shop.areas) areas.push_back(codec::to_json(a));
  for (const auto& [id, m] : s.shop.machines) machines.push_back(codec::to_json(m, false));
  for (const auto& [id, l] : s.shop.logistics) logistics.push_back(codec::logistics_json(l));
  for (const auto& [id, e] : s.shop.stock) {
    stock.push_back({{"item", e.item}, {"kind", to_string(e.kind)}, {"quantity", e.initial}});
  }
  for (const OrderSpec& o : s.orders) orders.push_back(codec::to_json(o));
  for (const Disturbance& d : s.disturbances) dist.push_back(codec::to_json(d));
  json j = {{"format", kScenarioFormat},
            {"version", kScenarioVersion},
            {"config", codec::to_json(s.shop.config)},
            {"areas", areas},
            {"machines", machines},
            {"logistics", logistics},
            {"transit_overrides", codec::overrides_json(s.shop.transit_overrides)},
            {"stock", stock},
            {"orders", orders},
            {"disturbances", dist}};
  return j.dump(2) + "\n";
}

std::vector<Issue> check_scenario(const Scenario& s) {
  std::vector<Issue> issues;
  Paths paths;
  std::size_t i = 0;
  for (const auto& [id, m] : s.shop.machines) paths.machine[id] = "/machines/" + std::to_string(i++);
  i = 0;
  for (const auto& [id, a] : s.shop.areas) paths.area[id] = "/areas/" + std::to_string(i++);
  for (std::size_t k = 0; k < s.orders.size(); ++k) {
    paths.order[s.orders[k].order.id] = "/orders/" + std::to_string(k);
    for (std::size_t q = 0; q < s.orders[k].operations.size(); ++q) {
      paths.op[s.orders[k].operations[q].id] = "/orders/" + std::to_string(k) + "/operations/" + std::to_string(q);
    }
  }
  reference_issues(s, paths, issues);
  return issues;
}

}  // namespace mas
