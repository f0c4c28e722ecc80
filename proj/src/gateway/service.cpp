#include "mas/service.hpp"

#include <chrono>

#include <httplib.h>

namespace mas::service {

int http_status(const std::string& code) {
  if (code == "not_found") return 404;
  if (code == "conflict" || code == "already_resolved") return 409;
  if (code == "validation") return 422;
  if (code == "invalid_argument") return 400;
  return 500;
}

json error_body(const std::string& code, const std::string& message, json extra) {
  json e = {{"code", code}, {"message", message}};
  for (auto& [k, v] : extra.items()) e[k] = v;
  return {{"error", e}};
}

json plan_view(const sim::Engine& e) {
  json machines = json::object();
  for (const auto& [id, m] : e.model().machines) {
    json slots = json::array();
    for (const Slot& s : e.plan().on_machine(id)) {
      json j = codec::to_json(s);
      j["order"] = e.model().operation(s.op).order;
      slots.push_back(j);
    }
    json outages = json::array();
    for (const Interval& o : m.outages) outages.push_back({{"start", o.start}, {"end", o.end == kForever ? json(nullptr) : json(o.end)}});
    machines[id] = {{"area", m.area}, {"slots", slots}, {"outages", outages}};
  }
  json j = codec::to_json(e.plan());
  j.erase("slots");
  j["machines"] = machines;
  j["version"] = e.plan_version();
  j["makespan"] = makespan(e.plan());
  return j;
}

json orders_view(const sim::Engine& e) {
  json out = json::array();
  for (const auto& [id, o] : e.model().orders) {
    json j = codec::to_json(o, true);
    json ops = json::array();
    for (const std::string& op : o.operations) {
      json slots = json::array();
      for (const Slot& s : e.plan().slots_of(op)) slots.push_back({{"machine", s.machine}, {"start", s.start}, {"end", s.end}});
      ops.push_back({{"id", op}, {"process", e.model().operation(op).process}, {"slots", slots}});
    }
    j["operations"] = ops;
    out.push_back(j);
  }
  return out;
}

json runs_view(const sim::Engine& e) {
  json out = json::array();
  for (const auto& r : e.runs()) {
    json j = r.summary();
    j["plan_version"] = r.plan_version;
    j["accepted_version"] = r.accepted_version;
    out.push_back(j);
  }
  return out;
}

namespace {

json approvals_view(const sim::Engine& e) {
  json out = json::array();
  for (const auto& a : e.approvals()) out.push_back(a.to_json());
  return out;
}

json state_view(const sim::Engine& e) {
  return {{"now", e.now()},
          {"instants", e.instants()},
          {"finished", e.finished()},
          {"plan_version", e.plan_version()},
          {"events", e.trace().size()},
          {"hash", e.state_hash()}};
}

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_result(httplib::Response& res, const sim::CommandResult& r) {
  if (r.ok) {
    send(res, 200, r.to_json());
  } else {
    json extra = json::object();
    if (r.data.contains("issues")) extra["issues"] = r.data.at("issues");
    send(res, http_status(r.code), error_body(r.code, r.message, extra));
  }
}

std::optional<json> body_of(const httplib::Request& req, httplib::Response& res) {
  try {
    json j = req.body.empty() ? json::object() : json::parse(req.body);
    if (!j.is_object()) {
      send(res, 400, error_body("invalid_argument", "body must be a JSON object"));
      return std::nullopt;
    }
    return j;
  } catch (const json::parse_error& e) {
    send(res, 400, error_body("invalid_argument", std::string("malformed JSON body: ") + e.what()));
    return std::nullopt;
  }
}

}  // namespace

Service::Service(sim::Engine engine) : engine_(std::move(engine)) {
  publish();
  engine_thread_ = std::thread([this] { engine_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(mbox_mu_);
    closing_ = true;
  }
  mbox_cv_.notify_all();
  if (engine_thread_.joinable()) engine_thread_.join();
}

void Service::engine_loop() {
  for (;;) {
    Job job;
    {
      std::unique_lock lock(mbox_mu_);
      mbox_cv_.wait(lock, [&] { return closing_ || !jobs_.empty(); });
      if (jobs_.empty()) return;
      job = std::move(jobs_.front());
      jobs_.pop_front();
    }
    try {
      json out = job.fn(engine_);
      publish();
      job.done.set_value(std::move(out));
    } catch (...) {
      publish();
      job.done.set_exception(std::current_exception());
    }
  }
}

void Service::publish() {
  auto v = std::make_shared<View>();
  v->state = state_view(engine_);
  v->plan = plan_view(engine_);
  v->orders = orders_view(engine_);
  v->approvals = approvals_view(engine_);
  v->runs = runs_view(engine_);
  v->metrics = engine_.metrics().to_json();
  {
    std::lock_guard lock(view_mu_);
    view_ = std::move(v);
  }
  bool grew = false;
  {
    std::lock_guard lock(events_mu_);
    const auto& trace = engine_.trace();
    for (std::size_t i = events_.size(); i < trace.size(); ++i) {
      events_.push_back(trace[i].to_json());
      grew = true;
    }
  }
  if (grew) events_cv_.notify_all();
}

json Service::call(std::function<json(sim::Engine&)> job) {
  std::future<json> f;
  {
    std::lock_guard lock(mbox_mu_);
    if (closing_) throw Error(Error::Code::runtime, "service is shut down");
    Job j{std::move(job), {}};
    f = j.done.get_future();
    jobs_.push_back(std::move(j));
  }
  mbox_cv_.notify_one();
  return f.get();
}

sim::CommandResult Service::command(const json& cmd) {
  sim::CommandResult r;
  call([&](sim::Engine& e) {
    r = e.command(cmd);
    return json();
  });
  return r;
}

std::shared_ptr<const View> Service::view() const {
  std::lock_guard lock(view_mu_);
  return view_;
}

std::vector<json> Service::events_after(std::uint64_t after, std::size_t limit, int wait_ms) const {
  std::unique_lock lock(events_mu_);
  if (wait_ms > 0 && events_.size() <= after) {
    events_cv_.wait_for(lock, std::chrono::milliseconds(wait_ms), [&] { return events_.size() > after; });
  }
  std::vector<json> out;
  // Sequence numbers start at 1 and have no gaps, so seq n sits at index n-1.
  for (std::size_t i = static_cast<std::size_t>(after); i < events_.size() && out.size() < limit; ++i) {
    out.push_back(events_[i]);
  }
  return out;
}

bool Service::running() const { return server_ && server_->is_running(); }

int Service::start(const std::string& host, int port) {
  if (server_) throw Error(Error::Code::conflict, "service already started");
  server_ = std::make_unique<httplib::Server>();
  routes();
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound < 0) bound = 0;
  } else if (!server_->bind_to_port(host, port)) {
    bound = 0;
  }
  if (bound <= 0) {
    server_.reset();
    throw Error(Error::Code::io, "cannot bind " + host + ":" + std::to_string(port));
  }
  {
    std::lock_guard lock(stop_mu_);
    stopped_ = false;
  }
  http_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Service::stop() {
  if (server_) {
    server_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    server_.reset();
  }
  {
    std::lock_guard lock(stop_mu_);
    stopped_ = true;
  }
  stop_cv_.notify_all();
}

void Service::wait() {
  std::unique_lock lock(stop_mu_);
  stop_cv_.wait(lock, [&] { return stopped_; });
}

void Service::routes() {
  httplib::Server& s = *server_;
  using Req = httplib::Request;
  using Res = httplib::Response;

  s.set_exception_handler([](const Req&, Res& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send(res, 500, error_body("runtime", e.what()));
    } catch (...) {
      send(res, 500, error_body("runtime", "unknown failure"));
    }
  });
  s.set_error_handler([](const Req& req, Res& res) {
    if (res.status == 404 && res.body.empty()) send(res, 404, error_body("not_found", "no route for " + req.path));
  });

  // reads
  s.Get("/api/health", [](const Req&, Res& res) { send(res, 200, {{"ok", true}}); });
  s.Get("/api/state", [this](const Req&, Res& res) { send(res, 200, view()->state); });
  s.Get("/api/plan", [this](const Req&, Res& res) { send(res, 200, view()->plan); });
  s.Get("/api/orders", [this](const Req&, Res& res) { send(res, 200, view()->orders); });
  s.Get(R"(/api/orders/([^/]+))", [this](const Req& req, Res& res) {
    const auto v = view();
    for (const json& o : v->orders) {
      if (o.at("id") == req.matches[1].str()) return send(res, 200, o);
    }
    send(res, 404, error_body("not_found", "unknown order '" + req.matches[1].str() + "'"));
  });
  s.Get("/api/approvals", [this](const Req& req, Res& res) {
    const auto v = view();
    const std::string state = req.get_param_value("state");
    json out = json::array();
    for (const json& a : v->approvals) {
      if (state.empty() || a.at("state") == state) out.push_back(a);
    }
    send(res, 200, out);
  });
  s.Get("/api/runs", [this](const Req&, Res& res) { send(res, 200, view()->runs); });
  s.Get(R"(/api/runs/([^/]+))", [this](const Req& req, Res& res) {
    const auto v = view();
    for (const json& r : v->runs) {
      if (r.at("id") == req.matches[1].str()) return send(res, 200, r);
    }
    send(res, 404, error_body("not_found", "unknown optimization run '" + req.matches[1].str() + "'"));
  });
  s.Get("/api/metrics", [this](const Req&, Res& res) { send(res, 200, view()->metrics); });
  s.Get("/api/events", [this](const Req& req, Res& res) {
    std::uint64_t after = 0;
    std::size_t limit = 1000;
    int wait_ms = 0;
    try {
      if (req.has_param("after")) after = std::stoull(req.get_param_value("after"));
      if (req.has_param("limit")) limit = std::stoul(req.get_param_value("limit"));
      if (req.has_param("wait")) wait_ms = std::min(30000, std::stoi(req.get_param_value("wait")));
    } catch (const std::exception&) {
      return send(res, 400, error_body("invalid_argument", "after, limit and wait must be non-negative integers"));
    }
    const auto events = events_after(after, limit, wait_ms);
    const std::uint64_t last = events.empty() ? after : events.back().at("seq").get<std::uint64_t>();
    send(res, 200, {{"events", events}, {"last", last}});
  });
  s.Get("/api/snapshot", [this](const Req&, Res& res) {
    send(res, 200, call([](sim::Engine& e) { return e.snapshot(); }));
  });

  // writes
  auto post_command = [this](Res& res, const json& cmd) { send_result(res, command(cmd)); };
  s.Post("/api/orders", [post_command](const Req& req, Res& res) {
    auto b = body_of(req, res);
    if (b) post_command(res, {{"type", "submit-order"}, {"order", *b}});
  });
  s.Post(R"(/api/approvals/([^/]+))", [post_command](const Req& req, Res& res) {
    auto b = body_of(req, res);
    if (b) post_command(res, {{"type", "resolve-approval"}, {"id", req.matches[1].str()}, {"decision", b->value("decision", "")}});
  });
  s.Post("/api/manual-actions", [post_command](const Req& req, Res& res) {
    auto b = body_of(req, res);
    if (b) post_command(res, {{"type", "manual-action"}, {"action", *b}});
  });
  s.Post("/api/optimize", [post_command](const Req&, Res& res) { post_command(res, {{"type", "optimize-now"}}); });
  s.Post(R"(/api/runs/([^/]+))", [post_command](const Req& req, Res& res) {
    auto b = body_of(req, res);
    if (b) post_command(res, {{"type", "optimization"}, {"run", req.matches[1].str()}, {"decision", b->value("decision", "")}});
  });
  s.Post("/api/disturbances", [post_command](const Req& req, Res& res) {
    auto b = body_of(req, res);
    if (b) post_command(res, {{"type", "disturbance"}, {"disturbance", *b}});
  });
  s.Post("/api/commands", [post_command](const Req& req, Res& res) {
    auto b = body_of(req, res);
    if (b) post_command(res, *b);
  });
  s.Post("/api/clock", [this](const Req& req, Res& res) {
    auto b = body_of(req, res);
    if (!b) return;
    const bool until = b->contains("until") && b->at("until").is_number_integer();
    const bool steps = b->contains("steps") && b->at("steps").is_number_integer();
    const bool to_end = b->value("run", false);
    if (until + steps + to_end != 1) {
      return send(res, 400, error_body("invalid_argument", "give exactly one of until, steps or run"));
    }
    const json out = call([&](sim::Engine& e) {
      const std::size_t before = e.trace().size();
      if (until) {
        const Minutes t = b->at("until");
        if (t < e.now()) return json(nullptr);
        e.run_until(t);
      } else if (steps) {
        for (int i = 0; i < b->at("steps").get<int>() && e.step(); ++i) {}
      } else {
        e.run();
      }
      json ids = json::array();
      for (std::size_t i = before; i < e.trace().size(); ++i) ids.push_back(e.trace()[i].seq);
      return json{{"ok", true}, {"event_ids", ids}, {"state", state_view(e)}};
    });
    if (out.is_null()) return send(res, 409, error_body("conflict", "the clock does not run backwards"));
    send(res, 200, out);
  });
}

}  // namespace mas::service
