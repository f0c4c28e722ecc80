#include "masched.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include "mas/engine.hpp"
#include "mas/offline.hpp"
#include "mas/service.hpp"

using nlohmann::json;

struct mas_engine {
  std::optional<mas::sim::Engine> engine;
  std::unique_ptr<mas::service::Service> service;
};

namespace {

thread_local std::string g_last_error;

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

mas_status status_of(mas::Error::Code c) {
  using C = mas::Error::Code;
  switch (c) {
    case C::invalid_argument: return MAS_ERR_INVALID_ARGUMENT;
    case C::not_found: return MAS_ERR_NOT_FOUND;
    case C::conflict: return MAS_ERR_CONFLICT;
    case C::parse: return MAS_ERR_PARSE;
    case C::validation: return MAS_ERR_VALIDATION;
    case C::io: return MAS_ERR_IO;
    case C::runtime: return MAS_ERR_RUNTIME;
  }
  return MAS_ERR_RUNTIME;
}

mas_status status_of(const std::string& code) {
  if (code == "invalid_argument") return MAS_ERR_INVALID_ARGUMENT;
  if (code == "not_found") return MAS_ERR_NOT_FOUND;
  if (code == "conflict" || code == "already_resolved") return MAS_ERR_CONFLICT;
  if (code == "validation") return MAS_ERR_VALIDATION;
  return MAS_ERR_RUNTIME;
}

mas_status fail(mas_status s, std::string message) {
  g_last_error = std::move(message);
  return s;
}

template <class F>
mas_status guarded(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const mas::ScenarioError& e) {
    std::string msg = e.what();
    for (const auto& i : e.issues()) msg += "\n" + i.path + ": " + i.message;
    return fail(MAS_ERR_VALIDATION, msg);
  } catch (const mas::Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(MAS_ERR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MAS_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(MAS_ERR_RUNTIME, e.what());
  }
}

struct Options {
  std::optional<std::uint64_t> seed;
  std::optional<mas::Minutes> horizon;
  mas::ParseOptions parse;
};

Options options_of(const char* text) {
  Options o;
  if (!text || !*text) return o;
  const json j = json::parse(text);
  if (!j.is_object()) throw mas::Error(mas::Error::Code::invalid_argument, "options must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k == "seed") {
      o.seed = v.get<std::uint64_t>();
    } else if (k == "horizon") {
      o.horizon = v.get<mas::Minutes>();
      if (*o.horizon <= 0) throw mas::Error(mas::Error::Code::invalid_argument, "horizon must be positive");
    } else if (k == "default_strategy") {
      o.parse.default_strategy = mas::strategy_from(v.get<std::string>());
    } else {
      throw mas::Error(mas::Error::Code::invalid_argument, "unknown option '" + k + "'");
    }
  }
  return o;
}

mas::Scenario scenario_of(const std::string& text, const Options& o) {
  mas::Scenario s = mas::parse_scenario(text, o.parse);
  if (o.horizon) s.shop.config.horizon = *o.horizon;
  return s;
}

std::string read_file(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mas::Error(mas::Error::Code::io, std::string("cannot read '") + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs `f` on the engine, through the mailbox while serving.
template <class F>
void with(mas_engine* e, F&& f) {
  if (e->service) {
    e->service->call([&](mas::sim::Engine& en) {
      f(en);
      return json();
    });
  } else {
    f(*e->engine);
  }
}

bool bad(const void* p) { return p == nullptr; }

}  // namespace

extern "C" {

const char* mas_version(void) { return "1.0.0"; }

const char* mas_status_name(mas_status s) {
  switch (s) {
    case MAS_OK: return "ok";
    case MAS_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MAS_ERR_NOT_FOUND: return "not_found";
    case MAS_ERR_CONFLICT: return "conflict";
    case MAS_ERR_PARSE: return "parse";
    case MAS_ERR_VALIDATION: return "validation";
    case MAS_ERR_IO: return "io";
    case MAS_ERR_RUNTIME: return "runtime";
  }
  return "unknown";
}

const char* mas_last_error(void) { return g_last_error.c_str(); }

void mas_string_free(char* s) { std::free(s); }

mas_status mas_validate(const char* text, const char* options, char** issues_json) {
  if (bad(text) || bad(issues_json)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const Options o = options_of(options);
    const auto issues = mas::lint_scenario(text, o.parse);
    json a = json::array();
    for (const auto& i : issues) a.push_back({{"path", i.path}, {"message", i.message}});
    *issues_json = dup(a.dump());
    if (issues.empty()) return MAS_OK;
    return fail(MAS_ERR_VALIDATION, std::to_string(issues.size()) + " issue(s) in scenario");
  });
}

mas_status mas_engine_open(const char* text, const char* options, mas_engine** out) {
  if (bad(text) || bad(out)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const Options o = options_of(options);
    auto e = std::make_unique<mas_engine>();
    e->engine.emplace(scenario_of(text, o), o.seed);
    *out = e.release();
    return MAS_OK;
  });
}

mas_status mas_engine_open_file(const char* path, const char* options, mas_engine** out) {
  if (bad(path) || bad(out)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  std::string text;
  const mas_status s = guarded([&] {
    text = read_file(path);
    return MAS_OK;
  });
  if (s != MAS_OK) return s;
  return mas_engine_open(text.c_str(), options, out);
}

mas_status mas_engine_restore(const char* snapshot, mas_engine** out) {
  if (bad(snapshot) || bad(out)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    auto e = std::make_unique<mas_engine>();
    e->engine.emplace(mas::sim::Engine::restore(json::parse(snapshot)));
    *out = e.release();
    return MAS_OK;
  });
}

void mas_engine_free(mas_engine* e) { delete e; }

mas_status mas_engine_step(mas_engine* e, int* advanced) {
  if (bad(e)) return fail(MAS_ERR_INVALID_ARGUMENT, "null engine");
  return guarded([&] {
    bool moved = false;
    with(e, [&](mas::sim::Engine& en) { moved = en.step(); });
    if (advanced) *advanced = moved ? 1 : 0;
    return MAS_OK;
  });
}

mas_status mas_engine_run(mas_engine* e) {
  if (bad(e)) return fail(MAS_ERR_INVALID_ARGUMENT, "null engine");
  return guarded([&] {
    with(e, [](mas::sim::Engine& en) { en.run(); });
    return MAS_OK;
  });
}

mas_status mas_engine_run_until(mas_engine* e, int64_t t) {
  if (bad(e)) return fail(MAS_ERR_INVALID_ARGUMENT, "null engine");
  return guarded([&] {
    bool backwards = false;
    with(e, [&](mas::sim::Engine& en) {
      backwards = t < en.now();
      if (!backwards) en.run_until(t);
    });
    return backwards ? fail(MAS_ERR_CONFLICT, "the clock does not run backwards") : MAS_OK;
  });
}

mas_status mas_engine_command(mas_engine* e, const char* command, char** result_json) {
  if (bad(e) || bad(command)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const json cmd = json::parse(command);
    mas::sim::CommandResult r;
    with(e, [&](mas::sim::Engine& en) { r = en.command(cmd); });
    if (result_json) *result_json = dup(r.to_json().dump());
    return r.ok ? MAS_OK : fail(status_of(r.code), r.message);
  });
}

mas_status mas_engine_replay(mas_engine* e, const char* trace) {
  if (bad(e) || bad(trace)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::vector<mas::sim::EventRecord> records;
    std::istringstream in(trace);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      records.push_back({j.at("seq"), j.at("time"), j.at("kind"), j.at("payload")});
    }
    with(e, [&](mas::sim::Engine& en) { en.schedule_commands(mas::sim::Engine::commands_in(records)); });
    return MAS_OK;
  });
}

mas_status mas_engine_query(mas_engine* e, const char* what, char** out) {
  if (bad(e) || bad(what) || bad(out)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const std::string w = what;
    json result;
    bool known = true;
    with(e, [&](mas::sim::Engine& en) {
      if (w == "plan") {
        result = mas::service::plan_view(en);
      } else if (w == "orders") {
        result = mas::service::orders_view(en);
      } else if (w == "runs") {
        result = mas::service::runs_view(en);
      } else if (w == "approvals") {
        result = json::array();
        for (const auto& a : en.approvals()) result.push_back(a.to_json());
      } else if (w == "metrics") {
        result = en.metrics().to_json();
      } else if (w == "state") {
        result = en.state_json();
        result["instants"] = en.instants();
        result["finished"] = en.finished();
        result["hash"] = en.state_hash();
      } else if (w == "messages") {
        result = en.messages().to_json();
      } else {
        known = false;
      }
    });
    if (!known) return fail(MAS_ERR_INVALID_ARGUMENT, "unknown query '" + w + "'");
    *out = dup(result.dump());
    return MAS_OK;
  });
}

mas_status mas_engine_events(mas_engine* e, uint64_t after, char** out) {
  if (bad(e) || bad(out)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::string text;
    with(e, [&](mas::sim::Engine& en) {
      for (const auto& ev : en.trace()) {
        if (ev.seq <= after) continue;
        text += ev.to_json().dump();
        text += '\n';
      }
    });
    *out = dup(text);
    return MAS_OK;
  });
}

mas_status mas_engine_snapshot(mas_engine* e, char** out) {
  if (bad(e) || bad(out)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::string text;
    with(e, [&](mas::sim::Engine& en) { text = en.snapshot().dump(); });
    *out = dup(text);
    return MAS_OK;
  });
}

mas_status mas_engine_hash(mas_engine* e, char** out) {
  if (bad(e) || bad(out)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::string h;
    with(e, [&](mas::sim::Engine& en) { h = en.state_hash(); });
    *out = dup(h);
    return MAS_OK;
  });
}

mas_status mas_engine_serve(mas_engine* e, const char* host, int port, int* bound_port) {
  if (bad(e) || bad(host)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  if (port < 0 || port > 65535) return fail(MAS_ERR_INVALID_ARGUMENT, "port out of range");
  return guarded([&] {
    if (!e->service) {
      e->service = std::make_unique<mas::service::Service>(std::move(*e->engine));
      e->engine.reset();
    }
    if (e->service->running()) return fail(MAS_ERR_CONFLICT, "already serving");
    const int p = e->service->start(host, port);
    if (bound_port) *bound_port = p;
    return MAS_OK;
  });
}

mas_status mas_engine_serve_stop(mas_engine* e) {
  if (bad(e)) return fail(MAS_ERR_INVALID_ARGUMENT, "null engine");
  return guarded([&] {
    if (e->service) e->service->stop();
    return MAS_OK;
  });
}

mas_status mas_optimize_offline(const char* text, const char* options, char** report_json) {
  if (bad(text) || bad(report_json)) return fail(MAS_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const Options o = options_of(options);
    const mas::Scenario s = scenario_of(text, o);
    const auto r = mas::plan_offline(s, o.seed.value_or(s.shop.config.seed));
    *report_json = dup(mas::offline_report(r).dump());
    return MAS_OK;
  });
}

}  // extern "C"
