// masched: command line front end over the C library.
#include <csignal>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "masched.h"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit : int { ok = 0, usage = 1, invalid = 2, runtime = 3, mismatch = 4 };

volatile std::sig_atomic_t stop_requested = 0;
void on_signal(int) { stop_requested = 1; }

struct Failure {
  int code;
  std::string message;
};

int exit_for(mas_status s) {
  switch (s) {
    case MAS_ERR_PARSE:
    case MAS_ERR_VALIDATION:
      return invalid;
    case MAS_ERR_INVALID_ARGUMENT:
      return usage;
    default:
      return runtime;
  }
}

void check(mas_status s, const char* what) {
  if (s != MAS_OK) throw Failure{exit_for(s), std::string(what) + ": " + mas_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  mas_string_free(s);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{runtime, "cannot read " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{runtime, "cannot write " + path.string()};
  out << text;
}

struct Common {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> horizon;
  std::string strategy;

  std::string options() const {
    json o = json::object();
    if (seed) o["seed"] = *seed;
    if (horizon) o["horizon"] = *horizon;
    if (!strategy.empty()) o["default_strategy"] = strategy;
    return o.dump();
  }
};

class Engine {
 public:
  explicit Engine(const Common& c) { check(mas_engine_open_file(c.scenario.c_str(), c.options().c_str(), &e_), "open"); }
  ~Engine() { mas_engine_free(e_); }
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  mas_engine* get() { return e_; }
  json query(const char* what) {
    char* out = nullptr;
    check(mas_engine_query(e_, what, &out), what);
    return json::parse(take(out));
  }
  std::string trace() {
    char* out = nullptr;
    check(mas_engine_events(e_, 0, &out), "events");
    return take(out);
  }
  std::string hash() {
    char* out = nullptr;
    check(mas_engine_hash(e_, &out), "hash");
    return take(out);
  }

 private:
  mas_engine* e_ = nullptr;
};

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", v * 100.0);
  return buf;
}

void print_table(const json& m, std::ostream& os) {
  os << "makespan      " << m.at("makespan").get<long long>() << " min\n";
  os << "due-hit       " << percent(m.at("due_hit_rate")) << "\n";
  double sum = 0;
  for (const auto& [id, u] : m.at("utilization").items()) sum += u.get<double>();
  const auto n = m.at("utilization").size();
  os << "utilization   " << (n ? percent(sum / static_cast<double>(n)) : "-") << " mean\n";
  for (const auto& [id, u] : m.at("utilization").items()) os << "  " << id << std::string(id.size() < 12 ? 12 - id.size() : 1, ' ') << percent(u) << "\n";
  os << "improvement   " << (m.at("optimizations").get<int>() > 0 ? percent(m.at("improvement")) : "-") << " over "
     << m.at("optimizations").get<int>() << " accepted run(s)\n";
  if (m.contains("offline_improvement")) os << "offline       " << percent(m.at("offline_improvement")) << "\n";
  os << "orders        " << m.at("orders").get<int>();
  for (const auto& [state, count] : m.at("orders_by_state").items()) os << "  " << state << "=" << count.get<int>();
  os << "\n";
}

int cmd_validate(const Common& c) {
  const std::string text = slurp(c.scenario);
  char* issues = nullptr;
  const mas_status s = mas_validate(text.c_str(), c.options().c_str(), &issues);
  const std::string body = take(issues);
  if (s == MAS_OK) {
    std::cout << c.scenario << ": ok\n";
    return ok;
  }
  if (s != MAS_ERR_VALIDATION) check(s, "validate");
  const json list = json::parse(body);
  for (const auto& i : list) std::cout << i.at("path").get<std::string>() << ": " << i.at("message").get<std::string>() << "\n";
  std::cout << list.size() << " error(s)\n";
  return invalid;
}

int cmd_run(const Common& c, const std::string& out) {
  Engine e(c);
  check(mas_engine_run(e.get()), "run");
  const json metrics = e.query("metrics");
  const std::string hash = e.hash();
  if (out.empty()) {
    std::cout << metrics.dump(2) << "\n";
  } else {
    fs::create_directories(out);
    spill(fs::path(out) / "trace.ndjson", e.trace());
    spill(fs::path(out) / "metrics.json", metrics.dump(2) + "\n");
    spill(fs::path(out) / "plan.json", e.query("plan").dump(2) + "\n");
    spill(fs::path(out) / "state.hash", hash + "\n");
  }
  std::cerr << "state " << hash << "\n";
  return ok;
}

int cmd_replay(const Common& c, const std::string& trace_path, std::string expect) {
  const std::string recorded = slurp(trace_path);
  if (expect.empty()) {
    const fs::path sibling = fs::path(trace_path).parent_path() / "state.hash";
    if (fs::exists(sibling)) expect = slurp(sibling.string());
  }
  while (!expect.empty() && std::isspace(static_cast<unsigned char>(expect.back()))) expect.pop_back();

  Engine e(c);
  check(mas_engine_replay(e.get(), recorded.c_str()), "replay");
  check(mas_engine_run(e.get()), "run");
  const std::string produced = e.trace();
  const std::string hash = e.hash();
  int code = ok;
  if (produced != recorded) {
    std::size_t at = 0;
    while (at < produced.size() && at < recorded.size() && produced[at] == recorded[at]) ++at;
    const auto line = std::count(recorded.begin(), recorded.begin() + static_cast<std::ptrdiff_t>(at), '\n') + 1;
    std::cout << "trace differs at line " << line << "\n";
    code = mismatch;
  }
  if (!expect.empty() && expect != hash) {
    std::cout << "state " << hash << " != expected " << expect << "\n";
    code = mismatch;
  }
  if (code == ok) std::cout << "replay ok, state " << hash << "\n";
  return code;
}

int cmd_optimize(const Common& c, const std::string& out) {
  const std::string text = slurp(c.scenario);
  char* report = nullptr;
  check(mas_optimize_offline(text.c_str(), c.options().c_str(), &report), "optimize");
  const json r = json::parse(take(report));
  if (!out.empty()) {
    fs::create_directories(out);
    spill(fs::path(out) / "optimize.json", r.dump(2) + "\n");
  }
  std::cout << "makespan " << r.at("makespan_before").get<long long>() << " -> " << r.at("makespan_after").get<long long>() << " ("
            << percent(r.at("improvement")) << ")\n";
  for (const auto& s : r.at("levels")) {
    std::cout << "  level " << s.at("level").get<int>() << " pass " << s.at("pass").get<int>() << ": " << s.at("makespan").get<long long>()
              << (s.at("kept").get<bool>() ? " kept" : " dropped");
    if (!s.at("note").get<std::string>().empty()) std::cout << " (" << s.at("note").get<std::string>() << ")";
    std::cout << "\n";
  }
  if (!r.at("unplaced").empty()) std::cout << "unplaced: " << r.at("unplaced").dump() << "\n";
  if (!r.at("candidate_valid").get<bool>()) throw Failure{runtime, "candidate plan failed validation"};
  return ok;
}

int cmd_report(const Common& c, const std::string& metrics_path) {
  json m;
  if (!metrics_path.empty()) {
    m = json::parse(slurp(metrics_path));
  } else {
    Engine e(c);
    check(mas_engine_run(e.get()), "run");
    m = e.query("metrics");
    char* report = nullptr;
    const std::string text = slurp(c.scenario);
    check(mas_optimize_offline(text.c_str(), c.options().c_str(), &report), "optimize");
    m["offline_improvement"] = json::parse(take(report)).at("improvement");
  }
  print_table(m, std::cout);
  return ok;
}

int cmd_serve(const Common& c, const std::string& bind) {
  std::string host = "127.0.0.1";
  int port = 8080;
  if (!bind.empty()) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw Failure{usage, "--bind expects host:port"};
    host = bind.substr(0, colon);
    try {
      port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
      throw Failure{usage, "--bind expects host:port"};
    }
  }
  Engine e(c);
  int bound = 0;
  check(mas_engine_serve(e.get(), host.c_str(), port, &bound), "serve");
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  check(mas_engine_serve_stop(e.get()), "stop");
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent shop floor scheduler"};
  app.set_version_flag("--version", mas_version());
  app.require_subcommand(1);

  Common c;
  std::string out, trace, expect, bind, metrics;
  auto common = [&](CLI::App* sub, bool need_scenario) {
    auto* opt = sub->add_option("--scenario", c.scenario, "scenario file")->check(CLI::ExistingFile);
    if (need_scenario) opt->required();
    sub->add_option("--seed", c.seed, "override the scenario seed");
    sub->add_option("--horizon", c.horizon, "override the horizon in minutes")->check(CLI::PositiveNumber);
    sub->add_option("--strategy-defaults", c.strategy, "strategy for orders without one")
        ->check(CLI::IsMember({"OPT", "Force", "X-Competition", "Wait-X", "Manual"}));
  };

  auto* run = app.add_subcommand("run", "simulate a scenario, write trace and metrics");
  common(run, true);
  run->add_option("--out", out, "output directory");

  auto* validate = app.add_subcommand("validate", "lint a scenario file");
  common(validate, true);

  auto* optimize = app.add_subcommand("optimize", "dispatch every order once and improve the plan offline");
  common(optimize, true);
  optimize->add_option("--out", out, "output directory");

  auto* replay = app.add_subcommand("replay", "re-run a trace and verify the final state");
  common(replay, true);
  replay->add_option("--trace", trace, "trace.ndjson written by run")->required()->check(CLI::ExistingFile);
  replay->add_option("--hash", expect, "expected state hash (default: state.hash beside the trace)");

  auto* serve = app.add_subcommand("serve", "serve the engine over HTTP");
  common(serve, true);
  serve->add_option("--bind", bind, "host:port (port 0 picks one)");

  auto* report = app.add_subcommand("report", "print the metrics table");
  common(report, false);
  report->add_option("--metrics", metrics, "metrics.json from run")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return usage;
  }

  try {
    if (*run) return cmd_run(c, out);
    if (*validate) return cmd_validate(c);
    if (*optimize) return cmd_optimize(c, out);
    if (*replay) return cmd_replay(c, trace, expect);
    if (*serve) return cmd_serve(c, bind);
    if (*report) {
      if (c.scenario.empty() && metrics.empty()) throw Failure{usage, "report needs --scenario or --metrics"};
      return cmd_report(c, metrics);
    }
  } catch (const Failure& f) {
    std::cerr << "masched: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "masched: " << e.what() << "\n";
    return runtime;
  }
  return usage;
}
