#pragma once

// HTTP front of a running engine. The engine lives on its own thread and
// takes work from an ordered mailbox; HTTP handlers read from immutable
// views published after every mailbox job, so reads never touch the engine.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mas/engine.hpp"

namespace httplib {
class Server;
}

namespace mas::service {

using json = nlohmann::json;

/// Read model published by the engine thread.
struct View {
  json state;  // clock, version, hash, finished
  json plan;
  json orders;
  json approvals;
  json runs;
  json metrics;
};

/// HTTP status for a command rejection code.
int http_status(const std::string& code);
/// {"error": {"code", "message", ...}}
json error_body(const std::string& code, const std::string& message, json extra = json::object());

class Service {
 public:
  explicit Service(sim::Engine engine);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts serving in the background. Port 0 picks a free port;
  /// returns the bound port. Throws Error(io) when binding fails.
  int start(const std::string& host, int port);
  /// Stops HTTP and the engine thread. Idempotent.
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();
  bool running() const;

  /// Runs `job` on the engine thread, in mailbox order.
  json call(std::function<json(sim::Engine&)> job);
  /// A gateway command through the mailbox.
  sim::CommandResult command(const json& cmd);

  std::shared_ptr<const View> view() const;
  /// Events with sequence number > after, at most `limit`. With wait_ms > 0
  /// blocks up to that long for the first new event.
  std::vector<json> events_after(std::uint64_t after, std::size_t limit, int wait_ms = 0) const;

 private:
  struct Job {
    std::function<json(sim::Engine&)> fn;
    std::promise<json> done;
  };

  void engine_loop();
  void publish();
  void routes();

  sim::Engine engine_;
  std::thread engine_thread_;
  std::thread http_thread_;

  std::mutex mbox_mu_;
  std::condition_variable mbox_cv_;
  std::deque<Job> jobs_;
  bool closing_ = false;

  mutable std::mutex view_mu_;
  std::shared_ptr<const View> view_;

  mutable std::mutex events_mu_;
  mutable std::condition_variable events_cv_;
  std::vector<json> events_;  // append-only copy of the trace

  std::unique_ptr<httplib::Server> server_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopped_ = true;
};

/// Read-model renderers, shared with the C API.
json plan_view(const sim::Engine& e);
json orders_view(const sim::Engine& e);
json runs_view(const sim::Engine& e);

}  // namespace mas::service
