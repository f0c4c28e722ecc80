#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace mas::agents {

enum class MessageKind {
  call_for_proposal,
  proposal,
  award,
  reject,
  status_query,
  status_reply,
  disturbance,
  reservation,
  release,
  scm_outsource
};

const char* to_string(MessageKind k);
MessageKind message_kind_from(const std::string& s);

struct AgentMessage {
  std::uint64_t seq = 0;
  MessageKind kind = MessageKind::call_for_proposal;
  std::string sender;
  std::string receiver;
  std::string correlation;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json to_json(const AgentMessage& m);
AgentMessage message_from_json(const nlohmann::json& j);

/// Totally ordered record of every message exchanged between logical agents.
class MessageLog {
 public:
  const AgentMessage& send(MessageKind kind, std::string sender, std::string receiver,
                           std::string correlation, nlohmann::json payload = nlohmann::json::object());

  const std::vector<AgentMessage>& all() const { return messages_; }
  std::size_t size() const { return messages_.size(); }
  std::uint64_t next_seq() const { return next_; }
  std::uint64_t next_correlation() { return ++correlation_; }

  /// One canonical JSON record per line.
  std::string to_ndjson() const;
  nlohmann::json to_json() const;
  static MessageLog from_json(const nlohmann::json& j);

 private:
  std::vector<AgentMessage> messages_;
  std::uint64_t next_ = 1;
  std::uint64_t correlation_ = 0;
};

// Agent addresses.
inline std::string joa(const std::string& order) { return "JOA:" + order; }
inline std::string ma(const std::string& machine) { return "MA:" + machine; }
inline std::string la(const std::string& area) { return "LA:" + area; }
inline std::string supply_agent(const std::string& kind, const std::string& area) {
  if (kind == "tool") return "TA:" + area;
  if (kind == "jig") return "JA:" + area;
  return "MTA:" + area;
}
inline const std::string kMma = "MMA";
inline const std::string kSea = "SEA";
inline const std::string kScm = "SCM";

}  // namespace mas::agents
