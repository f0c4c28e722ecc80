#include "mas/agents/messages.hpp"

#include "mas/model.hpp"

namespace mas::agents {

namespace {

constexpr MessageKind kAllKinds[] = {
    MessageKind::call_for_proposal, MessageKind::proposal,     MessageKind::award,
    MessageKind::reject,            MessageKind::status_query, MessageKind::status_reply,
    MessageKind::disturbance,       MessageKind::reservation,  MessageKind::release,
    MessageKind::scm_outsource};

}  // namespace

const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::call_for_proposal: return "call-for-proposal";
    case MessageKind::proposal: return "proposal";
    case MessageKind::award: return "award";
    case MessageKind::reject: return "reject";
    case MessageKind::status_query: return "status-query";
    case MessageKind::status_reply: return "status-reply";
    case MessageKind::disturbance: return "disturbance";
    case MessageKind::reservation: return "reservation";
    case MessageKind::release: return "release";
    case MessageKind::scm_outsource: return "scm-outsource";
  }
  return "?";
}

MessageKind message_kind_from(const std::string& s) {
  for (MessageKind k : kAllKinds) {
    if (s == to_string(k)) return k;
  }
  throw Error(Error::Code::parse, "unknown message kind '" + s + "'");
}

nlohmann::json to_json(const AgentMessage& m) {
  return {{"seq", m.seq},
          {"kind", to_string(m.kind)},
          {"sender", m.sender},
          {"receiver", m.receiver},
          {"correlation", m.correlation},
          {"payload", m.payload}};
}

AgentMessage message_from_json(const nlohmann::json& j) {
  AgentMessage m;
  m.seq = j.at("seq").get<std::uint64_t>();
  m.kind = message_kind_from(j.at("kind").get<std::string>());
  m.sender = j.at("sender").get<std::string>();
  m.receiver = j.at("receiver").get<std::string>();
  m.correlation = j.at("correlation").get<std::string>();
  m.payload = j.at("payload");
  return m;
}

const AgentMessage& MessageLog::send(MessageKind kind, std::string sender, std::string receiver,
                                     std::string correlation, nlohmann::json payload) {
  AgentMessage m;
  m.seq = next_++;
  m.kind = kind;
  m.sender = std::move(sender);
  m.receiver = std::move(receiver);
  m.correlation = std::move(correlation);
  m.payload = std::move(payload);
  messages_.push_back(std::move(m));
  return messages_.back();
}

std::string MessageLog::to_ndjson() const {
  std::string out;
  for (const AgentMessage& m : messages_) {
    out += agents::to_json(m).dump();
    out += '\n';
  }
  return out;
}

nlohmann::json MessageLog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const AgentMessage& m : messages_) arr.push_back(agents::to_json(m));
  return {{"messages", arr}, {"next_seq", next_}, {"next_correlation", correlation_}};
}

MessageLog MessageLog::from_json(const nlohmann::json& j) {
  MessageLog log;
  for (const auto& m : j.at("messages")) log.messages_.push_back(message_from_json(m));
  log.next_ = j.at("next_seq").get<std::uint64_t>();
  log.correlation_ = j.at("next_correlation").get<std::uint64_t>();
  return log;
}

}  // namespace mas::agents
