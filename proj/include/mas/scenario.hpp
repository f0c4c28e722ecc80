#pragma once

// Scenario files and the JSON codec for model and plan types. Parsing is
// strict: unknown keys and wrong types are reported with the JSON pointer of
// the offending field, and every issue of a document is collected.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mas/model.hpp"
#include "mas/plan.hpp"

namespace mas {

inline constexpr int kScenarioVersion = 1;
inline constexpr const char* kScenarioFormat = "masched-scenario";

struct Issue {
  std::string path;  // JSON pointer, or "line L, column C" for syntax errors
  std::string message;

  bool operator==(const Issue&) const = default;
};

class ScenarioError : public Error {
 public:
  explicit ScenarioError(std::vector<Issue> issues);
  const std::vector<Issue>& issues() const { return issues_; }

 private:
  std::vector<Issue> issues_;
};

/// An order as it arrives: header plus its operations.
struct OrderSpec {
  Order order;
  std::vector<Operation> operations;

  bool operator==(const OrderSpec&) const = default;
};

struct Disturbance {
  enum class Kind { machine_down, machine_up, tool_damage, rush_order, back_order };
  Kind kind = Kind::machine_down;
  Minutes at = 0;
  std::string machine;           // machine-down / machine-up
  std::optional<Minutes> until;  // machine-down: repaired at
  std::string item;              // tool-damage
  std::string order;             // back-order
  Minutes extend_by = 0;         // back-order
  std::optional<OrderSpec> rush;  // rush-order

  bool operator==(const Disturbance&) const = default;
};
const char* to_string(Disturbance::Kind k);
Disturbance::Kind disturbance_kind_from(const std::string& s);

struct Scenario {
  ShopModel shop;  // machines, areas, logistics, stock, config; no orders
  std::vector<OrderSpec> orders;
  std::vector<Disturbance> disturbances;

  bool operator==(const Scenario&) const = default;
};

struct ParseOptions {
  Strategy default_strategy = Strategy::force;  // orders without a strategy field
};

/// Parses and validates; throws ScenarioError listing every issue.
Scenario parse_scenario(const std::string& text, const ParseOptions& opts = {});
Scenario load_scenario(const std::string& path, const ParseOptions& opts = {});
/// Every issue of a document, empty for a valid scenario.
std::vector<Issue> lint_scenario(const std::string& text, const ParseOptions& opts = {});
/// Canonical text: sorted keys, two-space indent, every field present.
std::string serialize_scenario(const Scenario& s);
/// Reference checks on an already parsed scenario.
std::vector<Issue> check_scenario(const Scenario& s);

namespace codec {

using json = nlohmann::json;

json to_json(const Config& c);
json to_json(const Machine& m, bool runtime);
json to_json(const Area& a);
json to_json(const Operation& op);
json to_json(const Order& o, bool runtime);
json to_json(const OrderSpec& o);
json to_json(const Disturbance& d);
json to_json(const DispatchOptions& o);
json to_json(const Slot& s);
json to_json(const Plan& p);
/// Full model including runtime state (outages, APT, stock use, order states).
json model_to_json(const ShopModel& m);

/// Strict object reader; problems go to `issues` and defaults are returned.
class Reader {
 public:
  Reader(const json* j, std::string path, std::vector<Issue>* issues);

  bool has(const std::string& key) const;
  Minutes integer(const std::string& key, std::optional<Minutes> fallback = std::nullopt);
  double number(const std::string& key, std::optional<double> fallback = std::nullopt);
  bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt);
  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt);
  std::optional<std::string> nullable_string(const std::string& key);
  std::optional<Minutes> nullable_integer(const std::string& key);
  std::vector<std::string> strings(const std::string& key, bool required = false);
  /// Array elements (nullptr-safe); missing optional arrays read as empty.
  std::vector<const json*> array(const std::string& key, bool required = false);
  Reader object(const std::string& key, bool required = false);
  /// Reader for a nested value reporting into the same issue list.
  Reader nested(const json* j, std::string path) const { return Reader(j, std::move(path), issues_); }
  /// Object of numbers, e.g. graded capabilities.
  std::map<std::string, double> numbers(const std::string& key);
  const json* raw(const std::string& key);
  std::string path(const std::string& key) const;
  const std::string& path() const { return path_; }
  void issue(const std::string& key, const std::string& message);
  /// Reports keys that were never read.
  void finish();

 private:
  const json* find(const std::string& key, bool required);

  const json* j_;
  std::string path_;
  std::vector<Issue>* issues_;
  std::set<std::string> seen_;
};

Config config_from(Reader r);
Machine machine_from(Reader r, bool runtime);
Area area_from(Reader r);
Operation operation_from(Reader r);
Order order_from(Reader r, bool runtime, const ParseOptions& opts);
OrderSpec order_spec_from(Reader r, const ParseOptions& opts);
Disturbance disturbance_from(Reader r, const ParseOptions& opts);
DispatchOptions options_from(Reader r);
Plan plan_from(const json& j);
ShopModel model_from_json(const json& j);

}  // namespace codec

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace mas
