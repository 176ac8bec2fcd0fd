#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "agentrec/agent.hpp"
#include "agentrec/error.hpp"
#include "agentrec/reliability.hpp"

namespace agentrec {

struct MessageSchema {
  std::string kind;
  std::vector<std::string> fields;  // payload must be an object with exactly these keys
};

class Schemata {
 public:
  Schemata() = default;
  explicit Schemata(std::vector<MessageSchema> schemas);

  /// Throws InvalidArgument on a duplicate kind.
  void add(MessageSchema schema);
  bool contains(std::string_view kind) const;
  const MessageSchema* find(std::string_view kind) const;
  bool payload_valid(std::string_view kind, const nlohmann::json& payload) const;
  std::vector<std::string> kinds() const;

 private:
  std::map<std::string, MessageSchema, std::less<>> by_kind_;
};

/// Directed permission grid over registered agents. The diagonal is always closed.
class CommMatrix {
 public:
  /// Appends a row and column, all closed. Returns the new index.
  std::size_t add(const std::string& id);
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::optional<std::size_t> index_of(std::string_view id) const;

  bool allowed(std::size_t from, std::size_t to) const { return allowed_[from * ids_.size() + to] != 0; }
  /// Throws SelfChannel when from == to.
  void set(std::size_t from, std::size_t to, bool open);

 private:
  std::vector<std::string> ids_;
  std::vector<char> allowed_;
};

struct Message {
  std::uint64_t seq = 0;
  std::string from;
  std::vector<std::string> to;
  std::string kind;
  nlohmann::json payload;
  std::uint64_t env_version = 0;

  bool operator==(const Message&) const = default;
};

/// {seq, from, to, kind, payload, env_version}; `to` is a string for a single
/// recipient and an array for multicast.
nlohmann::json message_to_json(const Message& m);
Message message_from_json(const nlohmann::json& j);

struct CatalogItem {
  std::string id;
  std::string title;
  std::string category;
  std::vector<std::string> tags;
  double price = 0.0;
  std::optional<std::vector<double>> palette;

  bool has_tag(std::string_view tag) const;
  /// Title followed by tags; the text items are scored and embedded by.
  std::string text() const;

  bool operator==(const CatalogItem&) const = default;
};

/// {id, title, category?, tags, price, palette?}
CatalogItem item_from_json(const nlohmann::json& j);
nlohmann::json item_to_json(const CatalogItem& item);
/// Either an array of items or {"items": [...]}. Throws ParseError, InvalidArgument (duplicate id).
std::vector<CatalogItem> catalog_from_json(const nlohmann::json& j);

struct Environment {
  std::uint64_t version = 0;
  std::vector<CatalogItem> catalog;
  std::map<std::string, std::map<std::string, std::string>> user_profiles;
  BrandPolicy policy;

  const CatalogItem* find_item(std::string_view id) const;
  bool operator==(const Environment&) const = default;
};

struct AddItem {
  CatalogItem item;
};
struct RemoveItem {
  std::string id;
};
/// field is one of title, category, tags, price, palette.
struct SetItemField {
  std::string id;
  std::string field;
  nlohmann::json value;
};
struct SetProfileFact {
  std::string user;
  std::string slot;
  std::string value;
};

using EnvChange = std::variant<AddItem, RemoveItem, SetItemField, SetProfileFact>;

struct EnvDelta {
  std::vector<EnvChange> changes;
};

/// Applies every change to a copy and bumps the version by one.
/// Throws ConflictingDelta (two changes touching the same field), UnknownItem,
/// InvalidArgument (duplicate id or bad field value).
Environment apply_env_update(const Environment& env, const EnvDelta& delta);

using EnvReader = std::function<std::shared_ptr<const Environment>()>;

struct RouteEdge {
  std::string from;
  std::vector<std::string> to;
  std::string kind;
};

struct EpisodeInput {
  std::string kind;
  std::string text;
};

struct EpisodeError {
  std::string code;
  std::string message;

  bool operator==(const EpisodeError&) const = default;
};

struct EpisodeResult {
  std::vector<Message> trace;
  std::optional<EpisodeError> error;
  double latency_ms = 0.0;
  std::vector<double> hop_latency_ms;
};

/// Trace as JSON lines; an aborted episode ends with {"error": {code, message}}.
std::string trace_to_jsonl(const EpisodeResult& result);

struct MetricsSnapshot {
  std::uint64_t episodes = 0;
  std::uint64_t message_count = 0;
  double mean_latency_ms = 0.0;
  double throughput_per_sec = 0.0;
};

struct DeliveryReceipt {
  std::uint64_t seq = 0;
  std::vector<std::string> delivered_to;
};

class MasRuntime {
 public:
  explicit MasRuntime(Schemata schemata = {}, Environment env = {});

  /// Registers an agent. A dormant agent holds a matrix slot but neither sends
  /// nor receives until spawned. Throws InvalidArgument (duplicate id) or
  /// UnknownSchema (an agent kind missing from the schemata).
  Agent& add_agent(std::unique_ptr<Agent> agent, bool dormant = false);

  Agent& agent(std::string_view id);
  const Agent& agent(std::string_view id) const;
  bool has_agent(std::string_view id) const;
  bool is_active(std::string_view id) const;
  std::vector<std::string> agent_ids() const { return matrix_.ids(); }

  const Schemata& schemata() const { return schemata_; }
  const CommMatrix& matrix() const { return matrix_; }

  void toggle_channel(std::string_view from, std::string_view to, bool open);
  bool channel_open(std::string_view from, std::string_view to) const;

  /// Activates dormant children and opens parent -> child channels.
  void spawn(std::string_view parent, const std::vector<std::string>& children);

  /// Assigns seq and env_version, checks (in order) registration, every
  /// channel, schema membership and payload shape, then appends to each
  /// recipient's inbox. Nothing is delivered when any check fails.
  DeliveryReceipt send_message(Message msg);

  const std::deque<Message>& inbox(std::string_view id) const;
  std::deque<Message> drain_inbox(std::string_view id);

  const Environment& env() const { return **env_slot_; }
  std::shared_ptr<const Environment> env_snapshot() const { return *env_slot_; }
  /// Reader handed to tools: always returns the latest whole version.
  EnvReader env_reader() const;
  void apply_update(const EnvDelta& delta);

  /// Seed of the running (or last) episode.
  std::uint64_t episode_seed() const { return episode_seed_; }

  /// Runs the routing in order. The first edge's sender steps on `input`; every
  /// later sender steps once on its pending inbox (texts joined by newlines)
  /// and reuses that output for further edges. Agent errors abort the episode
  /// with a partial trace and an error marker rather than throwing.
  EpisodeResult run_episode(const std::vector<RouteEdge>& routing, const EpisodeInput& input, std::uint64_t seed);

  /// Throws NoData before the first completed episode.
  MetricsSnapshot snapshot_metrics() const;

 private:
  std::size_t index_or_throw(std::string_view id) const;

  Schemata schemata_;
  // readers hold the slot, so they see versions published after they were created
  std::shared_ptr<std::shared_ptr<const Environment>> env_slot_;
  CommMatrix matrix_;
  std::vector<std::unique_ptr<Agent>> agents_;
  std::vector<bool> active_;
  std::vector<std::deque<Message>> inboxes_;
  std::uint64_t next_seq_ = 1;
  std::uint64_t clock_ = 0;
  std::uint64_t episode_seed_ = 0;

  std::uint64_t episodes_ = 0;
  std::uint64_t message_count_ = 0;
  double total_latency_ms_ = 0.0;
};

/// Payload for an agent reply: a JSON object when the text parses as one
/// matching the schema, otherwise {"text": reply}.
nlohmann::json reply_payload(const Schemata& schemata, const std::string& kind, const std::string& text);

/// Inverse of reply_payload for an inbound message: its "text" field when it
/// has one, otherwise the compact JSON dump.
std::string payload_text(const nlohmann::json& payload);

}  // namespace agentrec
