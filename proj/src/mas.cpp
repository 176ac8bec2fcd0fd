#include "agentrec/mas.hpp"

#include <algorithm>
#include <cmath>

#include "agentrec/embedding.hpp"
#include "agentrec/text.hpp"

namespace agentrec {

Schemata::Schemata(std::vector<MessageSchema> schemas) {
  for (auto& s : schemas) add(std::move(s));
}

void Schemata::add(MessageSchema schema) {
  if (schema.kind.empty()) fail(Errc::InvalidArgument, "schema kind must be non-empty");
  std::set<std::string> seen;
  for (const auto& f : schema.fields) {
    if (!seen.insert(f).second) fail(Errc::InvalidArgument, "schema '" + schema.kind + "' repeats field '" + f + "'");
  }
  std::string kind = schema.kind;
  if (!by_kind_.emplace(std::move(kind), std::move(schema)).second) {
    fail(Errc::InvalidArgument, "duplicate schema kind");
  }
}

bool Schemata::contains(std::string_view kind) const { return by_kind_.find(kind) != by_kind_.end(); }

const MessageSchema* Schemata::find(std::string_view kind) const {
  auto it = by_kind_.find(kind);
  return it == by_kind_.end() ? nullptr : &it->second;
}

bool Schemata::payload_valid(std::string_view kind, const nlohmann::json& payload) const {
  const MessageSchema* s = find(kind);
  if (s == nullptr || !payload.is_object() || payload.size() != s->fields.size()) return false;
  return std::all_of(s->fields.begin(), s->fields.end(), [&](const std::string& f) { return payload.contains(f); });
}

std::vector<std::string> Schemata::kinds() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : by_kind_) out.push_back(k);
  return out;
}

std::size_t CommMatrix::add(const std::string& id) {
  const std::size_t n = ids_.size();
  std::vector<char> grown((n + 1) * (n + 1), 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) grown[i * (n + 1) + j] = allowed_[i * n + j];
  }
  allowed_ = std::move(grown);
  ids_.push_back(id);
  return n;
}

std::optional<std::size_t> CommMatrix::index_of(std::string_view id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

void CommMatrix::set(std::size_t from, std::size_t to, bool open) {
  if (from == to) fail(Errc::SelfChannel, "agent '" + ids_[from] + "' cannot open a channel to itself");
  allowed_[from * ids_.size() + to] = open ? 1 : 0;
}

nlohmann::json message_to_json(const Message& m) {
  nlohmann::json j;
  j["seq"] = m.seq;
  j["from"] = m.from;
  if (m.to.size() == 1) {
    j["to"] = m.to.front();
  } else {
    j["to"] = m.to;
  }
  j["kind"] = m.kind;
  j["payload"] = m.payload;
  j["env_version"] = m.env_version;
  return j;
}

Message message_from_json(const nlohmann::json& j) {
  try {
    Message m;
    m.seq = j.at("seq").get<std::uint64_t>();
    m.from = j.at("from").get<std::string>();
    const auto& to = j.at("to");
    if (to.is_string()) {
      m.to = {to.get<std::string>()};
    } else {
      m.to = to.get<std::vector<std::string>>();
    }
    m.kind = j.at("kind").get<std::string>();
    m.payload = j.at("payload");
    m.env_version = j.at("env_version").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("message record: ") + e.what());
  }
}

bool CatalogItem::has_tag(std::string_view tag) const {
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

std::string CatalogItem::text() const {
  std::string out = title;
  for (const auto& t : tags) out += " " + t;
  return out;
}

CatalogItem item_from_json(const nlohmann::json& j) {
  try {
    CatalogItem item;
    item.id = j.at("id").get<std::string>();
    item.title = j.value("title", item.id);
    item.category = j.value("category", std::string());
    if (j.contains("tags")) item.tags = j.at("tags").get<std::vector<std::string>>();
    item.price = j.value("price", 0.0);
    if (j.contains("palette") && !j.at("palette").is_null()) {
      auto v = normalized(j.at("palette").get<std::vector<double>>());
      if (v.is_zero()) fail(Errc::InvalidArgument, "item '" + item.id + "' has an all-zero palette");
      item.palette = std::move(v.values);
    }
    if (item.id.empty()) fail(Errc::InvalidArgument, "catalog item with empty id");
    return item;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("catalog item: ") + e.what());
  }
}

nlohmann::json item_to_json(const CatalogItem& item) {
  nlohmann::json j = {{"id", item.id}, {"title", item.title}, {"category", item.category},
                      {"tags", item.tags},   {"price", item.price}};
  if (item.palette) j["palette"] = *item.palette;
  return j;
}

std::vector<CatalogItem> catalog_from_json(const nlohmann::json& j) {
  const nlohmann::json* arr = &j;
  if (j.is_object() && j.contains("items")) arr = &j.at("items");
  if (!arr->is_array()) fail(Errc::ParseError, "catalog must be an array of items");
  std::vector<CatalogItem> out;
  std::set<std::string> ids;
  for (const auto& e : *arr) {
    out.push_back(item_from_json(e));
    if (!ids.insert(out.back().id).second) fail(Errc::InvalidArgument, "duplicate catalog id '" + out.back().id + "'");
  }
  return out;
}

const CatalogItem* Environment::find_item(std::string_view id) const {
  for (const auto& item : catalog) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

namespace {

void set_field(CatalogItem& item, const std::string& field, const nlohmann::json& value) {
  try {
    if (field == "title") {
      item.title = value.get<std::string>();
    } else if (field == "category") {
      item.category = value.get<std::string>();
    } else if (field == "tags") {
      item.tags = value.get<std::vector<std::string>>();
    } else if (field == "price") {
      item.price = value.get<double>();
    } else if (field == "palette") {
      if (value.is_null()) {
        item.palette.reset();
      } else {
        auto v = normalized(value.get<std::vector<double>>());
        if (v.is_zero()) fail(Errc::InvalidArgument, "all-zero palette");
        item.palette = std::move(v.values);
      }
    } else {
      fail(Errc::InvalidArgument, "unknown item field '" + field + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidArgument, "bad value for field '" + field + "': " + e.what());
  }
}

}  // namespace

Environment apply_env_update(const Environment& env, const EnvDelta& delta) {
  // Conflict keys: "item/<id>/*" for whole-item changes, "item/<id>/<field>", "profile/<user>/<slot>".
  std::set<std::string> whole;
  std::set<std::string> touched;
  auto claim = [&](const std::string& id, const std::string& field) {
    bool clash = whole.count(id) != 0 || (field == "*" && std::any_of(touched.begin(), touched.end(), [&](const auto& k) {
                                            return k.rfind("item/" + id + "/", 0) == 0;
                                          }));
    std::string key = "item/" + id + "/" + field;
    if (clash || !touched.insert(key).second) fail(Errc::ConflictingDelta, "two changes touch " + key);
    if (field == "*") whole.insert(id);
  };

  Environment next = env;
  for (const auto& change : delta.changes) {
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, AddItem>) {
            claim(c.item.id, "*");
            if (c.item.id.empty()) fail(Errc::InvalidArgument, "catalog item with empty id");
            if (next.find_item(c.item.id) != nullptr) fail(Errc::InvalidArgument, "catalog id '" + c.item.id + "' exists");
            next.catalog.push_back(c.item);
          } else if constexpr (std::is_same_v<T, RemoveItem>) {
            claim(c.id, "*");
            auto it = std::find_if(next.catalog.begin(), next.catalog.end(),
                                   [&](const CatalogItem& i) { return i.id == c.id; });
            if (it == next.catalog.end()) fail(Errc::UnknownItem, "no catalog item '" + c.id + "'");
            next.catalog.erase(it);
          } else if constexpr (std::is_same_v<T, SetItemField>) {
            claim(c.id, c.field);
            auto it = std::find_if(next.catalog.begin(), next.catalog.end(),
                                   [&](const CatalogItem& i) { return i.id == c.id; });
            if (it == next.catalog.end()) fail(Errc::UnknownItem, "no catalog item '" + c.id + "'");
            set_field(*it, c.field, c.value);
          } else {
            std::string key = "profile/" + c.user + "/" + c.slot;
            if (!touched.insert(key).second) fail(Errc::ConflictingDelta, "two changes touch " + key);
            next.user_profiles[c.user][c.slot] = c.value;
          }
        },
        change);
  }
  next.version = env.version + 1;
  return next;
}

std::string trace_to_jsonl(const EpisodeResult& result) {
  std::string out;
  for (const auto& m : result.trace) out += message_to_json(m).dump() + "\n";
  if (result.error) {
    nlohmann::json e = {{"error", {{"code", result.error->code}, {"message", result.error->message}}}};
    out += e.dump() + "\n";
  }
  return out;
}

nlohmann::json reply_payload(const Schemata& schemata, const std::string& kind, const std::string& text) {
  auto parsed = nlohmann::json::parse(text, nullptr, false);
  if (!parsed.is_discarded() && parsed.is_object() && schemata.payload_valid(kind, parsed)) return parsed;
  return {{"text", text}};
}

std::string payload_text(const nlohmann::json& payload) {
  if (payload.is_object() && payload.contains("text") && payload.at("text").is_string()) {
    return payload.at("text").get<std::string>();
  }
  return payload.dump();
}

MasRuntime::MasRuntime(Schemata schemata, Environment env)
    : schemata_(std::move(schemata)),
      env_slot_(std::make_shared<std::shared_ptr<const Environment>>(std::make_shared<const Environment>(std::move(env)))) {}

Agent& MasRuntime::add_agent(std::unique_ptr<Agent> agent, bool dormant) {
  if (!agent) fail(Errc::InvalidArgument, "null agent");
  if (has_agent(agent->id())) fail(Errc::InvalidArgument, "duplicate agent id '" + agent->id() + "'");
  for (const auto* kinds : {&agent->input_kinds(), &agent->output_kinds()}) {
    for (const auto& k : *kinds) {
      if (!schemata_.contains(k)) fail(Errc::UnknownSchema, "agent '" + agent->id() + "' uses unknown kind '" + k + "'");
    }
  }
  matrix_.add(agent->id());
  agents_.push_back(std::move(agent));
  active_.push_back(!dormant);
  inboxes_.emplace_back();
  return *agents_.back();
}

std::size_t MasRuntime::index_or_throw(std::string_view id) const {
  auto idx = matrix_.index_of(id);
  if (!idx) fail(Errc::UnknownAgent, "unknown agent '" + std::string(id) + "'");
  return *idx;
}

Agent& MasRuntime::agent(std::string_view id) { return *agents_[index_or_throw(id)]; }
const Agent& MasRuntime::agent(std::string_view id) const { return *agents_[index_or_throw(id)]; }
bool MasRuntime::has_agent(std::string_view id) const { return matrix_.index_of(id).has_value(); }

bool MasRuntime::is_active(std::string_view id) const {
  auto idx = matrix_.index_of(id);
  return idx && active_[*idx];
}

void MasRuntime::toggle_channel(std::string_view from, std::string_view to, bool open) {
  matrix_.set(index_or_throw(from), index_or_throw(to), open);
}

bool MasRuntime::channel_open(std::string_view from, std::string_view to) const {
  return matrix_.allowed(index_or_throw(from), index_or_throw(to));
}

void MasRuntime::spawn(std::string_view parent, const std::vector<std::string>& children) {
  std::size_t p = index_or_throw(parent);
  if (!active_[p]) fail(Errc::UnknownAgent, "agent '" + std::string(parent) + "' is dormant");
  for (const auto& c : children) {
    std::size_t i = index_or_throw(c);
    active_[i] = true;
    matrix_.set(p, i, true);
  }
}

DeliveryReceipt MasRuntime::send_message(Message msg) {
  std::size_t from = index_or_throw(msg.from);
  if (!active_[from]) fail(Errc::UnknownAgent, "agent '" + msg.from + "' is dormant");
  if (msg.to.empty()) fail(Errc::UnknownAgent, "message has no recipient");
  std::vector<std::size_t> targets;
  for (const auto& t : msg.to) {
    std::size_t i = index_or_throw(t);
    if (!active_[i]) fail(Errc::UnknownAgent, "agent '" + t + "' is dormant");
    targets.push_back(i);
  }
  for (std::size_t i : targets) {
    if (i == from || !matrix_.allowed(from, i)) {
      fail(Errc::ChannelClosed, "channel " + msg.from + "->" + matrix_.ids()[i] + " is closed");
    }
  }
  if (!schemata_.contains(msg.kind)) fail(Errc::UnknownSchema, "unknown message kind '" + msg.kind + "'");
  if (!schemata_.payload_valid(msg.kind, msg.payload)) {
    fail(Errc::PayloadInvalid, "payload does not match schema '" + msg.kind + "'");
  }
  msg.seq = next_seq_++;
  msg.env_version = env().version;
  for (std::size_t i : targets) inboxes_[i].push_back(msg);
  ++message_count_;
  return {msg.seq, msg.to};
}

const std::deque<Message>& MasRuntime::inbox(std::string_view id) const { return inboxes_[index_or_throw(id)]; }

std::deque<Message> MasRuntime::drain_inbox(std::string_view id) {
  return std::exchange(inboxes_[index_or_throw(id)], {});
}

EnvReader MasRuntime::env_reader() const {
  std::weak_ptr<std::shared_ptr<const Environment>> weak = env_slot_;
  return [weak]() -> std::shared_ptr<const Environment> {
    auto slot = weak.lock();
    if (!slot) fail(Errc::NoData, "environment no longer available");
    return *slot;
  };
}

void MasRuntime::apply_update(const EnvDelta& delta) {
  *env_slot_ = std::make_shared<const Environment>(apply_env_update(env(), delta));
}

EpisodeResult MasRuntime::run_episode(const std::vector<RouteEdge>& routing, const EpisodeInput& input,
                                      std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  EpisodeResult result;
  episode_seed_ = seed;
  for (auto& box : inboxes_) box.clear();
  std::map<std::string, std::string> outputs;
  bool stepped_any = false;
  const auto start = Clock::now();

  try {
    for (const auto& edge : routing) {
      const auto hop_start = Clock::now();
      Agent& sender = agent(edge.from);
      if (!is_active(edge.from)) fail(Errc::UnknownAgent, "agent '" + edge.from + "' is dormant");
      if (edge.kind == "spawn") spawn(edge.from, edge.to);

      auto cached = outputs.find(edge.from);
      if (cached == outputs.end()) {
        AgentInput in;
        auto pending = drain_inbox(edge.from);
        if (!pending.empty()) {
          in.kind = pending.front().kind;
          in.sender = pending.front().from;
          std::vector<std::string> parts;
          for (const auto& m : pending) parts.push_back(payload_text(m.payload));
          in.text = text::join(parts, "\n");
        } else if (!stepped_any) {
          in.kind = input.kind;
          in.text = input.text;
        } else {
          fail(Errc::NoInput, "agent '" + edge.from + "' has nothing to respond to");
        }
        auto out = step_agent(sender, in, ++clock_, edge.kind);
        stepped_any = true;
        cached = outputs.emplace(edge.from, std::move(out.text)).first;
      }

      Message msg;
      msg.from = edge.from;
      msg.to = edge.to;
      msg.kind = edge.kind;
      msg.payload = reply_payload(schemata_, edge.kind, cached->second);
      send_message(msg);
      msg.seq = next_seq_ - 1;
      msg.env_version = env().version;
      result.trace.push_back(std::move(msg));
      result.hop_latency_ms.push_back(ms_since(hop_start));
    }
  } catch (const Error& e) {
    result.error = EpisodeError{std::string(e.name()), e.what()};
  }

  result.latency_ms = ms_since(start);
  if (!result.error) {
    ++episodes_;
    total_latency_ms_ += result.latency_ms;
  }
  return result;
}

MetricsSnapshot MasRuntime::snapshot_metrics() const {
  if (episodes_ == 0) fail(Errc::NoData, "no completed episodes");
  MetricsSnapshot m;
  m.episodes = episodes_;
  m.message_count = message_count_;
  m.mean_latency_ms = total_latency_ms_ / static_cast<double>(episodes_);
  m.throughput_per_sec = total_latency_ms_ > 0.0 ? static_cast<double>(message_count_) / (total_latency_ms_ / 1000.0) : 0.0;
  return m;
}

}  // namespace agentrec
