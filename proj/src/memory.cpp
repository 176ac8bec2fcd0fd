#include "agentrec/memory.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "agentrec/error.hpp"
#include "agentrec/text.hpp"

namespace agentrec {

using nlohmann::json;

std::string_view label_name(MemoryLabel label) {
  switch (label) {
    case MemoryLabel::EPI: return "EPI";
    case MemoryLabel::SEM: return "SEM";
    case MemoryLabel::PROC: return "PROC";
  }
  return "EPI";
}

MemoryLabel parse_label(std::string_view name) {
  if (name == "EPI") return MemoryLabel::EPI;
  if (name == "SEM") return MemoryLabel::SEM;
  if (name == "PROC") return MemoryLabel::PROC;
  fail(Errc::InvalidArgument, "unknown memory label '" + std::string(name) + "'");
}

std::string MemoryItem::canonical_text() const {
  if (const auto* t = std::get_if<Triple>(&value)) return t->text();
  const auto& v = std::get<std::string>(value);
  return slot.empty() ? v : slot + ": " + v;
}

// ---------------------------------------------------------------------------
// MemoryStore

void MemoryStore::append_turn(Turn turn) { raw_log_.push_back(std::move(turn)); }

MemoryItem& MemoryStore::upsert(std::string slot, std::variant<std::string, Triple> value, MemoryLabel label,
                                Timestamp now) {
  MemoryItem candidate;
  candidate.slot = std::move(slot);
  candidate.value = std::move(value);
  std::string canonical = candidate.canonical_text();
  if (text::token_count(canonical) == 0) fail(Errc::InvalidArgument, "memory item with empty text");

  auto same_identity = [&](const MemoryItem& m) {
    if (m.meta.label != label) return false;
    if (!candidate.slot.empty()) return m.slot == candidate.slot;
    return m.slot.empty() && m.canonical_text() == canonical;
  };
  auto it = std::find_if(items_.begin(), items_.end(), same_identity);
  if (it != items_.end()) {
    it->value = std::move(candidate.value);
    it->key = embed_text(canonical);
    it->meta.timestamp = now;
    it->meta.update_count += 1;
    return *it;
  }
  candidate.key = embed_text(canonical);
  candidate.meta = MemoryMeta{now, label, 1};
  items_.push_back(std::move(candidate));
  return items_.back();
}

const MemoryItem& MemoryStore::upsert_fact(const Fact& fact, MemoryLabel label, Timestamp now) {
  if (text::trim(fact.slot).empty()) fail(Errc::InvalidArgument, "fact with empty slot");
  return upsert(fact.slot, fact.value, label, now);
}

const MemoryItem& MemoryStore::upsert_text(std::string_view text, MemoryLabel label, Timestamp now) {
  return upsert({}, std::string(text), label, now);
}

const MemoryItem& MemoryStore::upsert_symbolic(const Triple& triple, MemoryLabel label, Timestamp now) {
  check_entities(triple);
  return upsert({}, triple, label, now);
}

void MemoryStore::declare_entity(std::string_view entity) {
  if (entity.empty()) fail(Errc::InvalidArgument, "empty entity id");
  entities_.emplace(entity);
}

bool MemoryStore::has_entity(std::string_view entity) const {
  return entities_.find(std::string(entity)) != entities_.end();
}

void MemoryStore::check_entities(const Triple& t) const {
  for (const auto* part : {&t.subject, &t.relation, &t.object}) {
    if (part->empty() || !has_entity(*part)) fail(Errc::UnknownEntity, "entity '" + *part + "' is not declared");
  }
}

void MemoryStore::add_triple(const Triple& triple) {
  check_entities(triple);
  if (std::find(triples_.begin(), triples_.end(), triple) == triples_.end()) triples_.push_back(triple);
}

const MemoryItem* MemoryStore::find(std::string_view slot, MemoryLabel label) const {
  for (const auto& m : items_) {
    if (m.meta.label == label && m.slot == slot) return &m;
  }
  return nullptr;
}

void MemoryStore::restore_item(MemoryItem item) {
  if (item.key != embed_text(item.canonical_text())) {
    fail(Errc::ParseError, "stored key does not match the embedding of '" + item.canonical_text() + "'");
  }
  if (item.meta.update_count < 1) fail(Errc::ParseError, "update_count must be >= 1");
  if (const auto* t = std::get_if<Triple>(&item.value)) check_entities(*t);
  items_.push_back(std::move(item));
}

// ---------------------------------------------------------------------------
// Retention

RetentionTable::RetentionTable(std::vector<Rule> rules) : rules_(std::move(rules)) {
  compiled_.reserve(rules_.size());
  for (const auto& r : rules_) {
    try {
      compiled_.emplace_back(r.pattern, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      fail(Errc::InvalidArgument, "bad retention pattern '" + r.pattern + "': " + e.what());
    }
  }
}

const RetentionTable& RetentionTable::defaults() {
  static const RetentionTable table({
      {R"(\bguests? (?:who )?(?:require|requires|need|needs)\b[^.;!?]*?\b([a-z]+)-free\b)", "guest_allergy", "$1"},
      {R"(\b(?:allergic|allergy) to ([a-z]+))", "guest_allergy", "$1"},
      {R"(\b(?:child|kid|son|daughter)(?: really)? (?:loves|likes|prefers|adores) ([a-z]+))", "child_pref", "$1"},
      {R"(\bi(?: am|'m) (vegan|vegetarian)\b)", "diet", "$1"},
      {R"(\bi(?: am|'m) vegan\b)", "material_ban", "leather"},
  });
  return table;
}

namespace {

struct Segment {
  std::size_t begin = 0;
  std::string text;
  bool question = false;
};

std::vector<Segment> split_segments(const std::string& s) {
  std::vector<Segment> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end, bool question) {
    if (end > start) out.push_back({start, s.substr(start, end - start), question});
    start = end + 1;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    bool at_break = i + 1 == s.size() || std::isspace(static_cast<unsigned char>(s[i + 1])) != 0;
    if (c == ';' || c == '\n') {
      flush(i, false);
    } else if ((c == '.' || c == '!' || c == '?') && at_break) {
      flush(i, c == '?');
    }
  }
  if (start < s.size()) out.push_back({start, s.substr(start), false});
  return out;
}

std::string strip_value(std::string_view v) {
  std::string out = text::trim(v);
  while (!out.empty() && (out.back() == ',' || out.back() == '.' || out.back() == '!')) out.pop_back();
  return text::trim(out);
}

std::string slot_from_words(std::string_view raw) {
  std::string slot = text::trim(raw);
  for (char& c : slot) {
    if (c == ' ' || c == '-') c = '_';
  }
  return slot;
}

const std::regex& lead_in() {
  static const std::regex re(R"(^\s*(?:please )?(?:remember|note)(?: that)?\s+)");
  return re;
}

const std::regex& slot_shape() {
  static const std::regex re(R"(^[a-z][a-z0-9_\-]*(?: [a-z0-9_\-]+){0,2}$)");
  return re;
}

const std::regex& declarative() {
  static const std::regex re(R"(^(?:my |our |the )?([a-z][a-z0-9_]*(?: [a-z][a-z0-9_]*){0,2}) (?:is|are) (.+)$)");
  return re;
}

bool stop_subject(std::string_view first_word) {
  static const std::set<std::string, std::less<>> stop = {"how", "what", "who",  "where", "why", "when",
                                                          "which", "there", "it", "this", "that", "he",
                                                          "she", "they", "we", "you", "i"};
  return stop.count(first_word) != 0;
}

std::vector<Fact> retain_turn(const std::string& raw, const RetentionTable& table) {
  const std::string lower = text::to_lower(raw);
  std::vector<std::pair<std::size_t, Fact>> hits;
  std::vector<std::size_t> table_positions;

  for (std::size_t r = 0; r < table.rules().size(); ++r) {
    const auto& rule = table.rules()[r];
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), table.compiled(r)); it != std::sregex_iterator();
         ++it) {
      std::size_t pos = static_cast<std::size_t>(it->position(0));
      hits.push_back({pos, Fact{rule.slot, it->format(rule.value)}});
      table_positions.push_back(pos);
    }
  }

  for (const auto& seg : split_segments(lower)) {
    std::size_t seg_end = seg.begin + seg.text.size();
    bool covered = std::any_of(table_positions.begin(), table_positions.end(),
                               [&](std::size_t p) { return p >= seg.begin && p < seg_end; });
    if (covered) continue;
    std::string body = std::regex_replace(seg.text, lead_in(), "");
    std::size_t sep = body.find_first_of(":=");
    if (sep != std::string::npos) {
      std::string slot = text::trim(body.substr(0, sep));
      std::string value = strip_value(body.substr(sep + 1));
      if (!value.empty() && std::regex_match(slot, slot_shape())) {
        hits.push_back({seg.begin, Fact{slot_from_words(slot), value}});
      }
      continue;
    }
    if (seg.question) continue;
    std::smatch m;
    std::string trimmed = text::trim(body);
    if (std::regex_match(trimmed, m, declarative())) {
      std::string subject = m[1].str();
      std::string first = subject.substr(0, subject.find(' '));
      std::string value = strip_value(m[2].str());
      if (!stop_subject(first) && !value.empty()) hits.push_back({seg.begin, Fact{slot_from_words(subject), value}});
    }
  }

  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Fact> out;
  for (auto& [pos, fact] : hits) {
    if (std::find(out.begin(), out.end(), fact) == out.end()) out.push_back(std::move(fact));
  }
  return out;
}

bool is_user(std::string_view speaker) { return text::to_lower(speaker) == "user"; }

}  // namespace

std::vector<Fact> retain(const RawContext& ctx, const RetentionTable& table) {
  std::vector<Fact> out;
  for (const auto& turn : ctx.turns) {
    if (!is_user(turn.speaker)) continue;
    auto facts = retain_turn(turn.text, table);
    out.insert(out.end(), std::make_move_iterator(facts.begin()), std::make_move_iterator(facts.end()));
  }
  return out;
}

std::vector<Fact> retain_summary(const RawContext& ctx, const RetentionTable& table) {
  std::vector<Fact> out;
  for (const auto& turn : ctx.turns) {
    if (!is_user(turn.speaker)) continue;
    auto facts = retain_turn(turn.text, table);
    if (!facts.empty()) out.push_back(std::move(facts.front()));
  }
  return out;
}

void update_memory(MemoryStore& store, const RawContext& ctx, MemoryLabel label, Timestamp now,
                   const RetentionTable& table) {
  for (const auto& turn : ctx.turns) store.append_turn(turn);
  for (const auto& fact : retain(ctx, table)) store.upsert_fact(fact, label, now);
}

// ---------------------------------------------------------------------------
// Retrieval

double relevance_score(std::string_view query, const MemoryItem& item) {
  return relevance(embed_text(query, item.key.dim() == 0 ? kEmbeddingDim : item.key.dim()), item.key);
}

bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.item.meta.timestamp != b.item.meta.timestamp) return a.item.meta.timestamp < b.item.meta.timestamp;
  return a.item.canonical_text() < b.item.canonical_text();
}

namespace {
std::vector<ScoredItem> score_all(const MemoryStore& store, std::string_view query,
                                  std::optional<MemoryLabel> label_filter) {
  std::vector<ScoredItem> scored;
  scored.reserve(store.items().size());
  EmbeddingVector q = embed_text(query);
  for (const auto& m : store.items()) {
    if (label_filter && m.meta.label != *label_filter) continue;
    scored.push_back({m, relevance(q, m.key)});
  }
  return scored;
}
}  // namespace

std::vector<ScoredItem> retrieve_topk(const MemoryStore& store, std::string_view query, std::size_t k,
                                      std::optional<MemoryLabel> label_filter) {
  if (k == 0) fail(Errc::InvalidArgument, "retrieve_topk requires K >= 1");
  auto scored = score_all(store, query, label_filter);
  std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), ranks_before);
  scored.resize(keep);
  return scored;
}

std::string tail_window(const MemoryStore& store, std::size_t max_tokens) {
  if (max_tokens == 0) fail(Errc::InvalidArgument, "tail_window requires L >= 1");
  std::vector<std::string_view> picked;
  const auto& log = store.raw_log();
  for (auto it = log.rbegin(); it != log.rend() && picked.size() < max_tokens; ++it) {
    auto toks = text::whitespace_tokens(it->text);
    for (auto t = toks.rbegin(); t != toks.rend() && picked.size() < max_tokens; ++t) picked.push_back(*t);
  }
  std::string out;
  for (auto it = picked.rbegin(); it != picked.rend(); ++it) {
    if (!out.empty()) out.push_back(' ');
    out.append(*it);
  }
  return out;
}

std::vector<Triple> query_triples(const MemoryStore& store, const TriplePattern& pattern) {
  for (const auto* bound : {&pattern.subject, &pattern.relation, &pattern.object}) {
    if (*bound && !store.has_entity(**bound)) fail(Errc::UnknownEntity, "entity '" + **bound + "' is not declared");
  }
  std::vector<Triple> out;
  for (const auto& t : store.triples()) {
    if (pattern.subject && *pattern.subject != t.subject) continue;
    if (pattern.relation && *pattern.relation != t.relation) continue;
    if (pattern.object && *pattern.object != t.object) continue;
    out.push_back(t);
  }
  return out;
}

ContextWindow regulate_context(const MemoryStore& store, std::string_view query, std::size_t budget,
                               std::size_t exact_limit) {
  auto scored = score_all(store, query, std::nullopt);
  std::vector<KnapsackEntry> entries;
  entries.reserve(scored.size());
  for (const auto& s : scored) entries.push_back({s.score, text::token_count(s.item.canonical_text())});
  auto sel = solve_knapsack(entries, budget, exact_limit);

  ContextWindow window;
  window.total_score = sel.total_score;
  window.total_tokens = sel.total_length;
  window.approximate = sel.approximate;
  for (std::size_t i : sel.chosen) window.items.push_back(scored[i]);
  std::sort(window.items.begin(), window.items.end(), ranks_before);
  return window;
}

// ---------------------------------------------------------------------------
// Snapshot

namespace {

json triple_json(const Triple& t) { return {{"subject", t.subject}, {"relation", t.relation}, {"object", t.object}}; }

Triple triple_from(const json& j) {
  return {j.at("subject").get<std::string>(), j.at("relation").get<std::string>(), j.at("object").get<std::string>()};
}

}  // namespace

void save_snapshot(const MemoryStore& store, std::ostream& out) {
  for (const auto& e : store.entities()) out << json{{"kind", "entity"}, {"id", e}}.dump() << '\n';
  for (const auto& t : store.triples()) {
    json j = triple_json(t);
    j["kind"] = "triple";
    out << j.dump() << '\n';
  }
  for (const auto& m : store.items()) {
    json j;
    j["kind"] = "item";
    j["key"] = m.key.values;
    j["slot"] = m.slot;
    if (const auto* t = std::get_if<Triple>(&m.value)) {
      j["value"] = triple_json(*t);
    } else {
      j["value"] = std::get<std::string>(m.value);
    }
    j["meta"] = {{"timestamp", m.meta.timestamp},
                 {"label", std::string(label_name(m.meta.label))},
                 {"update_count", m.meta.update_count}};
    out << j.dump() << '\n';
  }
  for (const auto& turn : store.raw_log()) {
    out << json{{"kind", "turn"}, {"speaker", turn.speaker}, {"text", turn.text}}.dump() << '\n';
  }
}

MemoryStore load_snapshot(std::istream& in) {
  MemoryStore store;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "entity") {
        store.declare_entity(j.at("id").get<std::string>());
      } else if (kind == "triple") {
        store.add_triple(triple_from(j));
      } else if (kind == "turn") {
        store.append_turn({j.at("speaker").get<std::string>(), j.at("text").get<std::string>()});
      } else if (kind == "item") {
        MemoryItem m;
        m.key.values = j.at("key").get<std::vector<double>>();
        m.slot = j.at("slot").get<std::string>();
        const json& v = j.at("value");
        if (v.is_object()) {
          m.value = triple_from(v);
        } else {
          m.value = v.get<std::string>();
        }
        const json& meta = j.at("meta");
        m.meta.timestamp = meta.at("timestamp").get<Timestamp>();
        m.meta.label = parse_label(meta.at("label").get<std::string>());
        m.meta.update_count = meta.at("update_count").get<std::uint32_t>();
        store.restore_item(std::move(m));
      } else {
        fail(Errc::ParseError, "unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      fail(Errc::ParseError, "snapshot line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return store;
}

}  // namespace agentrec
