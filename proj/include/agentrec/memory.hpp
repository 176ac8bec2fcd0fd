#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "agentrec/embedding.hpp"
#include "agentrec/knapsack.hpp"

namespace agentrec {

using Timestamp = std::uint64_t;

enum class MemoryLabel { EPI, SEM, PROC };

std::string_view label_name(MemoryLabel label);
MemoryLabel parse_label(std::string_view name);

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;

  std::string text() const { return subject + " " + relation + " " + object; }
  bool operator==(const Triple&) const = default;
};

struct MemoryMeta {
  Timestamp timestamp = 0;
  MemoryLabel label = MemoryLabel::EPI;
  std::uint32_t update_count = 1;

  bool operator==(const MemoryMeta&) const = default;
};

/// One long-term memory entry. `key` always equals embed_text(canonical_text()).
struct MemoryItem {
  EmbeddingVector key;
  std::string slot;  // empty for free text and symbolic items
  std::variant<std::string, Triple> value;
  MemoryMeta meta;

  /// "slot: value" for facts, the raw text for free text, "s r o" for triples.
  std::string canonical_text() const;

  bool operator==(const MemoryItem&) const = default;
};

struct Turn {
  std::string speaker;
  std::string text;

  bool operator==(const Turn&) const = default;
};

/// Raw context collected during one step, before retention.
struct RawContext {
  std::vector<Turn> turns;
  std::optional<std::string> trace;
  std::vector<std::pair<std::string, std::string>> pending_tool_calls;
};

struct Fact {
  std::string slot;
  std::string value;

  std::string text() const { return slot + ": " + value; }
  bool operator==(const Fact&) const = default;
};

class MemoryStore {
 public:
  const std::vector<Turn>& raw_log() const { return raw_log_; }
  const std::vector<MemoryItem>& items() const { return items_; }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::set<std::string>& entities() const { return entities_; }

  void append_turn(Turn turn);

  /// Merge rule: upsert keyed by (slot, label). An existing item has its value
  /// overwritten, its timestamp set to `now`, and its update count bumped.
  const MemoryItem& upsert_fact(const Fact& fact, MemoryLabel label, Timestamp now);

  /// Free-text item keyed by (text, label).
  const MemoryItem& upsert_text(std::string_view text, MemoryLabel label, Timestamp now);

  /// Symbolic item whose value is a triple; components must be declared entities.
  const MemoryItem& upsert_symbolic(const Triple& triple, MemoryLabel label, Timestamp now);

  void declare_entity(std::string_view entity);
  bool has_entity(std::string_view entity) const;

  /// Appends to the triple set (duplicates ignored). Throws UnknownEntity.
  void add_triple(const Triple& triple);

  const MemoryItem* find(std::string_view slot, MemoryLabel label) const;

  bool operator==(const MemoryStore&) const = default;

  // Snapshot restore hook; validates the key/text invariant.
  void restore_item(MemoryItem item);

 private:
  MemoryItem& upsert(std::string slot, std::variant<std::string, Triple> value, MemoryLabel label,
                     Timestamp now);
  void check_entities(const Triple& t) const;

  std::vector<Turn> raw_log_;
  std::vector<MemoryItem> items_;
  std::vector<Triple> triples_;
  std::set<std::string> entities_;
};

/// Retention pattern table. Each rule is an ECMAScript regex searched
/// (case-insensitively) in a lowercased user turn; `value` may reference
/// capture groups as $1, $2, ...
class RetentionTable {
 public:
  struct Rule {
    std::string pattern;
    std::string slot;
    std::string value;
  };

  explicit RetentionTable(std::vector<Rule> rules);

  static const RetentionTable& defaults();

  std::span<const Rule> rules() const { return rules_; }
  const std::regex& compiled(std::size_t i) const { return compiled_[i]; }

 private:
  std::vector<Rule> rules_;
  std::vector<std::regex> compiled_;
};

/// Retention operator: extractive, rule-based. Scans user turns only, in turn
/// order, for pattern-table hits, "slot: value" / "slot = value" assertions,
/// and declarative "X is/are Y" statements.
std::vector<Fact> retain(const RawContext& ctx, const RetentionTable& table = RetentionTable::defaults());

/// Compressing variant: keeps the first retained fact of each user turn.
std::vector<Fact> retain_summary(const RawContext& ctx,
                                 const RetentionTable& table = RetentionTable::defaults());

/// Memory update: appends the turns to the raw log, then upserts each retained
/// fact under `label`.
void update_memory(MemoryStore& store, const RawContext& ctx, MemoryLabel label, Timestamp now,
                   const RetentionTable& table = RetentionTable::defaults());

double relevance_score(std::string_view query, const MemoryItem& item);

struct ScoredItem {
  MemoryItem item;
  double score = 0.0;
};

/// Orders by score descending, then older timestamp, then canonical text.
bool ranks_before(const ScoredItem& a, const ScoredItem& b);

std::vector<ScoredItem> retrieve_topk(const MemoryStore& store, std::string_view query, std::size_t k,
                                      std::optional<MemoryLabel> label_filter = std::nullopt);

/// Last `max_tokens` whitespace tokens of the space-joined raw log.
std::string tail_window(const MemoryStore& store, std::size_t max_tokens);

struct TriplePattern {
  std::optional<std::string> subject;
  std::optional<std::string> relation;
  std::optional<std::string> object;
};

std::vector<Triple> query_triples(const MemoryStore& store, const TriplePattern& pattern);

struct ContextWindow {
  std::vector<ScoredItem> items;  // ranks_before order
  double total_score = 0.0;
  std::size_t total_tokens = 0;
  bool approximate = false;
};

/// Budgeted context assembly: picks the subset of items maximizing summed
/// relevance with total token length <= budget (see solve_knapsack).
ContextWindow regulate_context(const MemoryStore& store, std::string_view query, std::size_t budget,
                               std::size_t exact_limit = kExactKnapsackLimit);

/// JSON-lines snapshot: entity, triple, item and turn records.
void save_snapshot(const MemoryStore& store, std::ostream& out);
MemoryStore load_snapshot(std::istream& in);

}  // namespace agentrec
