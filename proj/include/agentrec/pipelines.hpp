#pragma once

#include <cstddef>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agentrec/mas.hpp"
#include "agentrec/memory.hpp"
#include "agentrec/reliability.hpp"

namespace agentrec {

/// Alternating user/agent turns that start and end with a user turn.
struct Transcript {
  std::vector<Turn> turns;

  /// Throws InvalidArgument when the shape is wrong.
  void validate() const;
  const std::string& last_user_text() const;
};

struct RankedEntry {
  std::string id;
  double score = 0.0;

  bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
  std::vector<RankedEntry> entries;

  std::vector<std::string> ids() const;
  bool operator==(const RankedList&) const = default;
};

nlohmann::json ranked_to_json(const RankedList& list);
RankedList ranked_from_json(const nlohmann::json& j);

struct ConstraintSet {
  std::set<std::string> required_tags;
  std::set<std::string> forbidden_tags;
  std::optional<double> budget_max;

  bool operator==(const ConstraintSet&) const = default;
};

nlohmann::json constraints_to_json(const ConstraintSet& c);
ConstraintSet constraints_from_json(const nlohmann::json& j);

/// Tag spelling used for fact values: lowercased, spaces and hyphens as '_'.
std::string normalize_tag(std::string_view value);

/// Whether a fact slot states a hard constraint (allergy, ban, budget, requirement).
bool is_hard_slot(std::string_view slot);

/// Maps facts to constraints:
///   *allergy* / *allergen* / material_ban / *_ban / *_avoid / *_exclude -> forbidden tag
///   budget / budget_max / *_budget                                      -> budget_max (smallest wins)
///   require / required_tag / must_have                                   -> required tag
/// A tag both required and forbidden stays forbidden only.
ConstraintSet derive_constraints(const std::vector<Fact>& facts);

/// Rule names: "forbidden_tag:<t>", "missing_required_tag:<t>", "over_budget".
std::vector<std::string> item_violations(const CatalogItem& item, const ConstraintSet& constraints);

/// Facts stated in the transcript's user turns.
std::vector<Fact> transcript_facts(const Transcript& transcript);

/// Fact items from memory: the top-k by relevance to `query` plus every hard
/// constraint fact (scanned in full, since a missed allergy is unsafe).
/// EPI and SEM only; store order; a slot keeps its first occurrence.
std::vector<Fact> recall_episodes(const MemoryStore& memory, std::string_view query, std::size_t k);

/// Drops recalled facts that contradict a current fact (same slot, other value).
std::vector<Fact> validate_episodes(const std::vector<Fact>& episodes, const std::vector<Fact>& current);

/// Current facts override validated episodes slot by slot.
std::vector<Fact> merge_facts(const std::vector<Fact>& current, const std::vector<Fact>& episodes);

/// Base text followed by the values of every soft (non-hard) fact.
std::string augmented_query(std::string_view base, const std::vector<Fact>& facts);

struct InteractiveRequest {
  std::vector<Fact> facts;
  ConstraintSet constraints;
  std::string query;
};

InteractiveRequest build_request(const Transcript& transcript, const MemoryStore& memory, std::size_t k = 5);

/// Relevance of an item's text to the query.
double item_relevance(std::string_view query, const CatalogItem& item);

/// Drops violating items, scores the rest, sorts by score (desc) then id, keeps top L.
/// Throws InvalidArgument (L = 0 or empty catalog), NoFeasibleItem.
RankedList rank_catalog(const std::vector<CatalogItem>& catalog, const ConstraintSet& constraints,
                        std::string_view query, std::size_t L);

RankedList recommend_interactive(const Transcript& transcript, const Environment& env, const MemoryStore& memory,
                                 std::size_t L, std::size_t k = 5);

struct Violation {
  std::string item_id;
  std::string rule;

  bool operator==(const Violation&) const = default;
};

/// Every (item, rule) violation in list order. Throws UnknownItem.
std::vector<Violation> check_collection_consistency(const RankedList& list, const ConstraintSet& constraints,
                                                    const Environment& env);

struct BundleItem {
  std::string id;
  std::string category;
  std::vector<double> palette;  // empty when the item carries none
  double score = 0.0;
};

struct Bundle {
  std::vector<BundleItem> items;  // one per category, in category order
  std::set<std::string> target_categories;
  double total_score = 0.0;
  bool truncated = false;  // some category had more feasible items than were searched
};

/// Minimum pairwise palette cosine >= tau. Throws MissingPalette.
bool compat_check(const Bundle& bundle, double tau = 0.7);

struct MultimodalOptions {
  double alpha = 0.5;
  double tau = 0.7;
  std::size_t per_category = 3;
};

/// Per category, scores palette-bearing items that survive the profile's
/// forbidden tags and budget by alpha * relevance(text) + (1 - alpha) * cos(palette, scene),
/// keeps the top `per_category`, and returns the best-scoring combination that
/// passes compat_check (ties to the smaller id sequence).
/// Throws MissingPalette, NoFeasibleItem, NoCompatibleBundle, InvalidArgument.
Bundle recommend_multimodal(std::string_view text_constraints, const std::vector<double>& scene,
                            const MemoryStore& profile, const std::set<std::string>& categories,
                            const std::vector<CatalogItem>& catalog, const MultimodalOptions& options = {});

/// Text with "[item:ID]" and "[fact:SLOT=VALUE]" citations.
struct Explanation {
  std::string text;
  std::set<std::string> cited_items;
  std::set<std::string> cited_facts;
  bool item_only = false;  // no user fact was available to cite
  std::string template_id;
};

struct Citations {
  std::set<std::string> items;
  std::map<std::string, std::string> facts;  // slot -> cited value
};

Citations parse_citations(std::string_view text);

/// Placeholders: {item} and {fact} expand to citation markup, {title} and
/// {value} to plain text. A template without {fact} is item-only.
struct ExplanationTemplate {
  std::string id;
  std::string text;
};

const std::vector<ExplanationTemplate>& default_templates();

/// Cites the top recommendation and the first fact item in `ctx` using the
/// first template that fits. Without facts the result is item-only and flagged.
/// Throws InvalidArgument (no recs, or no usable template).
Explanation generate_explanation(const RankedList& recs, const std::vector<MemoryItem>& ctx,
                                 const std::vector<ExplanationTemplate>& templates = default_templates(),
                                 const Environment* env = nullptr);

/// Reparses the text: cited items within recs, cited facts present in ctx with
/// the same value, and the text compliant with the policy.
bool consistency_check(const Explanation& explanation, const RankedList& recs, const std::vector<MemoryItem>& ctx,
                       const BrandPolicy& policy);

struct RevisionResult {
  Explanation explanation;
  std::size_t rounds = 0;
  std::vector<Explanation> rejected;  // failed attempts, in order
};

/// Generate, check, and on failure drop the template used and try again.
/// Throws RevisionExhausted after max_rounds failures or when templates run out.
RevisionResult explain_with_revision(const RankedList& recs, const std::vector<MemoryItem>& ctx,
                                     const BrandPolicy& policy, std::size_t max_rounds,
                                     std::vector<ExplanationTemplate> templates = default_templates(),
                                     const Environment* env = nullptr);

}  // namespace agentrec
