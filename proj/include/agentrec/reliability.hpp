#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace agentrec {

/// 1 - prod(1 - p_i). Throws OutOfRange for any p_i outside [0, 1] (or NaN).
double propagation_probability(std::span<const double> p);

/// Dependency graph: an edge (i, j) means j consumes i's output.
struct AgentGraph {
  std::vector<std::string> nodes;
  std::vector<double> error_rates;  // parallel to nodes
  std::vector<std::pair<std::string, std::string>> edges;
};

/// Ground-truth value of the assertion each node emits when it works
/// correctly. A failed node emits the negation.
struct ValidityOracle {
  std::map<std::string, bool> truth;

  bool valid(const std::string& key, bool asserted) const;
};

struct CascadeResult {
  std::uint64_t trials = 0;
  std::uint64_t invalid_trials = 0;  // trials where some sink emitted an invalid value

  double rate() const { return trials == 0 ? 0.0 : static_cast<double>(invalid_trials) / static_cast<double>(trials); }
};

inline constexpr std::size_t kCascadePartitions = 16;

/// Monte Carlo over the graph. Each node fails independently with its rate;
/// an invalid input deterministically invalidates the consumer. Trials are
/// split into kCascadePartitions streams seeded by derive_seed(seed, k), so the
/// result does not depend on `threads` (0 = hardware concurrency).
/// Throws CyclicGraph, InvalidArgument (bad graph or oracle), OutOfRange.
CascadeResult simulate_error_cascade(const AgentGraph& graph, const ValidityOracle& oracle, std::uint64_t trials,
                                     std::uint64_t seed, unsigned threads = 0);

/// Topological order of node indices (Kahn, lowest index first). Throws CyclicGraph.
std::vector<std::size_t> topological_order(const AgentGraph& graph);

/// Most frequent reply; ties go to the lexicographically smallest text.
std::string consensus(std::span<const std::string> replies);

struct Disclosure {
  std::string trigger;
  std::string disclosure;

  bool operator==(const Disclosure&) const = default;
};

struct BrandPolicy {
  std::set<std::string> banned_terms;
  std::vector<Disclosure> required_disclosures;
  std::optional<std::set<std::string>> tone_allowlist;

  /// Throws InvalidArgument when a disclosure text is also a banned term.
  void validate() const;

  bool operator==(const BrandPolicy&) const = default;
};

/// {"banned_terms": [...], "required_disclosures": [{"trigger", "disclosure"}],
///  "tone_allowlist": [...] | absent}
BrandPolicy policy_from_json(const nlohmann::json& j);
nlohmann::json policy_to_json(const BrandPolicy& policy);

/// Tone markers look like "[tone:playful]".
std::vector<std::string> tone_tags(std::string_view text);

/// Phrases match as whole-token sequences over word_tokens (case-insensitive).
/// Tone markers are removed before phrase matching.
bool contains_phrase(std::string_view text, std::string_view phrase);

struct ComplianceReport {
  std::vector<std::string> banned;               // banned terms present
  std::vector<std::string> missing_disclosures;  // triggers whose disclosure is absent
  std::vector<std::string> disallowed_tones;

  bool ok() const { return banned.empty() && missing_disclosures.empty() && disallowed_tones.empty(); }
};

ComplianceReport compliance_report(std::string_view text, const BrandPolicy& policy);
bool check_compliance(std::string_view text, const BrandPolicy& policy);

struct Candidate {
  std::string text;
  double score = 0.0;
};

/// Highest-scoring compliant candidate, ties to the smallest text.
/// Throws InvalidArgument (empty or non-finite score), NoCompliantCandidate.
std::string constrained_select(std::span<const Candidate> candidates, const BrandPolicy& policy);

}  // namespace agentrec
