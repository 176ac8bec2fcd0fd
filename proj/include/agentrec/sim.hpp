#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentrec/mas.hpp"
#include "agentrec/memory.hpp"
#include "agentrec/pipelines.hpp"
#include "agentrec/rng.hpp"

namespace agentrec {

enum class ActionSpace { SelectNotSelect, ClickPassPurchase };
enum class UserAction { Select, NotSelect, Click, Pass, Purchase };

std::string_view action_name(UserAction a);
UserAction parse_action(std::string_view name);
std::string_view action_space_name(ActionSpace s);
ActionSpace parse_action_space(std::string_view name);

/// Select, Click and Purchase count as engagement.
bool is_positive(UserAction a);

/// A stochastic user policy. `memory` holds the simulator's own episodes and
/// persists across its sessions.
struct UserSimulator {
  std::string id;
  std::string cohort;
  std::vector<double> theta;  // unit norm
  double noise_scale = 0.0;
  ActionSpace action_space = ActionSpace::SelectNotSelect;
  std::uint64_t seed = 0;
  MemoryStore memory;

  /// Normalizes theta. Throws InvalidArgument for a zero or non-finite theta,
  /// or a negative or non-finite noise scale.
  static UserSimulator make(std::string id, std::string cohort, std::vector<double> theta, double noise_scale,
                            ActionSpace space, std::uint64_t seed);
};

/// Unit vector with standard normal coordinates drawn from `seed`.
std::vector<double> theta_from_seed(std::uint64_t seed, std::size_t dim = kEmbeddingDim);
std::vector<double> theta_from_text(std::string_view text);

/// Selection probability for the top item, before noise: max(0, cos(theta, item text)).
double base_select_probability(const UserSimulator& sim, const CatalogItem& top);

/// p = clamp(base + noise_scale * N(0,1), 0, 1). The normal is drawn even when
/// the noise scale is 0, so the stream layout does not depend on it.
/// SelectNotSelect: Select iff u < p.
/// ClickPassPurchase: Pass unless u < p; an engaged user then purchases iff u' < p.
/// Throws InvalidArgument (empty recs), UnknownItem.
UserAction simulate_action(const UserSimulator& sim, const RankedList& recs, const Environment& env, Rng& rng);

struct SessionState {
  std::size_t session = 0;
  std::size_t t = 0;
  std::size_t positives_so_far = 0;
  std::string last_top;  // empty before the first shown item

  bool operator==(const SessionState&) const = default;
};

struct SessionStep {
  SessionState state;
  RankedList recs;
  std::optional<UserAction> action;  // absent when the step was skipped
  bool repeat = false;               // top item was already shown this session
  double reward = 0.0;
  std::optional<EpisodeError> error;

  bool operator==(const SessionStep&) const = default;
};

struct SessionTrace {
  std::string simulator_id;
  std::string cohort;
  std::size_t session = 0;
  std::uint64_t seed = 0;
  std::vector<SessionStep> steps;

  bool operator==(const SessionTrace&) const = default;
};

nlohmann::json session_to_json(const SessionTrace& trace);
SessionTrace session_from_json(const nlohmann::json& j);

/// g = select_weight * [positive action] - repeat_penalty * [repeat].
struct RewardSpec {
  std::string name = "select";
  double select_weight = 1.0;
  double repeat_penalty = 0.0;

  double operator()(const SessionStep& step) const;

  /// "select" or "diversity_penalty" (lambda is the repeat penalty). Throws InvalidArgument.
  static RewardSpec named(std::string_view name, double lambda = 0.0);
};

/// Recommenders see the session state, the simulator's memory and the environment.
using Recommender = std::function<RankedList(const SessionState&, const MemoryStore&, const Environment&)>;

/// ids[t mod n] first, followed by the next L-1 ids cyclically.
Recommender rotation_recommender(std::vector<std::string> ids, std::size_t L = 1);
Recommender constant_recommender(std::string id);
/// rank_catalog against a fixed query, skipping items this simulator has
/// already engaged with in earlier steps or sessions.
Recommender relevance_recommender(std::string query, std::size_t L);

struct RunOptions {
  std::size_t horizon = 10;            // T
  std::size_t sessions_per_simulator = 1;
  RewardSpec reward;
  unsigned threads = 1;                // simulators are spread over threads
};

/// Traces in simulator order, then session order. The session seed is
/// derive_seed(sim.seed, session). Throws InvalidArgument (T = 0).
std::vector<SessionTrace> run_sessions(const Recommender& recommender, std::vector<UserSimulator>& sims,
                                       const Environment& env, const RunOptions& options);

struct EvalReport {
  double psi_hat = 0.0;
  double psi_halfwidth = 0.0;
  double ctr = 0.0;
  double ctr_halfwidth = 0.0;
  double diversity_entropy = 0.0;
  std::size_t sessions = 0;
  std::size_t acted_steps = 0;
};

nlohmann::json eval_to_json(const EvalReport& r);

/// Rewards are recomputed from the steps under `g`. Throws NoTraces.
EvalReport evaluate(const std::vector<SessionTrace>& traces, const RewardSpec& g = {});

/// Shannon entropy (natural log) of the empirical distribution of recommended ids.
double diversity_entropy(const std::vector<SessionTrace>& traces);

struct SessionSummary {
  std::string simulator_id;
  std::string cohort;
  std::size_t session = 0;
  std::size_t steps = 0;
  double total_reward = 0.0;
  std::size_t selects = 0;  // positive actions
  std::size_t distinct_items = 0;
  std::string first_action = "none";
  std::string last_action = "none";

  bool operator==(const SessionSummary&) const = default;
};

SessionSummary summarize_session(const SessionTrace& trace);

struct CohortRow {
  std::string cohort;
  std::size_t sessions = 0;
  double mean_reward = 0.0;
  double reward_halfwidth = 0.0;
  double mean_selects = 0.0;
  double selects_halfwidth = 0.0;
  double mean_distinct = 0.0;
  double distinct_halfwidth = 0.0;
};

/// One row per cohort, sorted by cohort id. Throws NoSummaries.
std::vector<CohortRow> cohort_rows(const std::vector<SessionSummary>& summaries);

enum class ReportFormat { Table, JsonLines };
ReportFormat parse_report_format(std::string_view name);

/// Columns: cohort sessions mean_reward reward_hw mean_selects selects_hw
/// mean_distinct distinct_hw. Throws NoSummaries.
std::string aggregate_report(const std::vector<SessionSummary>& summaries, ReportFormat format);

/// 1.96 * sample stddev / sqrt(n); 0 when n < 2.
double halfwidth95(const std::vector<double>& xs);

}  // namespace agentrec
