#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentrec/party.hpp"
#include "agentrec/pipelines.hpp"
#include "agentrec/reliability.hpp"
#include "agentrec/sim.hpp"

namespace agentrec {

inline constexpr std::string_view kVersion = "0.1.0";

enum class ScenarioKind { Interactive, Simulate, Multimodal, Explain, Cascade };

std::string_view scenario_kind_name(ScenarioKind kind);

/// One problem with a config: the JSON path of the field and the rule it breaks.
struct Finding {
  std::string field;
  std::string rule;

  bool operator==(const Finding&) const = default;
};

struct CohortSpec {
  std::string cohort;
  std::size_t count = 1;
  std::optional<std::string> theta_text;  // otherwise theta is drawn from the simulator seed
  double noise = 0.0;
  ActionSpace action_space = ActionSpace::SelectNotSelect;
};

struct SimulateSpec {
  std::vector<CohortSpec> cohorts;
  std::size_t horizon = 10;
  std::size_t sessions = 1;
  std::string recommender = "relevance";  // relevance | rotation | constant
  std::string query;                      // relevance
  std::string item;                       // constant
  std::size_t list_length = 1;
  RewardSpec reward;
  unsigned threads = 1;
};

struct MultimodalSpec {
  std::string text;
  std::vector<double> scene;
  std::set<std::string> categories;
  std::vector<std::string> profile;  // user statements retained into SEM memory
  MultimodalOptions options;
};

struct ExplainSpec {
  RankedList recs;
  std::vector<MemorySeed> facts;
  std::size_t max_rounds = 3;
  std::optional<std::vector<ExplanationTemplate>> templates;
};

struct CascadeSpec {
  AgentGraph graph;
  ValidityOracle oracle;
  std::uint64_t trials = 100000;
  unsigned threads = 1;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Interactive;
  std::filesystem::path path;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;  // resolved against the config's directory
  std::vector<CatalogItem> catalog;
  BrandPolicy policy;
  PartySetup interactive;
  SimulateSpec simulate;
  MultimodalSpec multimodal;
  ExplainSpec explain;
  CascadeSpec cascade;
};

/// Findings are empty iff load_scenario succeeds. Throws Unreadable.
std::vector<Finding> validate_config(const std::filesystem::path& path);

/// Throws Unreadable, ConfigInvalid (the message lists every finding).
ScenarioConfig load_scenario(const std::filesystem::path& path);

struct ScenarioArtifacts {
  std::string trace_jsonl;
  std::string report_jsonl;
  std::string report_txt;
  std::optional<EpisodeError> error;  // set when the scenario failed after producing a partial trace
};

/// Runs the configured pipeline in memory. Module errors propagate, except an
/// aborted party episode, which is returned with its partial trace.
ScenarioArtifacts execute_scenario(const ScenarioConfig& config);

struct ScenarioOptions {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  ReportFormat format = ReportFormat::Table;
};

struct ScenarioOutcome {
  int exit_code = 0;  // 0 ok, 1 scenario error, 2 config error
  std::filesystem::path out_dir;
  std::optional<EpisodeError> error;
  std::vector<Finding> findings;
  std::string stdout_text;  // the report in the requested format
};

/// Writes trace.jsonl, report.jsonl, report.txt and manifest.json, or
/// error.json on failure. Exit 0 iff no error record was written.
ScenarioOutcome run_scenario(const std::filesystem::path& config, const ScenarioOptions& options = {});

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace agentrec
