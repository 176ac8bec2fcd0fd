#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "agentrec/mas.hpp"
#include "agentrec/pipelines.hpp"

namespace agentrec {

struct AgentDecl {
  std::string id;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<ScriptRule> rules;
  std::vector<std::string> tools;
  bool dormant = false;
};

struct MemorySeed {
  MemoryLabel label = MemoryLabel::EPI;
  Fact fact;
  Timestamp timestamp = 0;
};

/// Everything needed to assemble the interactive party-planning MAS.
struct PartySetup {
  std::uint64_t seed = 0;
  std::vector<MessageSchema> schemata;
  std::vector<AgentDecl> agents;
  std::vector<std::pair<std::string, std::string>> channels;
  std::vector<RouteEdge> routing;
  Transcript transcript;
  std::vector<MemorySeed> memory;
  std::vector<CatalogItem> catalog;
  BrandPolicy policy;
  AgentConfig agent_config;
  std::size_t L = 6;                 // ranked list length
  std::size_t K = 5;                 // episodic recall depth
  std::size_t per_category = 4;      // candidates each search tool returns
  std::size_t synthetic_items = 0;   // seeded extra catalog items
};

/// State the party tools share within one runtime.
struct PartySession {
  MemoryStore memory;
  Transcript transcript;
  EnvReader env;
  std::size_t L = 6;
  std::size_t K = 5;
  std::size_t per_category = 4;
  ConstraintSet constraints;  // set by DeriveConstraints
  std::string query;          // set by DeriveConstraints
};

/// Names: VectorDB.query, ValidateEpisodes, DeriveConstraints, SearchCakeAPI,
/// SearchDecorAPI, SearchFavorAPI, CollectionCheck, RankItems.
/// Throws UnknownTool for any other name.
Tool make_party_tool(const std::string& name, const std::shared_ptr<PartySession>& session);
std::vector<std::string> party_tool_names();

/// Seeded synthetic catalog items in the cake, decor and favor categories.
std::vector<CatalogItem> synthetic_party_items(std::uint64_t seed, std::size_t count);

struct PartyPlanner {
  std::unique_ptr<MasRuntime> mas;
  std::shared_ptr<PartySession> session;
  std::vector<RouteEdge> routing;
  std::string opening;  // last user turn, the episode input
  std::uint64_t seed = 0;
};

/// The catalog is extended with synthetic items and shuffled under the seed.
/// Channels listed in the setup are opened; spawn edges open theirs at run time.
PartyPlanner build_party_planner(const PartySetup& setup);

struct PartyOutcome {
  EpisodeResult episode;
  RankedList ranked;  // empty when the episode aborted
  ConstraintSet constraints;
};

PartyOutcome run_party_planner(PartyPlanner& planner);

}  // namespace agentrec
