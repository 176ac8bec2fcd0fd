#include "agentrec/party.hpp"

#include <algorithm>

#include "agentrec/error.hpp"
#include "agentrec/rng.hpp"
#include "agentrec/text.hpp"

namespace agentrec {

namespace {

using nlohmann::json;

json parse_args(std::string_view args, const char* tool) {
  auto j = json::parse(args, nullptr, false);
  if (j.is_discarded()) fail(Errc::ToolFailure, std::string(tool) + ": arguments are not JSON");
  return j;
}

json facts_to_json(const std::vector<Fact>& facts) {
  json arr = json::array();
  for (const auto& f : facts) arr.push_back({{"slot", f.slot}, {"value", f.value}});
  return arr;
}

std::vector<Fact> facts_from_json(const json& arr) {
  std::vector<Fact> out;
  for (const auto& f : arr) out.push_back({f.at("slot").get<std::string>(), f.at("value").get<std::string>()});
  return out;
}

Tool search_tool(const std::string& name, const std::string& category, std::shared_ptr<PartySession> s) {
  return {name,
          [s, category, name](std::string_view args) {
            auto req = parse_args(args, name.c_str());
            auto constraints = constraints_from_json(req.at("constraints"));
            auto query = req.at("query").get<std::string>();
            auto env = s->env();
            std::vector<CatalogItem> pool;
            for (const auto& item : env->catalog) {
              if (item.category == category) pool.push_back(item);
            }
            json items = json::array();
            if (!pool.empty()) {
              try {
                items = ranked_to_json(rank_catalog(pool, constraints, query, s->per_category));
              } catch (const Error& e) {
                if (e.code() != Errc::NoFeasibleItem) throw;
              }
            }
            return json{{"category", category}, {"items", items}}.dump();
          },
          1};
}

}  // namespace

std::vector<std::string> party_tool_names() {
  return {"VectorDB.query",  "ValidateEpisodes", "DeriveConstraints", "SearchCakeAPI",
          "SearchDecorAPI",  "SearchFavorAPI",   "CollectionCheck",   "RankItems"};
}

Tool make_party_tool(const std::string& name, const std::shared_ptr<PartySession>& s) {
  if (name == "VectorDB.query") {
    return {name,
            [s](std::string_view args) {
              return json{{"episodes", facts_to_json(recall_episodes(s->memory, args, s->K))}}.dump();
            },
            1};
  }
  if (name == "ValidateEpisodes") {
    return {name,
            [s](std::string_view args) {
              auto episodes = facts_from_json(parse_args(args, "ValidateEpisodes").at("episodes"));
              auto kept = validate_episodes(episodes, transcript_facts(s->transcript));
              return json{{"episodes", facts_to_json(kept)}}.dump();
            },
            1};
  }
  if (name == "DeriveConstraints") {
    return {name,
            [s](std::string_view args) {
              auto episodes = facts_from_json(parse_args(args, "DeriveConstraints").at("episodes"));
              auto facts = merge_facts(transcript_facts(s->transcript), episodes);
              s->constraints = derive_constraints(facts);
              s->query = augmented_query(s->transcript.last_user_text(), facts);
              return json{{"constraints", constraints_to_json(s->constraints)}, {"query", s->query}}.dump();
            },
            1};
  }
  if (name == "SearchCakeAPI") return search_tool(name, "cake", s);
  if (name == "SearchDecorAPI") return search_tool(name, "decor", s);
  if (name == "SearchFavorAPI") return search_tool(name, "favor", s);
  if (name == "CollectionCheck") {
    return {name,
            [s](std::string_view args) {
              // one item_set JSON object per line
              auto env = s->env();
              json kept = json::array();
              json violations = json::array();
              std::string all(args);
              std::size_t start = 0;
              while (start <= all.size()) {
                std::size_t end = all.find('\n', start);
                if (end == std::string::npos) end = all.size();
                std::string line = text::trim(std::string_view(all).substr(start, end - start));
                start = end + 1;
                if (line.empty()) continue;
                auto set = parse_args(line, "CollectionCheck");
                auto list = ranked_from_json(set.at("items"));
                auto found = check_collection_consistency(list, s->constraints, *env);
                for (const auto& e : list.entries) {
                  bool bad = std::any_of(found.begin(), found.end(), [&](const Violation& v) { return v.item_id == e.id; });
                  if (!bad) kept.push_back({{"id", e.id}, {"score", e.score}});
                }
                for (const auto& v : found) violations.push_back({{"id", v.item_id}, {"rule", v.rule}});
              }
              return json{{"items", kept}, {"violations", violations}}.dump();
            },
            1};
  }
  if (name == "RankItems") {
    return {name,
            [s](std::string_view args) {
              auto list = ranked_from_json(parse_args(args, "RankItems").at("items"));
              auto& e = list.entries;
              std::sort(e.begin(), e.end(), [](const RankedEntry& a, const RankedEntry& b) {
                return a.score != b.score ? a.score > b.score : a.id < b.id;
              });
              e.erase(std::unique(e.begin(), e.end(), [](const RankedEntry& a, const RankedEntry& b) { return a.id == b.id; }),
                      e.end());
              if (e.size() > s->L) e.resize(s->L);
              return json{{"items", ranked_to_json(list)}}.dump();
            },
            1};
  }
  fail(Errc::UnknownTool, "no party tool named '" + name + "'");
}

std::vector<CatalogItem> synthetic_party_items(std::uint64_t seed, std::size_t count) {
  static const std::vector<std::string> cats = {"cake", "decor", "favor"};
  static const std::vector<std::vector<std::string>> words = {
      {"chocolate", "vanilla", "strawberry", "lemon", "carrot", "mickey"},
      {"balloon", "banner", "garland", "mickey", "confetti", "tablecloth"},
      {"stickers", "crayons", "yo-yo", "mickey", "bubbles", "cookies"}};
  Rng rng(derive_seed(seed, std::string_view("synthetic_items")));
  std::vector<CatalogItem> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t c = rng.below(cats.size());
    CatalogItem item;
    item.id = "syn_" + std::to_string(i);
    item.category = cats[c];
    std::string a = words[c][rng.below(words[c].size())];
    std::string b = words[c][rng.below(words[c].size())];
    item.title = a == b ? a + " " + cats[c] : a + " " + b + " " + cats[c];
    item.tags = {normalize_tag(a)};
    if (b != a) item.tags.push_back(normalize_tag(b));
    if (c != 1) item.tags.push_back(rng.bernoulli(0.5) ? "gluten" : "gluten_free");
    item.price = 5.0 + static_cast<double>(rng.below(76));
    out.push_back(std::move(item));
  }
  return out;
}

PartyPlanner build_party_planner(const PartySetup& setup) {
  Environment env;
  env.catalog = setup.catalog;
  auto extra = synthetic_party_items(setup.seed, setup.synthetic_items);
  env.catalog.insert(env.catalog.end(), extra.begin(), extra.end());
  Rng rng(derive_seed(setup.seed, std::string_view("catalog_order")));
  for (std::size_t i = env.catalog.size(); i > 1; --i) std::swap(env.catalog[i - 1], env.catalog[rng.below(i)]);
  env.policy = setup.policy;

  PartyPlanner p;
  p.seed = setup.seed;
  p.routing = setup.routing;
  p.opening = setup.transcript.last_user_text();
  p.mas = std::make_unique<MasRuntime>(Schemata(setup.schemata), std::move(env));

  p.session = std::make_shared<PartySession>();
  p.session->transcript = setup.transcript;
  p.session->env = p.mas->env_reader();
  p.session->L = setup.L;
  p.session->K = setup.K;
  p.session->per_category = setup.per_category;
  for (const auto& m : setup.memory) p.session->memory.upsert_fact(m.fact, m.label, m.timestamp);

  for (const auto& a : setup.agents) {
    ToolRegistry tools;
    for (const auto& t : a.tools) tools.add(make_party_tool(t, p.session));
    auto agent = std::make_unique<Agent>(a.id, LanguageCore::scripted(a.rules),
                                         std::set<std::string>(a.inputs.begin(), a.inputs.end()),
                                         std::set<std::string>(a.outputs.begin(), a.outputs.end()), std::move(tools),
                                         setup.agent_config);
    p.mas->add_agent(std::move(agent), a.dormant);
  }
  for (const auto& [from, to] : setup.channels) p.mas->toggle_channel(from, to, true);
  return p;
}

PartyOutcome run_party_planner(PartyPlanner& planner) {
  PartyOutcome out;
  const std::string first_kind = planner.routing.empty() ? "query" : planner.routing.front().kind;
  out.episode = planner.mas->run_episode(planner.routing, {first_kind, planner.opening}, planner.seed);
  out.constraints = planner.session->constraints;
  if (!out.episode.error && !out.episode.trace.empty()) {
    const auto& last = out.episode.trace.back();
    if (last.kind == "ranked_list" && last.payload.contains("items")) out.ranked = ranked_from_json(last.payload["items"]);
  }
  return out;
}

}  // namespace agentrec
