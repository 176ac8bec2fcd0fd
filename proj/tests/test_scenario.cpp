#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "agentrec/error.hpp"
#include "agentrec/scenario.hpp"

using namespace agentrec;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kScenarios = fs::path(AGENTREC_SOURCE_DIR) / "scenarios";
const std::vector<std::string> kBundled = {"party_planner", "user_sim", "multimodal", "explain", "cascade"};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("agentrec_scenario_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Bundled config with catalog/policy paths made absolute, so it can live elsewhere.
json relocatable(const std::string& name) {
  json j = json::parse(slurp(kScenarios / (name + ".json")));
  for (const char* key : {"catalog", "policy"}) {
    if (j.contains(key)) j[key] = (kScenarios / j[key].get<std::string>()).string();
  }
  return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
  fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("sha256 matches the standard test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("bundled configs validate cleanly") {
  for (const auto& name : kBundled) {
    CAPTURE(name);
    CHECK(validate_config(kScenarios / (name + ".json")).empty());
  }
}

TEST_CASE("duplicate agent id yields one finding naming it") {
  auto dir = scratch("dup");
  json j = relocatable("party_planner");
  auto& inter = j["interactive"];
  inter["agents"].push_back(inter["agents"][1]);
  for (auto& row : inter["matrix"]) row.push_back(0);
  inter["matrix"].push_back(json(std::vector<int>(10, 0)));
  auto findings = validate_config(write_config(dir, j));
  REQUIRE(findings.size() == 1);
  CHECK(findings[0].field == "interactive.agents[9].id");
  CHECK(findings[0].rule.find("'epi'") != std::string::npos);
}

TEST_CASE("matrix dimension mismatch yields one finding") {
  auto dir = scratch("matrix");
  json j = relocatable("party_planner");
  j["interactive"]["matrix"].erase(8);
  auto findings = validate_config(write_config(dir, j));
  REQUIRE(findings.size() == 1);
  CHECK(findings[0].field == "interactive.matrix");
}

TEST_CASE("other config findings") {
  auto dir = scratch("findings");
  json j = relocatable("party_planner");
  j["interactive"]["matrix"][3][3] = 1;
  j["interactive"]["routing"][0]["to"] = "nobody";
  j["seed"] = -4;
  auto findings = validate_config(write_config(dir, j));
  CHECK(findings.size() == 3);

  json sim = relocatable("user_sim");
  sim["simulate"]["T"] = 0;
  sim["simulate"]["recommender"]["kind"] = "oracle";
  CHECK(validate_config(write_config(dir, sim)).size() == 2);

  json cas = relocatable("cascade");
  cas["cascade"]["edges"].push_back({"rank", "chat"});
  auto cyc = validate_config(write_config(dir, cas));
  REQUIRE(cyc.size() == 1);
  CHECK(cyc[0].field == "cascade.edges");

  std::ofstream(dir / "broken.json") << "{ not json";
  auto broken = validate_config(dir / "broken.json");
  REQUIRE(broken.size() == 1);
  CHECK(broken[0].field == "$");

  try {
    validate_config(dir / "absent.json");
    FAIL("expected Unreadable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Unreadable);
  }
}

TEST_CASE("missing catalog path is ConfigInvalid with a nonzero exit") {
  auto dir = scratch("nocat");
  json j = relocatable("party_planner");
  j["catalog"] = (dir / "missing_catalog.json").string();
  auto path = write_config(dir, j);
  auto findings = validate_config(path);
  REQUIRE(findings.size() == 1);
  CHECK(findings[0].field == "catalog");
  try {
    load_scenario(path);
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigInvalid);
  }
  auto out = run_scenario(path, {dir / "out", std::nullopt, ReportFormat::Table});
  CHECK(out.exit_code == 2);
  REQUIRE(out.error);
  CHECK(out.error->code == "ConfigInvalid");
  auto record = json::parse(slurp(dir / "out" / "error.json"));
  CHECK(record["error"]["code"] == "ConfigInvalid");
  CHECK(record["error"]["findings"].size() == 1);
  CHECK_FALSE(fs::exists(dir / "out" / "manifest.json"));
}

TEST_CASE("scenario errors exit 1 with an error record") {
  auto dir = scratch("fail");
  json j = relocatable("multimodal");
  j["multimodal"]["tau"] = 1.0;
  auto out = run_scenario(write_config(dir, j), {dir / "out", std::nullopt, ReportFormat::Table});
  CHECK(out.exit_code == 1);
  REQUIRE(out.error);
  CHECK(out.error->code == "NoCompatibleBundle");
  CHECK(fs::exists(dir / "out" / "error.json"));

  // a later success clears the stale record
  json ok = relocatable("multimodal");
  auto fixed = run_scenario(write_config(dir, ok), {dir / "out", std::nullopt, ReportFormat::Table});
  CHECK(fixed.exit_code == 0);
  CHECK_FALSE(fs::exists(dir / "out" / "error.json"));
}

TEST_CASE("every bundled scenario runs, is deterministic, and has a matching manifest") {
  for (const auto& name : kBundled) {
    CAPTURE(name);
    auto a = scratch(name + "_a"), b = scratch(name + "_b");
    fs::path config = kScenarios / (name + ".json");
    auto ra = run_scenario(config, {a, std::nullopt, ReportFormat::JsonLines});
    auto rb = run_scenario(config, {b, std::nullopt, ReportFormat::JsonLines});
    REQUIRE(ra.exit_code == 0);
    REQUIRE(rb.exit_code == 0);
    CHECK_FALSE(fs::exists(a / "error.json"));
    for (const char* f : {"trace.jsonl", "report.jsonl", "report.txt", "manifest.json"}) {
      CHECK(slurp(a / f) == slurp(b / f));
    }
    auto manifest = json::parse(slurp(a / "manifest.json"));
    CHECK(manifest["config_sha256"] == sha256_hex(slurp(config)));
    CHECK(manifest["artifacts"]["trace.jsonl"] == sha256_hex(slurp(a / "trace.jsonl")));
    CHECK(manifest["version"] == std::string(kVersion));
    CHECK(ra.stdout_text == slurp(a / "report.jsonl"));
  }
}

TEST_CASE("seed override reaches the manifest and the trace") {
  auto a = scratch("seed_a"), b = scratch("seed_b");
  fs::path config = kScenarios / "user_sim.json";
  run_scenario(config, {a, std::nullopt, ReportFormat::Table});
  run_scenario(config, {b, 12345u, ReportFormat::Table});
  CHECK(json::parse(slurp(b / "manifest.json"))["seed"] == 12345);
  CHECK(slurp(a / "trace.jsonl") != slurp(b / "trace.jsonl"));
}

TEST_CASE("persisted traces reload into equal structures") {
  auto config = load_scenario(kScenarios / "party_planner.json");
  auto artifacts = execute_scenario(config);
  std::istringstream lines(artifacts.trace_jsonl);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    auto m = message_from_json(json::parse(line));
    CHECK(message_to_json(m).dump() == line);
    ++n;
  }
  CHECK(n == 9);

  auto sim = execute_scenario(load_scenario(kScenarios / "user_sim.json"));
  std::istringstream sl(sim.trace_jsonl);
  std::size_t sessions = 0;
  while (std::getline(sl, line)) {
    auto t = session_from_json(json::parse(line));
    CHECK(session_to_json(t).dump() == line);
    ++sessions;
  }
  CHECK(sessions == 30);
}

TEST_CASE("explain scenario revises away the banned template") {
  auto artifacts = execute_scenario(load_scenario(kScenarios / "explain.json"));
  auto report = json::parse(artifacts.report_jsonl);
  CHECK(report["rounds"] == 2);
  CHECK(report["template"] == "because");
  CHECK(artifacts.trace_jsonl.find("guaranteed") != std::string::npos);
}

TEST_CASE("multimodal scenario bans leather for the vegan profile") {
  auto report = json::parse(execute_scenario(load_scenario(kScenarios / "multimodal.json")).report_jsonl);
  CHECK(report["compatible"] == true);
  for (const auto& item : report["bundle"]) {
    CHECK(item["id"] != "sofa_1");
    CHECK(item["id"] != "chair_4");
  }
}

}  // TEST_SUITE

TEST_SUITE("party") {

TEST_CASE("party planner message kinds and gluten-free ranking across seeds") {
  auto config = load_scenario(kScenarios / "party_planner.json");
  const std::vector<std::string> expected = {"query",    "episode_list", "validated_episodes",
                                             "spawn",    "item_set",     "item_set",
                                             "item_set", "validated_set", "ranked_list"};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    PartySetup setup = config.interactive;
    setup.seed = seed;
    auto planner = build_party_planner(setup);
    auto outcome = run_party_planner(planner);
    REQUIRE_FALSE(outcome.episode.error);
    std::vector<std::string> kinds;
    for (const auto& m : outcome.episode.trace) kinds.push_back(m.kind);
    CHECK(kinds == expected);
    REQUIRE_FALSE(outcome.ranked.entries.empty());
    CHECK(outcome.ranked.entries.size() <= setup.L);
    for (const auto& e : outcome.ranked.entries) {
      const CatalogItem* it = planner.mas->env().find_item(e.id);
      REQUIRE(it != nullptr);
      CHECK_FALSE(it->has_tag("gluten"));
    }
    CHECK(outcome.constraints.forbidden_tags.count("gluten") == 1);
  }
}

TEST_CASE("party tools") {
  auto session = std::make_shared<PartySession>();
  CHECK_THROWS_AS(make_party_tool("LayoutTool.generate", session), Error);
  CHECK(party_tool_names().size() == 8);
  auto items = synthetic_party_items(3, 50);
  CHECK(items == synthetic_party_items(3, 50));
  for (const auto& it : items) {
    if (it.category != "decor") CHECK((it.has_tag("gluten") || it.has_tag("gluten_free")));
  }
}

}  // TEST_SUITE
