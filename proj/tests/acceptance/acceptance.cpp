// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is the number of failing criteria (0 when all pass).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "agentrec/error.hpp"
#include "agentrec/mas.hpp"
#include "agentrec/memory.hpp"
#include "agentrec/party.hpp"
#include "agentrec/pipelines.hpp"
#include "agentrec/reliability.hpp"
#include "agentrec/scenario.hpp"
#include "agentrec/sim.hpp"
#include "oracles/oracles.hpp"

using namespace agentrec;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

const fs::path kScenarios = fs::path(AGENTREC_SOURCE_DIR) / "scenarios";

std::size_t whitespace_len(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  std::size_t n = 0;
  while (in >> w) ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict knapsack_exactness() {
  Rng rng(1001);
  int ok = 0;
  for (int round = 0; round < 200; ++round) {
    MemoryStore s;
    std::size_t n = 1 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i) s.upsert_text(oracle::random_phrase(rng, 1, 6), MemoryLabel::EPI, i);
    std::string q = oracle::random_phrase(rng, 1, 4);
    std::vector<KnapsackEntry> entries;
    std::size_t total = 0;
    for (const auto& m : s.items()) {
      entries.push_back({relevance_score(q, m), whitespace_len(m.canonical_text())});
      total += entries.back().length;
    }
    std::size_t B = rng.below(total + 2);
    auto w = regulate_context(s, q, B);
    if (w.total_tokens <= B && w.total_score == oracle::brute_force_knapsack(entries, B) && !w.approximate) ++ok;
  }
  return {ok == 200, std::to_string(ok) + "/200 instances optimal and within budget"};
}

Verdict retrieval_oracle() {
  Rng rng(1002);
  int ok = 0;
  for (int round = 0; round < 100; ++round) {
    MemoryStore s;
    std::size_t n = 1 + rng.below(200);
    for (std::size_t i = 0; i < n; ++i) {
      auto label = static_cast<MemoryLabel>(rng.below(3));
      if (rng.bernoulli(0.5)) {
        s.upsert_fact({"slot" + std::to_string(rng.below(60)), oracle::random_phrase(rng, 1, 3)}, label, rng.below(20));
      } else {
        s.upsert_text(oracle::random_phrase(rng, 1, 5), label, rng.below(20));
      }
    }
    std::string q = oracle::random_phrase(rng, 1, 3);
    std::size_t k = 1 + rng.below(15);
    std::vector<std::string> got;
    for (const auto& r : retrieve_topk(s, q, k)) got.push_back(r.item.canonical_text());
    if (got == oracle::exhaustive_topk(s, q, k)) ++ok;
  }
  return {ok == 100, std::to_string(ok) + "/100 stores match the exhaustive sort"};
}

Verdict memory_round_trip() {
  Rng rng(1003);
  int ok = 0;
  for (int i = 0; i < 1000; ++i) {
    MemoryStore s;
    Fact f{oracle::vocabulary()[rng.below(30)] + "_" + std::to_string(i), oracle::random_phrase(rng, 1, 5)};
    s.upsert_fact(f, static_cast<MemoryLabel>(rng.below(3)), rng.below(100));
    auto top = retrieve_topk(s, f.text(), 1);
    if (top.size() == 1 && top[0].score == 1.0 && top[0].item.slot == f.slot) ++ok;
  }
  return {ok == 1000, std::to_string(ok) + "/1000 facts self-retrieve at score 1.0, rank 1"};
}

Verdict communication_soundness() {
  Schemata schemata;
  schemata.add({"hop", {"text"}});
  Rng rng(1004);
  std::size_t sends = 0, leaks = 0, closed = 0, wrong = 0;
  for (int round = 0; round < 20; ++round) {
    MasRuntime mas(schemata);
    const std::size_t n = 2 + rng.below(7);
    for (std::size_t i = 0; i < n; ++i) {
      mas.add_agent(std::make_unique<Agent>("a" + std::to_string(i),
                                            LanguageCore::scripted({{"*", "{input}"}}), std::set<std::string>{"hop"},
                                            std::set<std::string>{"hop"}));
    }
    std::vector<std::vector<bool>> open(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j && rng.bernoulli(0.4)) {
          mas.toggle_channel("a" + std::to_string(i), "a" + std::to_string(j), true);
          open[i][j] = true;
        }
      }
    }
    for (int k = 0; k < 500; ++k, ++sends) {
      std::size_t i = rng.below(n), j = rng.below(n);
      if (i != j && rng.bernoulli(0.05)) {
        bool v = rng.bernoulli(0.5);
        mas.toggle_channel("a" + std::to_string(i), "a" + std::to_string(j), v);
        open[i][j] = v;
      }
      std::string to = "a" + std::to_string(j);
      auto before = mas.inbox(to).size();
      Message m;
      m.from = "a" + std::to_string(i);
      m.to = {to};
      m.kind = "hop";
      m.payload = {{"text", "m"}};
      try {
        mas.send_message(m);
        if (!open[i][j]) ++leaks;
      } catch (const Error& e) {
        if (open[i][j] || e.code() != Errc::ChannelClosed) ++wrong;
        if (mas.inbox(to).size() != before) ++leaks;
        ++closed;
      }
    }
  }
  return {sends == 10000 && leaks == 0 && wrong == 0,
          std::to_string(sends) + " sends, " + std::to_string(closed) + " ChannelClosed, " + std::to_string(leaks) +
              " closed-channel deliveries, " + std::to_string(wrong) + " misraised"};
}

Verdict party_blueprint() {
  auto config = load_scenario(kScenarios / "party_planner.json");
  const std::vector<std::string> expected = {"query",    "episode_list", "validated_episodes",
                                             "spawn",    "item_set",     "item_set",
                                             "item_set", "validated_set", "ranked_list"};
  int ok = 0;
  std::size_t gluten = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    PartySetup setup = config.interactive;
    setup.seed = seed;
    auto planner = build_party_planner(setup);
    auto outcome = run_party_planner(planner);
    std::vector<std::string> kinds;
    for (const auto& m : outcome.episode.trace) kinds.push_back(m.kind);
    std::size_t bad = 0;
    for (const auto& e : outcome.ranked.entries) {
      const CatalogItem* it = planner.mas->env().find_item(e.id);
      if (it == nullptr || it->has_tag("gluten")) ++bad;
    }
    gluten += bad;
    if (!outcome.episode.error && kinds == expected && !outcome.ranked.entries.empty() && bad == 0) ++ok;
  }
  return {ok == 100, std::to_string(ok) + "/100 seeds with the expected kinds, " + std::to_string(gluten) +
                         " gluten-tagged items ranked"};
}

Verdict error_propagation() {
  std::vector<double> p = {0.1, 0.1};
  double closed = propagation_probability(p);
  AgentGraph chain{{"a", "b"}, p, {{"a", "b"}}};
  ValidityOracle oracle{{{"a", true}, {"b", true}}};
  double mc = simulate_error_cascade(chain, oracle, 1000000, 2024).rate();
  Rng rng(1006);
  int monotone = 0;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v(1 + rng.below(8));
    for (double& x : v) x = rng.uniform();
    auto bumped = v;
    std::size_t k = rng.below(v.size());
    bumped[k] = v[k] + (1.0 - v[k]) * rng.uniform();
    double a = propagation_probability(v), b = propagation_probability(bumped);
    bool others_below_one = true;
    for (std::size_t j = 0; j < v.size(); ++j) others_below_one = others_below_one && (j == k || v[j] < 1.0);
    if (b >= a && (!others_below_one || bumped[k] == v[k] || b > a)) ++monotone;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "closed form %.6f, Monte Carlo %.6f (|diff| %.6f), %d/500 monotone", closed, mc,
                std::abs(closed - mc), monotone);
  return {std::abs(closed - 0.19) < 1e-12 && std::abs(closed - mc) <= 0.002 && monotone == 500, buf};
}

Verdict simulator_calibration() {
  Environment env;
  env.catalog = {{"x", "rattan peacock chair", "chair", {}, 1.0, std::nullopt},
                 {"y", "chrome glass lamp", "lamp", {}, 1.0, std::nullopt}};
  auto key = embed_text(env.catalog[0].text()).values;
  std::size_t free_dim = 0;
  while (key[free_dim] != 0.0) ++free_dim;
  std::vector<double> theta(key.size());
  for (std::size_t i = 0; i < key.size(); ++i) theta[i] = 0.6 * key[i];
  theta[free_dim] = 0.8;
  auto sim = UserSimulator::make("u", "c", theta, 0.0, ActionSpace::SelectNotSelect, 1);
  Rng rng(1007);
  const int n = 100000;
  int selects = 0;
  RankedList recs{{{"x", 1.0}}};
  for (int i = 0; i < n; ++i) selects += simulate_action(sim, recs, env, rng) == UserAction::Select;
  double freq = selects / static_cast<double>(n);
  double sigma = std::sqrt(0.6 * 0.4 / n);

  RunOptions o;
  o.horizon = 10;
  std::vector<UserSimulator> always = {UserSimulator::make("a", "c", key, 0.0, ActionSpace::SelectNotSelect, 2)};
  std::vector<double> ortho(key.size(), 0.0);
  ortho[free_dim] = 1.0;
  std::vector<UserSimulator> never = {UserSimulator::make("n", "c", ortho, 0.0, ActionSpace::SelectNotSelect, 3)};
  double psi_t = evaluate(run_sessions(constant_recommender("x"), always, env, o)).psi_hat;
  double psi_0 = evaluate(run_sessions(constant_recommender("x"), never, env, o)).psi_hat;
  char buf[160];
  std::snprintf(buf, sizeof buf, "frequency %.5f vs 0.6 (3 sigma %.5f), psi %.1f for T=10, psi %.1f for refusal", freq,
                3 * sigma, psi_t, psi_0);
  return {std::abs(freq - 0.6) <= 3 * sigma && psi_t == 10.0 && psi_0 == 0.0, buf};
}

Verdict entropy_bounds() {
  Environment env;
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) {
    env.catalog.push_back({"i" + std::to_string(i), "item " + std::to_string(i), "c", {}, 1.0, std::nullopt});
    ids.push_back(env.catalog.back().id);
  }
  std::vector<UserSimulator> sims = {UserSimulator::make("u", "c", theta_from_seed(1), 0.1,
                                                         ActionSpace::SelectNotSelect, 1)};
  RunOptions o;
  o.horizon = 16;
  double uniform = evaluate(run_sessions(rotation_recommender(ids), sims, env, o)).diversity_entropy;
  double single = evaluate(run_sessions(constant_recommender("i3"), sims, env, o)).diversity_entropy;
  char buf[160];
  std::snprintf(buf, sizeof buf, "rotation entropy %.12f vs ln 8 %.12f, single-item entropy %.1f", uniform,
                std::log(8.0), single);
  return {std::abs(uniform - std::log(8.0)) <= 1e-9 && single == 0.0, buf};
}

Verdict compliance() {
  BrandPolicy p;
  p.banned_terms = {"guaranteed", "miracle cure", "cheap"};
  p.required_disclosures = {{"sponsored", "paid partnership"}};
  p.tone_allowlist = std::set<std::string>{"warm", "playful"};
  std::vector<std::pair<std::string, std::string>> disc = {{"sponsored", "paid partnership"}};
  const std::vector<std::string> extra = {"guaranteed", "miracle", "cure", "cheap", "sponsored", "paid",
                                          "partnership", "[tone:warm]", "[tone:grim]", "cheaper", "CHEAP!"};
  Rng rng(1009);
  int agree = 0, unsafe = 0;
  for (int set = 0; set < 10000; ++set) {
    std::vector<Candidate> cands;
    for (std::size_t c = 0, m = 1 + rng.below(6); c < m; ++c) {
      std::string text;
      for (std::size_t k = 0, n = 1 + rng.below(7); k < n; ++k) {
        if (k) text += " ";
        text += rng.bernoulli(0.3) ? extra[rng.below(extra.size())] : oracle::vocabulary()[rng.below(30)];
      }
      cands.push_back({text, static_cast<double>(rng.below(5)) / 4.0});
    }
    std::optional<std::string> expect;
    double best = -1.0;
    for (const auto& c : cands) {
      if (!oracle::reference_compliant(c.text, p.banned_terms, disc, p.tone_allowlist)) continue;
      if (c.score > best || (c.score == best && c.text < *expect)) {
        best = c.score;
        expect = c.text;
      }
    }
    std::optional<std::string> got;
    try {
      got = constrained_select(cands, p);
    } catch (const Error& e) {
      if (e.code() != Errc::NoCompliantCandidate) ++unsafe;
    }
    if (got && !oracle::reference_compliant(*got, p.banned_terms, disc, p.tone_allowlist)) ++unsafe;
    if (got == expect) ++agree;
  }
  return {unsafe == 0 && agree == 10000, std::to_string(unsafe) + " non-compliant selections, " +
                                             std::to_string(agree) + "/10000 agree with the reference"};
}

Verdict determinism() {
  int ok = 0, total = 0;
  for (const char* name : {"party_planner", "user_sim", "multimodal", "explain", "cascade"}) {
    ++total;
    fs::path a = fs::temp_directory_path() / (std::string("agentrec_accept_a_") + name);
    fs::path b = fs::temp_directory_path() / (std::string("agentrec_accept_b_") + name);
    fs::remove_all(a);
    fs::remove_all(b);
    fs::path config = kScenarios / (std::string(name) + ".json");
    auto ra = run_scenario(config, {a, std::nullopt, ReportFormat::Table});
    auto rb = run_scenario(config, {b, std::nullopt, ReportFormat::Table});
    if (ra.exit_code == 0 && rb.exit_code == 0 && slurp(a / "trace.jsonl") == slurp(b / "trace.jsonl") &&
        slurp(a / "report.jsonl") == slurp(b / "report.jsonl") && !slurp(a / "trace.jsonl").empty()) {
      ++ok;
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " scenarios byte-identical on re-run"};
}

Verdict explanation_consistency() {
  BrandPolicy p;
  p.banned_terms = {"guaranteed", "unbeatable"};
  Rng rng(1011);
  int rejected = 0, accepted = 0;
  for (int i = 0; i < 100; ++i) {
    RankedList recs;
    for (std::size_t k = 0, n = 1 + rng.below(4); k < n; ++k) {
      recs.entries.push_back({"item_" + std::to_string(k) + "_" + std::to_string(i), 1.0 - 0.1 * k});
    }
    MemoryStore ctx;
    Fact f{oracle::vocabulary()[rng.below(30)] + "_pref", oracle::vocabulary()[rng.below(30)]};
    ctx.upsert_fact(f, MemoryLabel::EPI, 1);
    auto clean = generate_explanation(recs, ctx.items());
    if (i < 50) {
      accepted += consistency_check(clean, recs, ctx.items(), p);
      continue;
    }
    Explanation bad = clean;
    if (i % 2 == 0) {
      bad.text += " Also consider [item:stray_" + std::to_string(i) + "].";
    } else {
      bad.text = (rng.bernoulli(0.5) ? "Guaranteed: " : "An unbeatable choice. ") + bad.text;
    }
    rejected += !consistency_check(bad, recs, ctx.items(), p);
  }
  return {rejected == 50 && accepted == 50,
          std::to_string(rejected) + "/50 bad fixtures rejected, " + std::to_string(accepted) + "/50 clean accepted"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
    double limit_s;  // 0 means no time bound
  };
  const std::vector<Criterion> criteria = {
      {1, "knapsack exactness", knapsack_exactness, 10},
      {2, "retrieval oracle", retrieval_oracle, 10},
      {3, "memory round-trip", memory_round_trip, 0},
      {4, "communication soundness", communication_soundness, 0},
      {5, "party-planner blueprint", party_blueprint, 30},
      {6, "error-propagation agreement", error_propagation, 60},
      {7, "simulator calibration", simulator_calibration, 0},
      {8, "entropy bounds", entropy_bounds, 0},
      {9, "compliance", compliance, 0},
      {10, "determinism", determinism, 0},
      {11, "explanation consistency", explanation_consistency, 0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      v.pass = false;
      v.detail += "; exceeded the time limit";
    }
    failures += !v.pass;
    std::printf("%s %2d %-28s %s (%.2f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
