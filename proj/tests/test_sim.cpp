#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "agentrec/embedding.hpp"
#include "agentrec/error.hpp"
#include "agentrec/sim.hpp"
#include "oracles/oracles.hpp"

using namespace agentrec;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an agentrec::Error");
  return Errc::InvalidArgument;
}

Environment furniture(std::size_t n) {
  static const std::vector<std::string> words = {"rattan chair", "linen sofa",  "oak table",    "jute rug",
                                                 "brass lamp",   "velvet pouf", "cane cabinet", "wool throw"};
  Environment env;
  for (std::size_t i = 0; i < n; ++i) {
    env.catalog.push_back({"f" + std::to_string(i), words[i % words.size()], "furniture", {}, 100.0, std::nullopt});
  }
  return env;
}

// theta at cosine `c` to the item's key: c * e + sqrt(1 - c^2) * (a basis vector outside e's support)
std::vector<double> theta_at_cosine(const CatalogItem& item, double c) {
  auto e = embed_text(item.text()).values;
  std::size_t j = 0;
  while (e[j] != 0.0) ++j;
  std::vector<double> theta(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) theta[i] = c * e[i];
  theta[j] = std::sqrt(1.0 - c * c);
  return theta;
}

UserSimulator sim_for(const std::vector<double>& theta, std::uint64_t seed, std::string cohort = "c",
                      double noise = 0.0) {
  return UserSimulator::make("u" + std::to_string(seed), std::move(cohort), theta, noise,
                             ActionSpace::SelectNotSelect, seed);
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("simulator construction") {
  auto s = sim_for({3.0, 4.0}, 1);
  CHECK(s.theta[0] == doctest::Approx(0.6));
  CHECK(s.theta[1] == doctest::Approx(0.8));
  CHECK(code_of([] { sim_for({0.0, 0.0}, 1); }) == Errc::InvalidArgument);
  CHECK(code_of([] { sim_for({1.0}, 1, "c", -0.1); }) == Errc::InvalidArgument);
  CHECK(code_of([] { sim_for({NAN}, 1); }) == Errc::InvalidArgument);
  auto t = theta_from_seed(5);
  double n = 0;
  for (double v : t) n += v * v;
  CHECK(n == doctest::Approx(1.0));
  CHECK(theta_from_seed(5) == t);
}

TEST_CASE("simulate_action degenerate policies") {
  auto env = furniture(4);
  const auto& top = env.catalog[0];
  RankedList recs{{{top.id, 1.0}}};
  auto always = sim_for(theta_from_text(top.text()), 1);
  auto never = sim_for(theta_at_cosine(top, 0.0), 2);
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    CHECK(simulate_action(always, recs, env, rng) == UserAction::Select);
    CHECK(simulate_action(never, recs, env, rng) == UserAction::NotSelect);
  }
  CHECK(code_of([&] { simulate_action(always, {}, env, rng); }) == Errc::InvalidArgument);
  CHECK(code_of([&] { simulate_action(always, {{{"nope", 1.0}}}, env, rng); }) == Errc::UnknownItem);
}

TEST_CASE("select frequency is calibrated") {
  auto env = furniture(2);
  const auto& top = env.catalog[1];
  RankedList recs{{{top.id, 1.0}}};
  for (double p : {0.6, 0.25, 0.9}) {
    auto sim = sim_for(theta_at_cosine(top, p), 11);
    CHECK(base_select_probability(sim, top) == doctest::Approx(p).epsilon(1e-12));
    Rng rng(derive_seed(77, std::string_view("calibration")));
    const int n = 100000;
    int selects = 0;
    for (int i = 0; i < n; ++i) selects += simulate_action(sim, recs, env, rng) == UserAction::Select;
    double freq = selects / static_cast<double>(n);
    CHECK(std::abs(freq - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("click-pass-purchase action space") {
  auto env = furniture(2);
  const auto& top = env.catalog[0];
  RankedList recs{{{top.id, 1.0}}};
  auto sim = UserSimulator::make("u", "c", theta_at_cosine(top, 0.5), 0.0, ActionSpace::ClickPassPurchase, 1);
  Rng rng(8);
  std::map<UserAction, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[simulate_action(sim, recs, env, rng)];
  CHECK(counts.count(UserAction::Select) == 0);
  CHECK(counts[UserAction::Pass] / double(n) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(counts[UserAction::Purchase] / double(n) == doctest::Approx(0.25).epsilon(0.04));
  CHECK(counts[UserAction::Click] / double(n) == doctest::Approx(0.25).epsilon(0.04));
}

TEST_CASE("noise is clamped and seeded") {
  auto env = furniture(2);
  const auto& top = env.catalog[0];
  RankedList recs{{{top.id, 1.0}}};
  auto sim = sim_for(theta_at_cosine(top, 0.5), 4, "c", 5.0);
  Rng a(9), b(9);
  for (int i = 0; i < 500; ++i) CHECK(simulate_action(sim, recs, env, a) == simulate_action(sim, recs, env, b));
}

TEST_CASE("run_sessions shapes and exact degenerate psi") {
  auto env = furniture(8);
  const auto& top = env.catalog[0];
  std::vector<UserSimulator> sims = {sim_for(theta_from_text(top.text()), 1)};
  RunOptions o;
  o.horizon = 1;
  auto one = run_sessions(constant_recommender(top.id), sims, env, o);
  REQUIRE(one.size() == 1);
  CHECK(one[0].steps.size() == 1);

  o.horizon = 10;
  auto ten = run_sessions(constant_recommender(top.id), sims, env, o);
  auto report = evaluate(ten);
  CHECK(report.psi_hat == 10.0);
  CHECK(report.ctr == 1.0);
  CHECK(report.diversity_entropy == 0.0);

  std::vector<UserSimulator> refusers = {sim_for(theta_at_cosine(top, 0.0), 2)};
  auto zero = evaluate(run_sessions(constant_recommender(top.id), refusers, env, o));
  CHECK(zero.psi_hat == 0.0);
  CHECK(zero.ctr == 0.0);

  o.horizon = 0;
  CHECK(code_of([&] { run_sessions(constant_recommender(top.id), sims, env, o); }) == Errc::InvalidArgument);
  CHECK(code_of([] { evaluate({}); }) == Errc::NoTraces);
}

TEST_CASE("uniform rotation has entropy ln 8") {
  auto env = furniture(8);
  std::vector<std::string> ids;
  for (const auto& it : env.catalog) ids.push_back(it.id);
  std::vector<UserSimulator> sims = {sim_for(theta_from_seed(1), 1), sim_for(theta_from_seed(2), 2)};
  RunOptions o;
  o.horizon = 16;
  auto traces = run_sessions(rotation_recommender(ids), sims, env, o);
  CHECK(std::abs(evaluate(traces).diversity_entropy - std::log(8.0)) <= 1e-9);
  o.horizon = 3;
  auto wide = run_sessions(rotation_recommender(ids, 8), sims, env, o);
  CHECK(std::abs(evaluate(wide).diversity_entropy - std::log(8.0)) <= 1e-9);
}

TEST_CASE("entropy stays within [0, ln catalog size]") {
  Rng rng(21);
  for (int round = 0; round < 50; ++round) {
    std::size_t n = 1 + rng.below(12);
    auto env = furniture(n);
    std::vector<std::string> ids;
    for (const auto& it : env.catalog) ids.push_back(it.id);
    std::vector<UserSimulator> sims = {sim_for(theta_from_seed(round), static_cast<std::uint64_t>(round), "c", 0.3)};
    RunOptions o;
    o.horizon = 1 + rng.below(20);
    Recommender rec = rng.bernoulli(0.5) ? rotation_recommender(ids, 1 + rng.below(3))
                                         : relevance_recommender(oracle::random_phrase(rng, 1, 3), 1 + rng.below(4));
    auto h = evaluate(run_sessions(rec, sims, env, o)).diversity_entropy;
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(n)) + 1e-12);
  }
}

TEST_CASE("memory carries across a simulator's sessions") {
  auto env = furniture(3);
  std::vector<UserSimulator> sims = {sim_for(theta_from_text("rattan chair linen sofa oak table"), 3)};
  RunOptions o;
  o.horizon = 1;
  o.sessions_per_simulator = 3;
  auto traces = run_sessions(relevance_recommender("chair sofa table", 1), sims, env, o);
  REQUIRE(traces.size() == 3);
  CHECK(sims[0].memory.items().size() >= 1);
  std::set<std::string> tops;
  for (const auto& t : traces) {
    if (t.steps[0].action && is_positive(*t.steps[0].action)) tops.insert(t.steps[0].recs.entries[0].id);
  }
  // an engaged item is never shown again
  std::size_t engaged = 0;
  for (const auto& t : traces) engaged += t.steps[0].action && is_positive(*t.steps[0].action);
  CHECK(tops.size() == engaged);
}

TEST_CASE("pipeline errors are recorded and the session continues") {
  auto env = furniture(2);
  int calls = 0;
  Recommender flaky = [&calls](const SessionState& s, const MemoryStore&, const Environment&) -> RankedList {
    ++calls;
    if (s.t == 1) fail(Errc::NoFeasibleItem, "nothing fits");
    if (s.t == 2) return {};
    return {{{"f0", 1.0}}};
  };
  std::vector<UserSimulator> sims = {sim_for(theta_from_seed(1), 1)};
  RunOptions o;
  o.horizon = 4;
  auto traces = run_sessions(flaky, sims, env, o);
  const auto& steps = traces[0].steps;
  REQUIRE(steps.size() == 4);
  CHECK(steps[1].error->code == "NoFeasibleItem");
  CHECK_FALSE(steps[1].action);
  CHECK_FALSE(steps[2].action);
  CHECK_FALSE(steps[2].error);
  CHECK(steps[3].action);
  CHECK(calls == 4);
}

TEST_CASE("traces are seed-determined and round-trip") {
  auto env = furniture(8);
  auto make = [] {
    std::vector<UserSimulator> sims;
    for (std::uint64_t i = 0; i < 6; ++i) sims.push_back(sim_for(theta_from_seed(i), i, i % 2 ? "odd" : "even", 0.2));
    return sims;
  };
  RunOptions o;
  o.horizon = 12;
  o.sessions_per_simulator = 3;
  auto s1 = make(), s2 = make();
  auto a = run_sessions(relevance_recommender("oak rattan", 3), s1, env, o);
  o.threads = 4;
  auto b = run_sessions(relevance_recommender("oak rattan", 3), s2, env, o);
  REQUIRE(a.size() == 18);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(session_to_json(a[i]).dump() == session_to_json(b[i]).dump());
    CHECK(session_from_json(nlohmann::json::parse(session_to_json(a[i]).dump())) == a[i]);
  }
}

TEST_CASE("diversity penalty reward") {
  auto env = furniture(2);
  std::vector<UserSimulator> sims = {sim_for(theta_from_seed(3), 3)};
  RunOptions o;
  o.horizon = 5;
  o.reward = RewardSpec::named("diversity_penalty", 0.5);
  auto traces = run_sessions(constant_recommender("f1"), sims, env, o);
  CHECK(evaluate(traces, o.reward).psi_hat == -2.0);
  CHECK(code_of([] { RewardSpec::named("mystery"); }) == Errc::InvalidArgument);
}

TEST_CASE("summarize_session") {
  SessionTrace empty;
  empty.steps.resize(3);
  auto z = summarize_session(empty);
  CHECK(z.selects == 0);
  CHECK(z.total_reward == 0.0);
  CHECK(z.distinct_items == 0);
  CHECK(z.first_action == "none");

  auto env = furniture(1);
  std::vector<UserSimulator> sims = {sim_for(theta_from_text(env.catalog[0].text()), 1)};
  RunOptions o;
  auto all = summarize_session(run_sessions(constant_recommender("f0"), sims, env, o)[0]);
  CHECK(all.selects == 10);
  CHECK(all.first_action == "Select");

  Rng rng(40);
  const std::vector<UserAction> acts = {UserAction::Select, UserAction::NotSelect, UserAction::Click, UserAction::Pass,
                                        UserAction::Purchase};
  for (int round = 0; round < 200; ++round) {
    SessionTrace t;
    t.cohort = "c";
    for (std::size_t k = 0, n = rng.below(15); k < n; ++k) {
      SessionStep s;
      for (std::size_t m = 0, l = rng.below(3); m < l; ++m) s.recs.entries.push_back({"i" + std::to_string(rng.below(6)), 0.0});
      if (rng.bernoulli(0.8)) s.action = acts[rng.below(acts.size())];
      s.reward = static_cast<double>(rng.below(5)) - 1.0;
      t.steps.push_back(s);
    }
    // recount
    double reward = 0;
    std::size_t pos = 0;
    std::set<std::string> ids;
    std::vector<std::string> names;
    for (const auto& s : t.steps) {
      reward += s.reward;
      for (const auto& e : s.recs.entries) ids.insert(e.id);
      if (s.action) {
        names.emplace_back(action_name(*s.action));
        pos += *s.action == UserAction::Select || *s.action == UserAction::Click || *s.action == UserAction::Purchase;
      }
    }
    auto got = summarize_session(t);
    CHECK(got.steps == t.steps.size());
    CHECK(got.total_reward == reward);
    CHECK(got.selects == pos);
    CHECK(got.distinct_items == ids.size());
    CHECK(got.first_action == (names.empty() ? "none" : names.front()));
    CHECK(got.last_action == (names.empty() ? "none" : names.back()));
  }
}

TEST_CASE("aggregate_report") {
  CHECK(code_of([] { aggregate_report({}, ReportFormat::Table); }) == Errc::NoSummaries);
  SessionSummary one{"u1", "solo", 0, 10, 4.0, 4, 2, "Select", "NotSelect"};
  auto table = aggregate_report({one}, ReportFormat::Table);
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
  CHECK(table.rfind("cohort", 0) == 0);
  auto lines = aggregate_report({one}, ReportFormat::JsonLines);
  CHECK(lines == "{\"cohort\":\"solo\",\"sessions\":1,\"mean_reward\":4.0,\"reward_hw\":0.0,\"mean_selects\":4.0,"
                 "\"selects_hw\":0.0,\"mean_distinct\":2.0,\"distinct_hw\":0.0}\n");

  Rng rng(5);
  std::vector<SessionSummary> many;
  for (int i = 0; i < 300; ++i) {
    SessionSummary s;
    s.cohort = rng.bernoulli(0.5) ? "zeta" : "alpha";
    s.total_reward = rng.uniform() * 10.0;
    s.selects = rng.below(10);
    s.distinct_items = rng.below(5);
    many.push_back(s);
  }
  auto rows = cohort_rows(many);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].cohort == "alpha");
  CHECK(rows[1].cohort == "zeta");
  for (const auto& r : rows) {
    long double sum = 0, sq = 0;
    std::size_t n = 0;
    for (const auto& s : many) {
      if (s.cohort != r.cohort) continue;
      sum += s.total_reward;
      ++n;
    }
    long double mean = sum / n;
    for (const auto& s : many) {
      if (s.cohort == r.cohort) sq += (s.total_reward - mean) * (s.total_reward - mean);
    }
    CHECK(r.sessions == n);
    CHECK(std::abs(r.mean_reward - static_cast<double>(mean)) <= 1e-12);
    CHECK(std::abs(r.reward_halfwidth - static_cast<double>(1.96L * std::sqrt(sq / (n - 1)) / std::sqrt((long double)n))) <=
          1e-12);
  }
  CHECK(aggregate_report(many, ReportFormat::JsonLines) == aggregate_report(many, ReportFormat::JsonLines));
  CHECK(aggregate_report(many, ReportFormat::Table) == aggregate_report(many, ReportFormat::Table));
  CHECK(parse_report_format("jsonlines") == ReportFormat::JsonLines);
}

}  // TEST_SUITE
