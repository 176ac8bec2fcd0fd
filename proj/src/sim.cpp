#include "agentrec/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <thread>
#include <variant>

#include "agentrec/embedding.hpp"
#include "agentrec/error.hpp"

namespace agentrec {

namespace {

using nlohmann::json;

constexpr std::string_view kShownPrefix = "shown_";

std::string shown_slot(std::string_view id) { return std::string(kShownPrefix) + std::string(id); }

json state_to_json(const SessionState& s) {
  return {{"session", s.session}, {"t", s.t}, {"positives_so_far", s.positives_so_far}, {"last_top", s.last_top}};
}

SessionState state_from_json(const json& j) {
  return {j.at("session").get<std::size_t>(), j.at("t").get<std::size_t>(), j.at("positives_so_far").get<std::size_t>(),
          j.at("last_top").get<std::string>()};
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace

std::string_view action_name(UserAction a) {
  switch (a) {
    case UserAction::Select: return "Select";
    case UserAction::NotSelect: return "NotSelect";
    case UserAction::Click: return "Click";
    case UserAction::Pass: return "Pass";
    case UserAction::Purchase: return "Purchase";
  }
  return "NotSelect";
}

UserAction parse_action(std::string_view name) {
  for (auto a : {UserAction::Select, UserAction::NotSelect, UserAction::Click, UserAction::Pass, UserAction::Purchase}) {
    if (action_name(a) == name) return a;
  }
  fail(Errc::InvalidArgument, "unknown user action '" + std::string(name) + "'");
}

std::string_view action_space_name(ActionSpace s) {
  return s == ActionSpace::SelectNotSelect ? "select" : "click_pass_purchase";
}

ActionSpace parse_action_space(std::string_view name) {
  if (name == "select") return ActionSpace::SelectNotSelect;
  if (name == "click_pass_purchase") return ActionSpace::ClickPassPurchase;
  fail(Errc::InvalidArgument, "unknown action space '" + std::string(name) + "'");
}

bool is_positive(UserAction a) {
  return a == UserAction::Select || a == UserAction::Click || a == UserAction::Purchase;
}

UserSimulator UserSimulator::make(std::string id, std::string cohort, std::vector<double> theta, double noise_scale,
                                  ActionSpace space, std::uint64_t seed) {
  if (!std::isfinite(noise_scale) || noise_scale < 0.0) fail(Errc::InvalidArgument, "noise scale must be finite and >= 0");
  double norm = 0.0;
  for (double v : theta) {
    if (!std::isfinite(v)) fail(Errc::InvalidArgument, "theta has a non-finite coordinate");
    norm += v * v;
  }
  if (norm == 0.0) fail(Errc::InvalidArgument, "theta must be non-zero");
  norm = std::sqrt(norm);
  for (double& v : theta) v /= norm;
  UserSimulator sim;
  sim.id = std::move(id);
  sim.cohort = std::move(cohort);
  sim.theta = std::move(theta);
  sim.noise_scale = noise_scale;
  sim.action_space = space;
  sim.seed = seed;
  return sim;
}

std::vector<double> theta_from_seed(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return normalized(std::move(v)).values;
}

std::vector<double> theta_from_text(std::string_view text) {
  auto e = embed_text(text);
  if (e.is_zero()) fail(Errc::InvalidArgument, "theta text has no tokens");
  return e.values;
}

double base_select_probability(const UserSimulator& sim, const CatalogItem& top) {
  return std::max(0.0, cosine(sim.theta, embed_text(top.text()).values));
}

UserAction simulate_action(const UserSimulator& sim, const RankedList& recs, const Environment& env, Rng& rng) {
  if (recs.entries.empty()) fail(Errc::InvalidArgument, "simulate_action needs a non-empty list");
  const CatalogItem* top = env.find_item(recs.entries.front().id);
  if (top == nullptr) fail(Errc::UnknownItem, "no catalog item '" + recs.entries.front().id + "'");
  double p = base_select_probability(sim, *top) + sim.noise_scale * rng.normal();
  p = std::clamp(p, 0.0, 1.0);
  bool engaged = rng.uniform() < p;
  if (sim.action_space == ActionSpace::SelectNotSelect) return engaged ? UserAction::Select : UserAction::NotSelect;
  if (!engaged) return UserAction::Pass;
  return rng.uniform() < p ? UserAction::Purchase : UserAction::Click;
}

json session_to_json(const SessionTrace& trace) {
  json steps = json::array();
  for (const auto& s : trace.steps) {
    json j = {{"state", state_to_json(s.state)},
              {"recs", ranked_to_json(s.recs)},
              {"action", s.action ? json(action_name(*s.action)) : json(nullptr)},
              {"repeat", s.repeat},
              {"reward", s.reward}};
    if (s.error) j["error"] = {{"code", s.error->code}, {"message", s.error->message}};
    steps.push_back(std::move(j));
  }
  return {{"simulator", trace.simulator_id},
          {"cohort", trace.cohort},
          {"session", trace.session},
          {"seed", trace.seed},
          {"steps", std::move(steps)}};
}

SessionTrace session_from_json(const json& j) {
  SessionTrace t;
  t.simulator_id = j.at("simulator").get<std::string>();
  t.cohort = j.at("cohort").get<std::string>();
  t.session = j.at("session").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& s : j.at("steps")) {
    SessionStep step;
    step.state = state_from_json(s.at("state"));
    step.recs = ranked_from_json(s.at("recs"));
    if (!s.at("action").is_null()) step.action = parse_action(s.at("action").get<std::string>());
    step.repeat = s.at("repeat").get<bool>();
    step.reward = s.at("reward").get<double>();
    if (s.contains("error")) {
      step.error = EpisodeError{s["error"].at("code").get<std::string>(), s["error"].at("message").get<std::string>()};
    }
    t.steps.push_back(std::move(step));
  }
  return t;
}

double RewardSpec::operator()(const SessionStep& step) const {
  double g = 0.0;
  if (step.action && is_positive(*step.action)) g += select_weight;
  if (step.repeat) g -= repeat_penalty;
  return g;
}

RewardSpec RewardSpec::named(std::string_view name, double lambda) {
  if (!std::isfinite(lambda) || lambda < 0.0) fail(Errc::InvalidArgument, "reward lambda must be finite and >= 0");
  if (name == "select") return {"select", 1.0, 0.0};
  if (name == "diversity_penalty") return {"diversity_penalty", 0.0, lambda};
  fail(Errc::InvalidArgument, "unknown reward '" + std::string(name) + "'");
}

Recommender rotation_recommender(std::vector<std::string> ids, std::size_t L) {
  if (ids.empty() || L == 0) fail(Errc::InvalidArgument, "rotation needs ids and L >= 1");
  return [ids = std::move(ids), L](const SessionState& s, const MemoryStore&, const Environment&) {
    RankedList out;
    std::size_t n = std::min(L, ids.size());
    for (std::size_t k = 0; k < n; ++k) {
      out.entries.push_back({ids[(s.t + k) % ids.size()], 1.0 / static_cast<double>(k + 1)});
    }
    return out;
  };
}

Recommender constant_recommender(std::string id) {
  return [id = std::move(id)](const SessionState&, const MemoryStore&, const Environment&) {
    return RankedList{{{id, 1.0}}};
  };
}

Recommender relevance_recommender(std::string query, std::size_t L) {
  if (L == 0) fail(Errc::InvalidArgument, "L must be >= 1");
  return [query = std::move(query), L](const SessionState&, const MemoryStore& memory, const Environment& env) {
    std::vector<CatalogItem> pool;
    for (const auto& item : env.catalog) {
      const MemoryItem* seen = memory.find(shown_slot(item.id), MemoryLabel::EPI);
      if (seen != nullptr && is_positive(parse_action(std::get<std::string>(seen->value)))) continue;
      pool.push_back(item);
    }
    if (pool.empty()) fail(Errc::NoFeasibleItem, "every item was already taken");
    return rank_catalog(pool, {}, query, L);
  };
}

namespace {

SessionTrace run_one(const Recommender& rec, UserSimulator& sim, const Environment& env, const RunOptions& o,
                     std::size_t session) {
  SessionTrace trace;
  trace.simulator_id = sim.id;
  trace.cohort = sim.cohort;
  trace.session = session;
  trace.seed = derive_seed(sim.seed, static_cast<std::uint64_t>(session));
  Rng rng(trace.seed);
  std::set<std::string> shown;
  SessionState state{session, 0, 0, ""};
  for (std::size_t t = 0; t < o.horizon; ++t) {
    state.t = t;
    SessionStep step;
    step.state = state;
    try {
      step.recs = rec(state, sim.memory, env);
      if (!step.recs.entries.empty()) {
        const std::string& top = step.recs.entries.front().id;
        step.action = simulate_action(sim, step.recs, env, rng);
        step.repeat = !shown.insert(top).second;
        Timestamp ts = static_cast<Timestamp>(session * o.horizon + t + 1);
        sim.memory.upsert_fact({shown_slot(top), std::string(action_name(*step.action))}, MemoryLabel::EPI, ts);
        if (is_positive(*step.action)) ++state.positives_so_far;
        state.last_top = top;
      }
    } catch (const Error& e) {
      step.recs = {};
      step.action.reset();
      step.error = EpisodeError{std::string(e.name()), e.what()};
    }
    step.reward = o.reward(step);
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

}  // namespace

std::vector<SessionTrace> run_sessions(const Recommender& recommender, std::vector<UserSimulator>& sims,
                                       const Environment& env, const RunOptions& options) {
  if (options.horizon == 0) fail(Errc::InvalidArgument, "horizon T must be >= 1");
  if (!recommender) fail(Errc::InvalidArgument, "no recommender");
  std::vector<std::vector<SessionTrace>> per_sim(sims.size());
  auto work = [&](std::size_t i) {
    for (std::size_t s = 0; s < options.sessions_per_simulator; ++s) {
      per_sim[i].push_back(run_one(recommender, sims[i], env, options, s));
    }
  };
  unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(sims.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < sims.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < sims.size(); i += threads) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  std::vector<SessionTrace> out;
  for (auto& v : per_sim) {
    for (auto& t : v) out.push_back(std::move(t));
  }
  return out;
}

double halfwidth95(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
}

double diversity_entropy(const std::vector<SessionTrace>& traces) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& t : traces) {
    for (const auto& s : t.steps) {
      for (const auto& e : s.recs.entries) {
        ++counts[e.id];
        ++total;
      }
    }
  }
  double h = 0.0;
  for (const auto& [id, c] : counts) {
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return std::max(0.0, h);
}

EvalReport evaluate(const std::vector<SessionTrace>& traces, const RewardSpec& g) {
  if (traces.empty()) fail(Errc::NoTraces, "evaluate needs at least one trace");
  EvalReport r;
  r.sessions = traces.size();
  std::vector<double> totals;
  std::size_t positives = 0;
  for (const auto& t : traces) {
    double total = 0.0;
    for (const auto& s : t.steps) {
      total += g(s);
      if (s.action) {
        ++r.acted_steps;
        if (is_positive(*s.action)) ++positives;
      }
    }
    totals.push_back(total);
  }
  r.psi_hat = mean_of(totals);
  r.psi_halfwidth = halfwidth95(totals);
  if (r.acted_steps > 0) {
    r.ctr = static_cast<double>(positives) / static_cast<double>(r.acted_steps);
    r.ctr_halfwidth = 1.96 * std::sqrt(r.ctr * (1.0 - r.ctr) / static_cast<double>(r.acted_steps));
  }
  r.diversity_entropy = diversity_entropy(traces);
  return r;
}

nlohmann::json eval_to_json(const EvalReport& r) {
  return {{"psi_hat", r.psi_hat},
          {"psi_halfwidth", r.psi_halfwidth},
          {"ctr", r.ctr},
          {"ctr_halfwidth", r.ctr_halfwidth},
          {"diversity_entropy", r.diversity_entropy},
          {"sessions", r.sessions},
          {"acted_steps", r.acted_steps}};
}

SessionSummary summarize_session(const SessionTrace& trace) {
  SessionSummary s;
  s.simulator_id = trace.simulator_id;
  s.cohort = trace.cohort;
  s.session = trace.session;
  s.steps = trace.steps.size();
  std::set<std::string> distinct;
  for (const auto& step : trace.steps) {
    s.total_reward += step.reward;
    for (const auto& e : step.recs.entries) distinct.insert(e.id);
    if (!step.action) continue;
    if (is_positive(*step.action)) ++s.selects;
    if (s.first_action == "none") s.first_action = action_name(*step.action);
    s.last_action = action_name(*step.action);
  }
  s.distinct_items = distinct.size();
  return s;
}

std::vector<CohortRow> cohort_rows(const std::vector<SessionSummary>& summaries) {
  if (summaries.empty()) fail(Errc::NoSummaries, "no session summaries to aggregate");
  std::map<std::string, std::vector<const SessionSummary*>> groups;
  for (const auto& s : summaries) groups[s.cohort].push_back(&s);
  std::vector<CohortRow> rows;
  for (const auto& [cohort, members] : groups) {
    std::vector<double> reward, selects, distinct;
    for (const auto* m : members) {
      reward.push_back(m->total_reward);
      selects.push_back(static_cast<double>(m->selects));
      distinct.push_back(static_cast<double>(m->distinct_items));
    }
    rows.push_back({cohort, members.size(), mean_of(reward), halfwidth95(reward), mean_of(selects),
                    halfwidth95(selects), mean_of(distinct), halfwidth95(distinct)});
  }
  return rows;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "table") return ReportFormat::Table;
  if (name == "jsonlines") return ReportFormat::JsonLines;
  fail(Errc::InvalidArgument, "unknown report format '" + std::string(name) + "'");
}

std::string aggregate_report(const std::vector<SessionSummary>& summaries, ReportFormat format) {
  auto rows = cohort_rows(summaries);
  std::string out;
  if (format == ReportFormat::JsonLines) {
    for (const auto& r : rows) {
      nlohmann::ordered_json j;
      j["cohort"] = r.cohort;
      j["sessions"] = r.sessions;
      j["mean_reward"] = r.mean_reward;
      j["reward_hw"] = r.reward_halfwidth;
      j["mean_selects"] = r.mean_selects;
      j["selects_hw"] = r.selects_halfwidth;
      j["mean_distinct"] = r.mean_distinct;
      j["distinct_hw"] = r.distinct_halfwidth;
      out += j.dump() + "\n";
    }
    return out;
  }
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %8s %12s %10s %12s %10s %13s %11s\n", "cohort", "sessions", "mean_reward",
                "reward_hw", "mean_selects", "selects_hw", "mean_distinct", "distinct_hw");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %8zu %12.6f %10.6f %12.6f %10.6f %13.6f %11.6f\n", r.cohort.c_str(),
                  r.sessions, r.mean_reward, r.reward_halfwidth, r.mean_selects, r.selects_halfwidth, r.mean_distinct,
                  r.distinct_halfwidth);
    out += line;
  }
  return out;
}

}  // namespace agentrec
