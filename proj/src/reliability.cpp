#include "agentrec/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <thread>

#include "agentrec/error.hpp"
#include "agentrec/rng.hpp"
#include "agentrec/text.hpp"

namespace agentrec {

namespace {

void check_rate(double p) {
  if (!(p >= 0.0 && p <= 1.0)) fail(Errc::OutOfRange, "error rate " + std::to_string(p) + " outside [0, 1]");
}

struct CompiledGraph {
  std::vector<std::size_t> order;
  std::vector<std::vector<std::size_t>> parents;
  std::vector<std::size_t> sinks;
  std::vector<bool> truth;
};

std::uint64_t run_partition(const AgentGraph& g, const CompiledGraph& cg, const ValidityOracle& oracle,
                            std::uint64_t trials, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = g.nodes.size();
  std::vector<char> invalid(n);
  std::uint64_t hits = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    // draws happen in node-index order so the stream layout is independent of topology
    for (std::size_t i = 0; i < n; ++i) invalid[i] = rng.uniform() < g.error_rates[i] ? 1 : 0;
    for (std::size_t v : cg.order) {
      for (std::size_t u : cg.parents[v]) invalid[v] = static_cast<char>(invalid[v] | invalid[u]);
    }
    for (std::size_t s : cg.sinks) {
      bool asserted = invalid[s] != 0 ? !cg.truth[s] : cg.truth[s];
      if (!oracle.valid(g.nodes[s], asserted)) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

}  // namespace

double propagation_probability(std::span<const double> p) {
  double keep = 1.0;
  for (double x : p) {
    check_rate(x);
    keep *= 1.0 - x;
  }
  return 1.0 - keep;
}

bool ValidityOracle::valid(const std::string& key, bool asserted) const {
  auto it = truth.find(key);
  if (it == truth.end()) fail(Errc::InvalidArgument, "validity oracle has no entry for '" + key + "'");
  return it->second == asserted;
}

std::vector<std::size_t> topological_order(const AgentGraph& g) {
  const std::size_t n = g.nodes.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(g.nodes[i], i).second) fail(Errc::InvalidArgument, "duplicate node '" + g.nodes[i] + "'");
  }
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& [a, b] : g.edges) {
    auto ia = index.find(a);
    auto ib = index.find(b);
    if (ia == index.end() || ib == index.end()) fail(Errc::InvalidArgument, "edge " + a + "->" + b + " names an unknown node");
    out[ia->second].push_back(ib->second);
    ++indegree[ib->second];
  }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.insert(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    std::size_t v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (std::size_t w : out[v]) {
      if (--indegree[w] == 0) ready.insert(w);
    }
  }
  if (order.size() != n) fail(Errc::CyclicGraph, "agent graph contains a cycle");
  return order;
}

CascadeResult simulate_error_cascade(const AgentGraph& g, const ValidityOracle& oracle, std::uint64_t trials,
                                     std::uint64_t seed, unsigned threads) {
  if (trials == 0) fail(Errc::InvalidArgument, "trials must be >= 1");
  if (g.error_rates.size() != g.nodes.size()) fail(Errc::InvalidArgument, "one error rate per node required");
  for (double p : g.error_rates) check_rate(p);

  CompiledGraph cg;
  cg.order = topological_order(g);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) index[g.nodes[i]] = i;
  cg.parents.resize(g.nodes.size());
  std::vector<bool> has_out(g.nodes.size(), false);
  for (const auto& [a, b] : g.edges) {
    cg.parents[index[b]].push_back(index[a]);
    has_out[index[a]] = true;
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (!has_out[i]) cg.sinks.push_back(i);
    auto it = oracle.truth.find(g.nodes[i]);
    if (it == oracle.truth.end()) fail(Errc::InvalidArgument, "validity oracle has no entry for '" + g.nodes[i] + "'");
    cg.truth.push_back(it->second);
  }

  std::vector<std::uint64_t> counts(kCascadePartitions, 0);
  auto work = [&](std::size_t k) {
    std::uint64_t share = trials / kCascadePartitions + (k < trials % kCascadePartitions ? 1 : 0);
    counts[k] = run_partition(g, cg, oracle, share, derive_seed(seed, static_cast<std::uint64_t>(k)));
  };
  unsigned workers = threads == 0 ? std::max(1U, std::thread::hardware_concurrency()) : threads;
  workers = std::min<unsigned>(workers, kCascadePartitions);
  if (workers <= 1) {
    for (std::size_t k = 0; k < kCascadePartitions; ++k) work(k);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < kCascadePartitions; k += workers) work(k);
      });
    }
    for (auto& t : pool) t.join();
  }

  CascadeResult r;
  r.trials = trials;
  for (std::uint64_t c : counts) r.invalid_trials += c;
  return r;
}

std::string consensus(std::span<const std::string> replies) {
  if (replies.empty()) fail(Errc::InvalidArgument, "consensus over no replies");
  std::map<std::string, std::size_t> counts;
  for (const auto& r : replies) ++counts[r];
  // map iterates in ascending text order, so the first maximum wins ties
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

void BrandPolicy::validate() const {
  for (const auto& d : required_disclosures) {
    if (d.trigger.empty() || d.disclosure.empty()) fail(Errc::InvalidArgument, "empty disclosure rule");
    for (const auto& b : banned_terms) {
      if (text::word_tokens(b) == text::word_tokens(d.disclosure)) {
        fail(Errc::InvalidArgument, "disclosure '" + d.disclosure + "' is also banned");
      }
    }
  }
}

BrandPolicy policy_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(Errc::ParseError, "brand policy must be an object");
  BrandPolicy p;
  try {
    if (j.contains("banned_terms")) p.banned_terms = j.at("banned_terms").get<std::set<std::string>>();
    if (j.contains("required_disclosures")) {
      for (const auto& d : j.at("required_disclosures")) {
        p.required_disclosures.push_back({d.at("trigger").get<std::string>(), d.at("disclosure").get<std::string>()});
      }
    }
    if (j.contains("tone_allowlist") && !j.at("tone_allowlist").is_null()) {
      p.tone_allowlist = j.at("tone_allowlist").get<std::set<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("brand policy: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json policy_to_json(const BrandPolicy& p) {
  nlohmann::json j;
  j["banned_terms"] = p.banned_terms;
  j["required_disclosures"] = nlohmann::json::array();
  for (const auto& d : p.required_disclosures) {
    j["required_disclosures"].push_back({{"trigger", d.trigger}, {"disclosure", d.disclosure}});
  }
  if (p.tone_allowlist) j["tone_allowlist"] = *p.tone_allowlist;
  return j;
}

namespace {

constexpr std::string_view kToneOpen = "[tone:";

std::string strip_tone_markers(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.substr(i, kToneOpen.size()) == kToneOpen) {
      std::size_t close = text.find(']', i);
      if (close != std::string_view::npos) {
        out += ' ';
        i = close + 1;
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

bool has_token_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

std::vector<std::string> tone_tags(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find(kToneOpen, pos)) != std::string_view::npos) {
    std::size_t close = text.find(']', pos);
    if (close == std::string_view::npos) break;
    out.push_back(text::to_lower(text::trim(text.substr(pos + kToneOpen.size(), close - pos - kToneOpen.size()))));
    pos = close + 1;
  }
  return out;
}

bool contains_phrase(std::string_view text, std::string_view phrase) {
  return has_token_run(text::word_tokens(strip_tone_markers(text)), text::word_tokens(phrase));
}

ComplianceReport compliance_report(std::string_view text, const BrandPolicy& policy) {
  ComplianceReport r;
  auto tokens = text::word_tokens(strip_tone_markers(text));
  for (const auto& term : policy.banned_terms) {
    if (has_token_run(tokens, text::word_tokens(term))) r.banned.push_back(term);
  }
  for (const auto& d : policy.required_disclosures) {
    if (has_token_run(tokens, text::word_tokens(d.trigger)) && !has_token_run(tokens, text::word_tokens(d.disclosure))) {
      r.missing_disclosures.push_back(d.trigger);
    }
  }
  if (policy.tone_allowlist) {
    std::set<std::string> allowed;
    for (const auto& t : *policy.tone_allowlist) allowed.insert(text::to_lower(t));
    for (const auto& t : tone_tags(text)) {
      if (allowed.count(t) == 0) r.disallowed_tones.push_back(t);
    }
  }
  return r;
}

bool check_compliance(std::string_view text, const BrandPolicy& policy) {
  return compliance_report(text, policy).ok();
}

std::string constrained_select(std::span<const Candidate> candidates, const BrandPolicy& policy) {
  if (candidates.empty()) fail(Errc::InvalidArgument, "no candidates");
  for (const auto& c : candidates) {
    if (!std::isfinite(c.score)) fail(Errc::InvalidArgument, "candidate score is not finite");
  }
  const Candidate* best = nullptr;
  for (const auto& c : candidates) {
    if (!check_compliance(c.text, policy)) continue;
    if (best == nullptr || c.score > best->score || (c.score == best->score && c.text < best->text)) best = &c;
  }
  if (best == nullptr) fail(Errc::NoCompliantCandidate, "every candidate violates the brand policy");
  return best->text;
}

}  // namespace agentrec
