#include "agentrec/scenario.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "agentrec/error.hpp"

namespace agentrec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view scenario_kind_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Interactive: return "interactive";
    case ScenarioKind::Simulate: return "simulate";
    case ScenarioKind::Multimodal: return "multimodal";
    case ScenarioKind::Explain: return "explain";
    case ScenarioKind::Cascade: return "cascade";
  }
  return "interactive";
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(Errc::InvalidArgument, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Unreadable, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(Errc::Unreadable, "cannot write '" + path.string() + "'");
}

// Reads typed fields and records a finding for every miss instead of throwing.
class Reader {
 public:
  std::vector<Finding> findings;

  void add(std::string field, std::string rule) { findings.push_back({std::move(field), std::move(rule)}); }

  const json* get(const json& obj, const std::string& where, const char* key, bool required) {
    std::string field = where.empty() ? key : where + "." + key;
    if (!obj.is_object() || !obj.contains(key)) {
      if (required) add(field, "required");
      return nullptr;
    }
    return &obj.at(key);
  }

  static std::string at(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

  std::optional<std::string> str(const json& obj, const std::string& where, const char* key, bool required,
                                 bool nonempty = true) {
    const json* v = get(obj, where, key, required);
    if (v == nullptr) return std::nullopt;
    if (!v->is_string()) {
      add(at(where, key), "must be a string");
      return std::nullopt;
    }
    auto s = v->get<std::string>();
    if (nonempty && s.empty()) {
      add(at(where, key), "must be non-empty");
      return std::nullopt;
    }
    return s;
  }

  std::optional<std::uint64_t> uint(const json& obj, const std::string& where, const char* key, bool required,
                                    std::uint64_t min = 0) {
    const json* v = get(obj, where, key, required);
    if (v == nullptr) return std::nullopt;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
      add(at(where, key), "must be a non-negative integer");
      return std::nullopt;
    }
    auto n = v->get<std::uint64_t>();
    if (n < min) {
      add(at(where, key), "must be >= " + std::to_string(min));
      return std::nullopt;
    }
    return n;
  }

  std::optional<double> num(const json& obj, const std::string& where, const char* key, bool required, double lo,
                            double hi) {
    const json* v = get(obj, where, key, required);
    if (v == nullptr) return std::nullopt;
    if (!v->is_number() || !std::isfinite(v->get<double>())) {
      add(at(where, key), "must be a finite number");
      return std::nullopt;
    }
    double d = v->get<double>();
    if (d < lo || d > hi) {
      std::ostringstream rule;
      rule << "must lie in [" << lo << ", " << hi << "]";
      add(at(where, key), rule.str());
      return std::nullopt;
    }
    return d;
  }

  std::optional<bool> boolean(const json& obj, const std::string& where, const char* key) {
    const json* v = get(obj, where, key, false);
    if (v == nullptr) return std::nullopt;
    if (!v->is_boolean()) {
      add(at(where, key), "must be a boolean");
      return std::nullopt;
    }
    return v->get<bool>();
  }

  const json* array(const json& obj, const std::string& where, const char* key, bool required, bool nonempty = true) {
    const json* v = get(obj, where, key, required);
    if (v == nullptr) return nullptr;
    if (!v->is_array()) {
      add(at(where, key), "must be an array");
      return nullptr;
    }
    if (nonempty && v->empty()) {
      add(at(where, key), "must be non-empty");
      return nullptr;
    }
    return v;
  }

  const json* object(const json& obj, const std::string& where, const char* key, bool required) {
    const json* v = get(obj, where, key, required);
    if (v == nullptr) return nullptr;
    if (!v->is_object()) {
      add(at(where, key), "must be an object");
      return nullptr;
    }
    return v;
  }

  std::vector<std::string> strings(const json& obj, const std::string& where, const char* key, bool required,
                                   bool nonempty = true) {
    std::vector<std::string> out;
    const json* v = array(obj, where, key, required, nonempty);
    if (v == nullptr) return out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) {
        add(at(where, key) + "[" + std::to_string(i) + "]", "must be a string");
        continue;
      }
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }
};

std::string idx(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

void parse_interactive(Reader& r, const json& sec, const json& budgets, ScenarioConfig& c) {
  const std::string w = "interactive";
  PartySetup& s = c.interactive;
  std::set<std::string> kinds;
  if (const json* arr = r.array(sec, w, "schemata", true)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      std::string f = idx(w + ".schemata", i);
      auto kind = r.str((*arr)[i], f, "kind", true);
      auto fields = r.strings((*arr)[i], f, "fields", true, false);
      if (!kind) continue;
      if (!kinds.insert(*kind).second) {
        r.add(f + ".kind", "duplicate message kind '" + *kind + "'");
        continue;
      }
      s.schemata.push_back({*kind, fields});
    }
  }

  const auto tool_names = party_tool_names();
  std::map<std::string, std::size_t> agent_index;
  std::vector<std::string> declared;  // matrix rows follow declaration order, duplicates included
  if (const json* arr = r.array(sec, w, "agents", true)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& a = (*arr)[i];
      std::string f = idx(w + ".agents", i);
      AgentDecl d;
      auto id = r.str(a, f, "id", true);
      d.inputs = r.strings(a, f, "inputs", true);
      d.outputs = r.strings(a, f, "outputs", true);
      d.tools = r.strings(a, f, "tools", false, false);
      d.dormant = r.boolean(a, f, "dormant").value_or(false);
      for (const auto& k : d.inputs) {
        if (!kinds.count(k)) r.add(f + ".inputs", "unknown message kind '" + k + "'");
      }
      for (const auto& k : d.outputs) {
        if (!kinds.count(k)) r.add(f + ".outputs", "unknown message kind '" + k + "'");
      }
      for (const auto& t : d.tools) {
        if (std::find(tool_names.begin(), tool_names.end(), t) == tool_names.end()) {
          r.add(f + ".tools", "unknown tool '" + t + "'");
        }
      }
      if (const json* rules = r.array(a, f, "rules", true)) {
        for (std::size_t k = 0; k < rules->size(); ++k) {
          auto pattern = r.str((*rules)[k], idx(f + ".rules", k), "pattern", true);
          auto response = r.str((*rules)[k], idx(f + ".rules", k), "response", true, false);
          if (pattern && response) d.rules.push_back({*pattern, *response});
        }
      }
      declared.push_back(id.value_or(""));
      if (!id) continue;
      d.id = *id;
      if (agent_index.count(d.id)) {
        r.add(f + ".id", "duplicate agent id '" + d.id + "'");
        continue;
      }
      agent_index[d.id] = s.agents.size();
      s.agents.push_back(std::move(d));
    }
  }

  const std::size_t n = declared.size();
  if (const json* m = r.array(sec, w, "matrix", true, false)) {
    bool square = m->size() == n;
    for (const auto& row : *m) square = square && row.is_array() && row.size() == n;
    if (!square) {
      r.add(w + ".matrix", "dimension does not match agent count " + std::to_string(n));
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const json& cell = (*m)[i][j];
          std::string f = w + ".matrix[" + std::to_string(i) + "][" + std::to_string(j) + "]";
          if (!cell.is_number_integer() || (cell.get<std::int64_t>() != 0 && cell.get<std::int64_t>() != 1)) {
            r.add(f, "must be 0 or 1");
          } else if (cell.get<std::int64_t>() == 1) {
            if (i == j) {
              r.add(f, "self channel");
            } else {
              s.channels.push_back({declared[i], declared[j]});
            }
          }
        }
      }
    }
  }

  auto has_kind = [](const std::vector<std::string>& v, const std::string& k) {
    return std::find(v.begin(), v.end(), k) != v.end();
  };
  if (const json* arr = r.array(sec, w, "routing", true)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& e = (*arr)[i];
      std::string f = idx(w + ".routing", i);
      RouteEdge edge;
      auto from = r.str(e, f, "from", true);
      auto kind = r.str(e, f, "kind", true);
      const json* to = r.get(e, f, "to", true);
      if (to != nullptr) {
        if (to->is_string()) {
          edge.to.push_back(to->get<std::string>());
        } else if (to->is_array() && !to->empty() &&
                   std::all_of(to->begin(), to->end(), [](const json& x) { return x.is_string(); })) {
          for (const auto& x : *to) edge.to.push_back(x.get<std::string>());
        } else {
          r.add(f + ".to", "must be an agent id or a non-empty array of ids");
        }
      }
      if (!from || !kind) continue;
      edge.from = *from;
      edge.kind = *kind;
      if (!kinds.count(edge.kind)) r.add(f + ".kind", "unknown message kind '" + edge.kind + "'");
      if (!agent_index.count(edge.from)) {
        r.add(f + ".from", "unknown agent '" + edge.from + "'");
      } else if (!has_kind(s.agents[agent_index[edge.from]].outputs, edge.kind)) {
        r.add(f + ".kind", "agent '" + edge.from + "' cannot emit '" + edge.kind + "'");
      }
      for (const auto& t : edge.to) {
        if (!agent_index.count(t)) {
          r.add(f + ".to", "unknown agent '" + t + "'");
        } else if (!has_kind(s.agents[agent_index[t]].inputs, edge.kind)) {
          r.add(f + ".to", "agent '" + t + "' does not accept '" + edge.kind + "'");
        }
      }
      s.routing.push_back(std::move(edge));
    }
  }

  if (const json* arr = r.array(sec, w, "transcript", true)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      auto speaker = r.str((*arr)[i], idx(w + ".transcript", i), "speaker", true);
      auto text = r.str((*arr)[i], idx(w + ".transcript", i), "text", true);
      if (speaker && text) s.transcript.turns.push_back({*speaker, *text});
    }
    try {
      s.transcript.validate();
    } catch (const Error& e) {
      r.add(w + ".transcript", e.what());
    }
  }

  if (const json* arr = r.array(sec, w, "memory", false, false)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      std::string f = idx(w + ".memory", i);
      auto label = r.str((*arr)[i], f, "label", true);
      auto slot = r.str((*arr)[i], f, "slot", true);
      auto value = r.str((*arr)[i], f, "value", true);
      auto ts = r.uint((*arr)[i], f, "timestamp", false);
      if (!label || !slot || !value) continue;
      try {
        s.memory.push_back({parse_label(*label), {*slot, *value}, static_cast<Timestamp>(ts.value_or(0))});
      } catch (const Error& e) {
        r.add(f + ".label", e.what());
      }
    }
  }

  s.synthetic_items = r.uint(sec, w, "synthetic_items", false).value_or(0);
  s.per_category = r.uint(sec, w, "per_category", false, 1).value_or(4);
  s.L = r.uint(budgets, "budgets", "L", false, 1).value_or(6);
  s.K = r.uint(budgets, "budgets", "K", false, 1).value_or(5);
  s.agent_config.context_budget = r.uint(budgets, "budgets", "B", false, 1).value_or(64);
  s.agent_config.stm_tokens = r.uint(budgets, "budgets", "L_stm", false, 0).value_or(256);
  s.catalog = c.catalog;
  s.policy = c.policy;
}

void parse_simulate(Reader& r, const json& sec, ScenarioConfig& c) {
  const std::string w = "simulate";
  SimulateSpec& s = c.simulate;
  std::set<std::string> cohort_ids;
  if (const json* arr = r.array(sec, w, "cohorts", true)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& o = (*arr)[i];
      std::string f = idx(w + ".cohorts", i);
      CohortSpec cs;
      auto id = r.str(o, f, "cohort", true);
      cs.count = r.uint(o, f, "count", false, 1).value_or(1);
      cs.noise = r.num(o, f, "noise", false, 0.0, 1e6).value_or(0.0);
      cs.theta_text = r.str(o, f, "theta_text", false);
      if (cs.theta_text && embed_text(*cs.theta_text).is_zero()) r.add(f + ".theta_text", "has no tokens");
      if (auto sp = r.str(o, f, "action_space", false)) {
        try {
          cs.action_space = parse_action_space(*sp);
        } catch (const Error& e) {
          r.add(f + ".action_space", e.what());
        }
      }
      if (!id) continue;
      if (!cohort_ids.insert(*id).second) r.add(f + ".cohort", "duplicate cohort '" + *id + "'");
      cs.cohort = *id;
      s.cohorts.push_back(std::move(cs));
    }
  }
  s.horizon = r.uint(sec, w, "T", true, 1).value_or(1);
  s.sessions = r.uint(sec, w, "sessions", false, 1).value_or(1);
  s.threads = static_cast<unsigned>(r.uint(sec, w, "threads", false, 1).value_or(1));
  if (const json* rec = r.object(sec, w, "recommender", true)) {
    const std::string f = w + ".recommender";
    s.recommender = r.str(*rec, f, "kind", true).value_or("relevance");
    s.list_length = r.uint(*rec, f, "L", false, 1).value_or(1);
    if (s.recommender == "relevance") {
      s.query = r.str(*rec, f, "query", true).value_or("");
    } else if (s.recommender == "constant") {
      s.item = r.str(*rec, f, "item", true).value_or("");
      bool known = std::any_of(c.catalog.begin(), c.catalog.end(), [&](const CatalogItem& it) { return it.id == s.item; });
      if (!s.item.empty() && !known) r.add(f + ".item", "unknown catalog item '" + s.item + "'");
    } else if (s.recommender != "rotation") {
      r.add(f + ".kind", "must be relevance, rotation or constant");
    }
  }
  if (const json* g = r.object(sec, w, "reward", false)) {
    auto name = r.str(*g, w + ".reward", "name", true).value_or("select");
    double lambda = r.num(*g, w + ".reward", "lambda", false, 0.0, 1e9).value_or(0.0);
    try {
      s.reward = RewardSpec::named(name, lambda);
    } catch (const Error& e) {
      r.add(w + ".reward.name", e.what());
    }
  }
}

void parse_multimodal(Reader& r, const json& sec, ScenarioConfig& c) {
  const std::string w = "multimodal";
  MultimodalSpec& s = c.multimodal;
  s.text = r.str(sec, w, "text", true, false).value_or("");
  if (const json* arr = r.array(sec, w, "scene_palette", true)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& v = (*arr)[i];
      if (!v.is_number() || !std::isfinite(v.get<double>())) {
        r.add(idx(w + ".scene_palette", i), "must be a finite number");
        continue;
      }
      s.scene.push_back(v.get<double>());
    }
  }
  for (const auto& cat : r.strings(sec, w, "categories", true)) s.categories.insert(cat);
  s.profile = r.strings(sec, w, "profile", false, false);
  s.options.alpha = r.num(sec, w, "alpha", false, 0.0, 1.0).value_or(0.5);
  s.options.tau = r.num(sec, w, "tau", false, -1.0, 1.0).value_or(0.7);
  s.options.per_category = r.uint(sec, w, "per_category", false, 1).value_or(3);
}

void parse_explain(Reader& r, const json& sec, ScenarioConfig& c) {
  const std::string w = "explain";
  ExplainSpec& s = c.explain;
  if (const json* arr = r.array(sec, w, "recs", true)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      std::string f = idx(w + ".recs", i);
      auto id = r.str((*arr)[i], f, "id", true);
      auto score = r.num((*arr)[i], f, "score", false, -1e300, 1e300);
      if (!id) continue;
      if (!c.catalog.empty() &&
          std::none_of(c.catalog.begin(), c.catalog.end(), [&](const CatalogItem& it) { return it.id == *id; })) {
        r.add(f + ".id", "unknown catalog item '" + *id + "'");
      }
      s.recs.entries.push_back({*id, score.value_or(0.0)});
    }
  }
  if (const json* arr = r.array(sec, w, "facts", false, false)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      std::string f = idx(w + ".facts", i);
      auto slot = r.str((*arr)[i], f, "slot", true);
      auto value = r.str((*arr)[i], f, "value", true);
      auto label = r.str((*arr)[i], f, "label", false).value_or("EPI");
      if (!slot || !value) continue;
      try {
        s.facts.push_back({parse_label(label), {*slot, *value}, static_cast<Timestamp>(i + 1)});
      } catch (const Error& e) {
        r.add(f + ".label", e.what());
      }
    }
  }
  s.max_rounds = r.uint(sec, w, "max_rounds", false, 1).value_or(3);
  if (const json* arr = r.array(sec, w, "templates", false)) {
    std::vector<ExplanationTemplate> ts;
    for (std::size_t i = 0; i < arr->size(); ++i) {
      auto id = r.str((*arr)[i], idx(w + ".templates", i), "id", true);
      auto text = r.str((*arr)[i], idx(w + ".templates", i), "text", true);
      if (id && text) ts.push_back({*id, *text});
    }
    s.templates = std::move(ts);
  }
}

void parse_cascade(Reader& r, const json& sec, ScenarioConfig& c) {
  const std::string w = "cascade";
  CascadeSpec& s = c.cascade;
  std::set<std::string> ids;
  if (const json* arr = r.array(sec, w, "nodes", true)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      std::string f = idx(w + ".nodes", i);
      auto id = r.str((*arr)[i], f, "id", true);
      auto p = r.num((*arr)[i], f, "error_rate", true, 0.0, 1.0);
      bool truth = r.boolean((*arr)[i], f, "truth").value_or(true);
      if (!id || !p) continue;
      if (!ids.insert(*id).second) {
        r.add(f + ".id", "duplicate node id '" + *id + "'");
        continue;
      }
      s.graph.nodes.push_back(*id);
      s.graph.error_rates.push_back(*p);
      s.oracle.truth[*id] = truth;
    }
  }
  if (const json* arr = r.array(sec, w, "edges", false, false)) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& e = (*arr)[i];
      std::string f = idx(w + ".edges", i);
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
        r.add(f, "must be a [from, to] pair of node ids");
        continue;
      }
      auto a = e[0].get<std::string>(), b = e[1].get<std::string>();
      if (!ids.count(a) || !ids.count(b)) {
        r.add(f, "unknown node");
        continue;
      }
      s.graph.edges.push_back({a, b});
    }
  }
  try {
    if (!s.graph.nodes.empty()) topological_order(s.graph);
  } catch (const Error& e) {
    r.add(w + ".edges", e.what());
  }
  s.trials = r.uint(sec, w, "trials", false, 1).value_or(100000);
  s.threads = static_cast<unsigned>(r.uint(sec, w, "threads", false, 1).value_or(1));
}

ScenarioConfig parse_config(const fs::path& path, Reader& r) {
  std::string text = read_file(path);
  ScenarioConfig c;
  c.path = path;
  const fs::path dir = path.parent_path();
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    r.add("$", "not a JSON object");
    return c;
  }

  auto kind = r.str(root, "", "kind", true);
  std::optional<ScenarioKind> k;
  if (kind) {
    for (auto candidate : {ScenarioKind::Interactive, ScenarioKind::Simulate, ScenarioKind::Multimodal,
                           ScenarioKind::Explain, ScenarioKind::Cascade}) {
      if (scenario_kind_name(candidate) == *kind) k = candidate;
    }
    if (!k) r.add("kind", "must be one of interactive, simulate, multimodal, explain, cascade");
  }
  c.kind = k.value_or(ScenarioKind::Interactive);
  c.seed = r.uint(root, "", "seed", false).value_or(0);
  auto out = r.str(root, "", "output_dir", false);
  c.output_dir = dir / (out ? fs::path(*out) : fs::path("out") / scenario_kind_name(c.kind));

  const bool needs_catalog = k && *k != ScenarioKind::Cascade && *k != ScenarioKind::Explain;
  if (auto cat = r.str(root, "", "catalog", needs_catalog)) {
    fs::path p = dir / *cat;
    if (!fs::is_regular_file(p)) {
      r.add("catalog", "file not found: " + p.string());
    } else {
      try {
        c.catalog = catalog_from_json(json::parse(read_file(p)));
      } catch (const std::exception& e) {
        r.add("catalog", std::string("unparseable: ") + e.what());
      }
    }
  }
  const bool needs_policy = k && *k == ScenarioKind::Explain;
  if (auto pol = r.str(root, "", "policy", needs_policy)) {
    fs::path p = dir / *pol;
    if (!fs::is_regular_file(p)) {
      r.add("policy", "file not found: " + p.string());
    } else {
      try {
        c.policy = policy_from_json(json::parse(read_file(p)));
        c.policy.validate();
      } catch (const std::exception& e) {
        r.add("policy", std::string("unparseable: ") + e.what());
      }
    }
  }
  json budgets = json::object();
  if (const json* b = r.object(root, "", "budgets", false)) budgets = *b;
  if (!k) return c;

  const json* sec = r.object(root, "", std::string(scenario_kind_name(*k)).c_str(), true);
  if (sec == nullptr) return c;
  switch (*k) {
    case ScenarioKind::Interactive: parse_interactive(r, *sec, budgets, c); break;
    case ScenarioKind::Simulate: parse_simulate(r, *sec, c); break;
    case ScenarioKind::Multimodal: parse_multimodal(r, *sec, c); break;
    case ScenarioKind::Explain: parse_explain(r, *sec, c); break;
    case ScenarioKind::Cascade: parse_cascade(r, *sec, c); break;
  }
  return c;
}

std::string findings_text(const std::vector<Finding>& findings) {
  std::string out;
  for (const auto& f : findings) out += (out.empty() ? "" : "; ") + f.field + ": " + f.rule;
  return out;
}

json ranked_report(const RankedList& list, const Environment& env) {
  json arr = json::array();
  for (const auto& e : list.entries) {
    const CatalogItem* it = env.find_item(e.id);
    arr.push_back({{"id", e.id},
                   {"score", e.score},
                   {"category", it ? it->category : ""},
                   {"title", it ? it->title : ""},
                   {"tags", it ? it->tags : std::vector<std::string>{}}});
  }
  return arr;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

ScenarioArtifacts run_interactive(const ScenarioConfig& c) {
  PartySetup setup = c.interactive;
  setup.seed = c.seed;
  auto planner = build_party_planner(setup);
  auto outcome = run_party_planner(planner);
  ScenarioArtifacts a;
  a.trace_jsonl = trace_to_jsonl(outcome.episode);
  a.error = outcome.episode.error;
  json kinds = json::array();
  for (const auto& m : outcome.episode.trace) kinds.push_back(m.kind);
  json report = {{"scenario", "interactive"},
                 {"seed", c.seed},
                 {"message_kinds", kinds},
                 {"constraints", constraints_to_json(outcome.constraints)},
                 {"ranked_list", ranked_report(outcome.ranked, planner.mas->env())}};
  a.report_jsonl = report.dump() + "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-5s %-12s %-8s %-8s %s\n", "rank", "id", "score", "category", "title");
  a.report_txt = line;
  std::size_t rank = 1;
  for (const auto& e : outcome.ranked.entries) {
    const CatalogItem* it = planner.mas->env().find_item(e.id);
    std::snprintf(line, sizeof line, "%-5zu %-12s %-8.4f %-8s %s\n", rank++, e.id.c_str(), e.score,
                  it ? it->category.c_str() : "", it ? it->title.c_str() : "");
    a.report_txt += line;
  }
  a.report_txt += "messages: " + std::to_string(outcome.episode.trace.size()) + "\n";
  return a;
}

ScenarioArtifacts run_simulate(const ScenarioConfig& c) {
  const SimulateSpec& s = c.simulate;
  Environment env;
  env.catalog = c.catalog;
  std::vector<UserSimulator> sims;
  for (const auto& cohort : s.cohorts) {
    for (std::size_t i = 0; i < cohort.count; ++i) {
      std::string id = cohort.cohort + "-" + std::to_string(i);
      std::uint64_t seed = derive_seed(c.seed, std::string_view(id));
      auto theta = cohort.theta_text ? theta_from_text(*cohort.theta_text)
                                     : theta_from_seed(derive_seed(seed, std::string_view("theta")));
      sims.push_back(UserSimulator::make(id, cohort.cohort, theta, cohort.noise, cohort.action_space, seed));
    }
  }
  Recommender rec;
  if (s.recommender == "rotation") {
    std::vector<std::string> ids;
    for (const auto& it : env.catalog) ids.push_back(it.id);
    rec = rotation_recommender(ids, s.list_length);
  } else if (s.recommender == "constant") {
    rec = constant_recommender(s.item);
  } else {
    rec = relevance_recommender(s.query, s.list_length);
  }
  RunOptions o;
  o.horizon = s.horizon;
  o.sessions_per_simulator = s.sessions;
  o.reward = s.reward;
  o.threads = s.threads;
  auto traces = run_sessions(rec, sims, env, o);

  ScenarioArtifacts a;
  std::vector<SessionSummary> summaries;
  for (const auto& t : traces) {
    a.trace_jsonl += session_to_json(t).dump() + "\n";
    summaries.push_back(summarize_session(t));
  }
  auto eval = evaluate(traces, s.reward);
  a.report_jsonl = aggregate_report(summaries, ReportFormat::JsonLines);
  a.report_jsonl += json{{"evaluation", eval_to_json(eval)}}.dump() + "\n";
  a.report_txt = aggregate_report(summaries, ReportFormat::Table);
  a.report_txt += "psi_hat " + fmt("%.6f", eval.psi_hat) + " +/- " + fmt("%.6f", eval.psi_halfwidth) + "\n";
  a.report_txt += "ctr " + fmt("%.6f", eval.ctr) + " +/- " + fmt("%.6f", eval.ctr_halfwidth) + "\n";
  a.report_txt += "diversity_entropy " + fmt("%.6f", eval.diversity_entropy) + "\n";
  return a;
}

ScenarioArtifacts run_multimodal(const ScenarioConfig& c) {
  const MultimodalSpec& s = c.multimodal;
  MemoryStore profile;
  Timestamp t = 1;
  for (const auto& statement : s.profile) {
    update_memory(profile, RawContext{{{"user", statement}}, {}, {}}, MemoryLabel::SEM, t++);
  }
  ScenarioArtifacts a;
  json facts = json::array();
  for (const auto& item : profile.items()) {
    if (!item.slot.empty()) facts.push_back({{"slot", item.slot}, {"value", std::get<std::string>(item.value)}});
  }
  a.trace_jsonl += json{{"stage", "profile"}, {"facts", facts}}.dump() + "\n";
  auto bundle = recommend_multimodal(s.text, s.scene, profile, s.categories, c.catalog, s.options);
  json items = json::array();
  for (const auto& b : bundle.items) {
    items.push_back({{"id", b.id}, {"category", b.category}, {"score", b.score}, {"palette", b.palette}});
  }
  a.trace_jsonl += json{{"stage", "bundle"}, {"items", items}}.dump() + "\n";
  bool compatible = compat_check(bundle, s.options.tau);
  a.trace_jsonl += json{{"stage", "compat_check"}, {"tau", s.options.tau}, {"passed", compatible}}.dump() + "\n";
  json report = {{"scenario", "multimodal"},
                 {"bundle", items},
                 {"total_score", bundle.total_score},
                 {"compatible", compatible},
                 {"truncated", bundle.truncated}};
  a.report_jsonl = report.dump() + "\n";
  for (const auto& b : bundle.items) a.report_txt += b.category + " " + b.id + " " + fmt("%.4f", b.score) + "\n";
  a.report_txt += "total_score " + fmt("%.4f", bundle.total_score) + (compatible ? " compatible" : " incompatible") + "\n";
  return a;
}

json explanation_json(const Explanation& e, std::size_t round, bool accepted) {
  return {{"round", round},
          {"template", e.template_id},
          {"text", e.text},
          {"cited_items", e.cited_items},
          {"cited_facts", e.cited_facts},
          {"item_only", e.item_only},
          {"accepted", accepted}};
}

ScenarioArtifacts run_explain(const ScenarioConfig& c) {
  const ExplainSpec& s = c.explain;
  MemoryStore ctx_store;
  for (const auto& f : s.facts) ctx_store.upsert_fact(f.fact, f.label, f.timestamp);
  Environment env;
  env.catalog = c.catalog;
  const Environment* envp = c.catalog.empty() ? nullptr : &env;
  auto result = explain_with_revision(s.recs, ctx_store.items(), c.policy, s.max_rounds,
                                      s.templates ? *s.templates : default_templates(), envp);
  ScenarioArtifacts a;
  std::size_t round = 1;
  for (const auto& e : result.rejected) a.trace_jsonl += explanation_json(e, round++, false).dump() + "\n";
  a.trace_jsonl += explanation_json(result.explanation, round, true).dump() + "\n";
  json report = {{"scenario", "explain"},
                 {"rounds", result.rounds},
                 {"explanation", result.explanation.text},
                 {"template", result.explanation.template_id},
                 {"item_only", result.explanation.item_only}};
  a.report_jsonl = report.dump() + "\n";
  a.report_txt = result.explanation.text + "\nrounds " + std::to_string(result.rounds) + "\n";
  return a;
}

// Closed form applies when the graph is one path through every node.
std::optional<double> chain_closed_form(const AgentGraph& g) {
  if (g.edges.size() + 1 != g.nodes.size()) return std::nullopt;
  std::map<std::string, int> in, out;
  for (const auto& [a, b] : g.edges) {
    ++out[a];
    ++in[b];
  }
  for (const auto& n : g.nodes) {
    if (in[n] > 1 || out[n] > 1) return std::nullopt;
  }
  return propagation_probability(g.error_rates);
}

ScenarioArtifacts run_cascade(const ScenarioConfig& c) {
  const CascadeSpec& s = c.cascade;
  auto order = topological_order(s.graph);
  auto result = simulate_error_cascade(s.graph, s.oracle, s.trials, c.seed, s.threads);
  ScenarioArtifacts a;
  for (std::size_t i : order) {
    a.trace_jsonl += json{{"node", s.graph.nodes[i]}, {"error_rate", s.graph.error_rates[i]}}.dump() + "\n";
  }
  json report = {{"scenario", "cascade"},
                 {"trials", result.trials},
                 {"invalid_trials", result.invalid_trials},
                 {"rate", result.rate()}};
  auto closed = chain_closed_form(s.graph);
  if (closed) report["closed_form"] = *closed;
  a.report_jsonl = report.dump() + "\n";
  a.report_txt = "monte_carlo " + fmt("%.6f", result.rate()) + " over " + std::to_string(result.trials) + " trials\n";
  if (closed) a.report_txt += "closed_form " + fmt("%.6f", *closed) + "\n";
  return a;
}

json error_record(const std::string& code, const std::string& message, const std::vector<Finding>& findings) {
  json e = {{"code", code}, {"message", message}};
  if (!findings.empty()) {
    json arr = json::array();
    for (const auto& f : findings) arr.push_back({{"field", f.field}, {"rule", f.rule}});
    e["findings"] = arr;
  }
  return {{"error", e}};
}

}  // namespace

std::vector<Finding> validate_config(const fs::path& path) {
  Reader r;
  parse_config(path, r);
  return r.findings;
}

ScenarioConfig load_scenario(const fs::path& path) {
  Reader r;
  auto c = parse_config(path, r);
  if (!r.findings.empty()) fail(Errc::ConfigInvalid, findings_text(r.findings));
  return c;
}

ScenarioArtifacts execute_scenario(const ScenarioConfig& config) {
  switch (config.kind) {
    case ScenarioKind::Interactive: return run_interactive(config);
    case ScenarioKind::Simulate: return run_simulate(config);
    case ScenarioKind::Multimodal: return run_multimodal(config);
    case ScenarioKind::Explain: return run_explain(config);
    case ScenarioKind::Cascade: return run_cascade(config);
  }
  fail(Errc::InvalidArgument, "unknown scenario kind");
}

ScenarioOutcome run_scenario(const fs::path& config_path, const ScenarioOptions& options) {
  ScenarioOutcome out;
  std::string config_bytes;
  Reader r;
  ScenarioConfig config;
  out.out_dir = options.out ? *options.out : config_path.parent_path() / "out";
  try {
    config_bytes = read_file(config_path);
    config = parse_config(config_path, r);
    if (!options.out) out.out_dir = config.output_dir;
  } catch (const Error& e) {
    out.exit_code = 2;
    out.error = EpisodeError{std::string(e.name()), e.what()};
  }
  if (!out.error && !r.findings.empty()) {
    out.exit_code = 2;
    out.findings = r.findings;
    out.error = EpisodeError{"ConfigInvalid", findings_text(r.findings)};
  }
  if (options.seed) config.seed = *options.seed;

  ScenarioArtifacts artifacts;
  if (!out.error) {
    try {
      artifacts = execute_scenario(config);
      if (artifacts.error) {
        out.exit_code = 1;
        out.error = artifacts.error;
      }
    } catch (const Error& e) {
      out.exit_code = 1;
      out.error = EpisodeError{std::string(e.name()), e.what()};
    }
  }

  std::error_code ec;
  fs::create_directories(out.out_dir, ec);
  if (ec) {
    out.exit_code = out.exit_code == 0 ? 1 : out.exit_code;
    out.error = EpisodeError{"Unreadable", "cannot create output directory '" + out.out_dir.string() + "'"};
    return out;
  }
  const fs::path error_path = out.out_dir / "error.json";
  if (out.error) {
    if (!artifacts.trace_jsonl.empty()) write_file(out.out_dir / "trace.jsonl", artifacts.trace_jsonl);
    write_file(error_path, error_record(out.error->code, out.error->message, out.findings).dump(2) + "\n");
    return out;
  }
  fs::remove(error_path, ec);
  write_file(out.out_dir / "trace.jsonl", artifacts.trace_jsonl);
  write_file(out.out_dir / "report.jsonl", artifacts.report_jsonl);
  write_file(out.out_dir / "report.txt", artifacts.report_txt);
  json manifest = {{"version", kVersion},
                   {"kind", scenario_kind_name(config.kind)},
                   {"seed", config.seed},
                   {"config", config_path.filename().string()},
                   {"config_sha256", sha256_hex(config_bytes)},
                   {"artifacts",
                    {{"trace.jsonl", sha256_hex(artifacts.trace_jsonl)},
                     {"report.jsonl", sha256_hex(artifacts.report_jsonl)},
                     {"report.txt", sha256_hex(artifacts.report_txt)}}}};
  write_file(out.out_dir / "manifest.json", manifest.dump(2) + "\n");
  out.stdout_text = options.format == ReportFormat::Table ? artifacts.report_txt : artifacts.report_jsonl;
  return out;
}

}  // namespace agentrec
