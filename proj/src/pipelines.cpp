#include "agentrec/pipelines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "agentrec/embedding.hpp"
#include "agentrec/error.hpp"
#include "agentrec/text.hpp"

namespace agentrec {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool contains(std::string_view s, std::string_view part) { return s.find(part) != std::string_view::npos; }

bool is_forbid_slot(std::string_view slot) {
  return contains(slot, "allergy") || contains(slot, "allergen") || slot == "material_ban" || slot == "ban" ||
         slot == "avoid" || slot == "exclude" || ends_with(slot, "_ban") || ends_with(slot, "_avoid") ||
         ends_with(slot, "_exclude");
}

bool is_budget_slot(std::string_view slot) {
  return slot == "budget" || slot == "budget_max" || ends_with(slot, "_budget");
}

bool is_require_slot(std::string_view slot) {
  return slot == "require" || slot == "required_tag" || slot == "must_have";
}

std::optional<double> parse_amount(std::string_view value) {
  std::string digits;
  for (char c : value) {
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      digits += c;
    } else if (!digits.empty()) {
      break;
    }
  }
  if (digits.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(digits.c_str(), &end);
  if (end == digits.c_str() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<Fact> fact_items(const std::vector<const MemoryItem*>& items) {
  std::vector<Fact> out;
  std::set<std::string> seen;
  for (const MemoryItem* m : items) {
    if (m->slot.empty() || m->meta.label == MemoryLabel::PROC) continue;
    const auto* value = std::get_if<std::string>(&m->value);
    if (value == nullptr || !seen.insert(m->slot).second) continue;
    out.push_back({m->slot, *value});
  }
  return out;
}

std::string sanitize_citation(std::string_view s) {
  std::string out(s);
  std::replace(out.begin(), out.end(), ']', ')');
  std::replace(out.begin(), out.end(), '[', '(');
  return out;
}

std::vector<Fact> ctx_facts(const std::vector<MemoryItem>& ctx) {
  std::vector<Fact> out;
  for (const auto& m : ctx) {
    const auto* value = std::get_if<std::string>(&m.value);
    if (!m.slot.empty() && value != nullptr) out.push_back({m.slot, *value});
  }
  return out;
}

}  // namespace

void Transcript::validate() const {
  if (turns.empty()) fail(Errc::InvalidArgument, "transcript is empty");
  for (std::size_t i = 0; i < turns.size(); ++i) {
    bool user = turns[i].speaker == "user";
    if (user != (i % 2 == 0)) fail(Errc::InvalidArgument, "transcript turns must alternate starting with the user");
  }
  if (turns.back().speaker != "user") fail(Errc::InvalidArgument, "transcript must end with a user turn");
}

const std::string& Transcript::last_user_text() const {
  validate();
  return turns.back().text;
}

std::vector<std::string> RankedList::ids() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

nlohmann::json ranked_to_json(const RankedList& list) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : list.entries) items.push_back({{"id", e.id}, {"score", e.score}});
  return items;
}

RankedList ranked_from_json(const nlohmann::json& j) {
  RankedList out;
  try {
    for (const auto& e : j) out.entries.push_back({e.at("id").get<std::string>(), e.at("score").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("ranked list: ") + e.what());
  }
  return out;
}

nlohmann::json constraints_to_json(const ConstraintSet& c) {
  nlohmann::json j = {{"required_tags", c.required_tags}, {"forbidden_tags", c.forbidden_tags}};
  j["budget_max"] = c.budget_max ? nlohmann::json(*c.budget_max) : nlohmann::json(nullptr);
  return j;
}

ConstraintSet constraints_from_json(const nlohmann::json& j) {
  ConstraintSet c;
  try {
    c.required_tags = j.value("required_tags", std::set<std::string>{});
    c.forbidden_tags = j.value("forbidden_tags", std::set<std::string>{});
    if (j.contains("budget_max") && !j.at("budget_max").is_null()) c.budget_max = j.at("budget_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("constraint set: ") + e.what());
  }
  return c;
}

std::string normalize_tag(std::string_view value) {
  std::string out = text::to_lower(text::trim(value));
  for (auto& c : out) {
    if (c == ' ' || c == '-') c = '_';
  }
  return out;
}

bool is_hard_slot(std::string_view slot) { return is_forbid_slot(slot) || is_budget_slot(slot) || is_require_slot(slot); }

ConstraintSet derive_constraints(const std::vector<Fact>& facts) {
  ConstraintSet c;
  for (const auto& f : facts) {
    if (is_forbid_slot(f.slot)) {
      c.forbidden_tags.insert(normalize_tag(f.value));
    } else if (is_budget_slot(f.slot)) {
      if (auto v = parse_amount(f.value)) c.budget_max = c.budget_max ? std::min(*c.budget_max, *v) : *v;
    } else if (is_require_slot(f.slot)) {
      c.required_tags.insert(normalize_tag(f.value));
    }
  }
  for (const auto& t : c.forbidden_tags) c.required_tags.erase(t);
  return c;
}

std::vector<std::string> item_violations(const CatalogItem& item, const ConstraintSet& c) {
  std::vector<std::string> out;
  for (const auto& t : c.forbidden_tags) {
    if (item.has_tag(t)) out.push_back("forbidden_tag:" + t);
  }
  for (const auto& t : c.required_tags) {
    if (!item.has_tag(t)) out.push_back("missing_required_tag:" + t);
  }
  if (c.budget_max && item.price > *c.budget_max) out.push_back("over_budget");
  return out;
}

std::vector<Fact> transcript_facts(const Transcript& transcript) {
  return retain(RawContext{transcript.turns, std::nullopt, {}});
}

std::vector<Fact> recall_episodes(const MemoryStore& memory, std::string_view query, std::size_t k) {
  std::vector<const MemoryItem*> picked;
  if (k > 0) {
    for (const auto& s : retrieve_topk(memory, query, k)) {
      for (const auto& m : memory.items()) {
        if (m == s.item) {
          picked.push_back(&m);
          break;
        }
      }
    }
  }
  for (const auto& m : memory.items()) {
    if (!m.slot.empty() && is_hard_slot(m.slot)) picked.push_back(&m);
  }
  // store order keeps the output independent of score ties
  std::vector<const MemoryItem*> ordered;
  for (const auto& m : memory.items()) {
    if (std::find(picked.begin(), picked.end(), &m) != picked.end()) ordered.push_back(&m);
  }
  return fact_items(ordered);
}

std::vector<Fact> validate_episodes(const std::vector<Fact>& episodes, const std::vector<Fact>& current) {
  std::vector<Fact> out;
  for (const auto& e : episodes) {
    bool contradicted = std::any_of(current.begin(), current.end(), [&](const Fact& f) {
      return f.slot == e.slot && normalize_tag(f.value) != normalize_tag(e.value);
    });
    if (!contradicted) out.push_back(e);
  }
  return out;
}

std::vector<Fact> merge_facts(const std::vector<Fact>& current, const std::vector<Fact>& episodes) {
  std::vector<Fact> out = current;
  for (const auto& e : episodes) {
    bool shadowed = std::any_of(current.begin(), current.end(), [&](const Fact& f) { return f.slot == e.slot; });
    bool duplicate = std::find(out.begin(), out.end(), e) != out.end();
    if (!shadowed && !duplicate) out.push_back(e);
  }
  return out;
}

std::string augmented_query(std::string_view base, const std::vector<Fact>& facts) {
  std::string q(base);
  for (const auto& f : facts) {
    if (!is_hard_slot(f.slot)) q += " " + f.value;
  }
  for (const auto& t : derive_constraints(facts).required_tags) q += " " + t;
  return q;
}

InteractiveRequest build_request(const Transcript& transcript, const MemoryStore& memory, std::size_t k) {
  const std::string& last = transcript.last_user_text();
  auto current = transcript_facts(transcript);
  auto episodes = validate_episodes(recall_episodes(memory, last, k), current);
  InteractiveRequest r;
  r.facts = merge_facts(current, episodes);
  r.constraints = derive_constraints(r.facts);
  r.query = augmented_query(last, r.facts);
  return r;
}

double item_relevance(std::string_view query, const CatalogItem& item) {
  return relevance(embed_text(query), embed_text(item.text()));
}

RankedList rank_catalog(const std::vector<CatalogItem>& catalog, const ConstraintSet& constraints,
                        std::string_view query, std::size_t L) {
  if (L == 0) fail(Errc::InvalidArgument, "L must be positive");
  if (catalog.empty()) fail(Errc::InvalidArgument, "catalog is empty");
  const auto q = embed_text(query);
  std::vector<RankedEntry> scored;
  for (const auto& item : catalog) {
    if (item_violations(item, constraints).empty()) scored.push_back({item.id, relevance(q, embed_text(item.text()))});
  }
  if (scored.empty()) fail(Errc::NoFeasibleItem, "every catalog item violates the constraints");
  auto by_rank = [](const RankedEntry& a, const RankedEntry& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  };
  const std::size_t keep = std::min(L, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), by_rank);
  scored.resize(keep);
  return {std::move(scored)};
}

RankedList recommend_interactive(const Transcript& transcript, const Environment& env, const MemoryStore& memory,
                                 std::size_t L, std::size_t k) {
  auto req = build_request(transcript, memory, k);
  return rank_catalog(env.catalog, req.constraints, req.query, L);
}

std::vector<Violation> check_collection_consistency(const RankedList& list, const ConstraintSet& constraints,
                                                    const Environment& env) {
  std::vector<Violation> out;
  for (const auto& e : list.entries) {
    const CatalogItem* item = env.find_item(e.id);
    if (item == nullptr) fail(Errc::UnknownItem, "no catalog item '" + e.id + "'");
    for (auto& rule : item_violations(*item, constraints)) out.push_back({e.id, std::move(rule)});
  }
  return out;
}

bool compat_check(const Bundle& bundle, double tau) {
  for (const auto& it : bundle.items) {
    if (it.palette.empty()) fail(Errc::MissingPalette, "bundle item '" + it.id + "' has no palette");
  }
  for (std::size_t i = 0; i < bundle.items.size(); ++i) {
    for (std::size_t j = i + 1; j < bundle.items.size(); ++j) {
      if (cosine(bundle.items[i].palette, bundle.items[j].palette) < tau) return false;
    }
  }
  return true;
}

Bundle recommend_multimodal(std::string_view text_constraints, const std::vector<double>& scene,
                            const MemoryStore& profile, const std::set<std::string>& categories,
                            const std::vector<CatalogItem>& catalog, const MultimodalOptions& options) {
  if (categories.empty()) fail(Errc::InvalidArgument, "no target categories");
  if (!(options.alpha >= 0.0 && options.alpha <= 1.0)) fail(Errc::InvalidArgument, "alpha must lie in [0, 1]");
  if (options.per_category == 0) fail(Errc::InvalidArgument, "per_category must be positive");
  auto scene_unit = normalized(scene);
  if (scene_unit.is_zero()) fail(Errc::InvalidArgument, "scene palette is all zero");

  std::vector<const MemoryItem*> all;
  for (const auto& m : profile.items()) all.push_back(&m);
  ConstraintSet bans = derive_constraints(fact_items(all));
  bans.required_tags.clear();

  const auto q = embed_text(text_constraints);
  std::vector<std::vector<BundleItem>> pools;
  Bundle best;
  best.target_categories = categories;
  for (const auto& cat : categories) {
    bool any_palette = false;
    std::vector<BundleItem> pool;
    for (const auto& item : catalog) {
      if (item.category != cat || !item.palette) continue;
      any_palette = true;
      if (item.palette->size() != scene_unit.dim()) {
        fail(Errc::InvalidArgument, "palette of '" + item.id + "' does not match the scene dimension");
      }
      if (!item_violations(item, bans).empty()) continue;
      double score = options.alpha * relevance(q, embed_text(item.text())) +
                     (1.0 - options.alpha) * cosine(*item.palette, scene_unit.values);
      pool.push_back({item.id, cat, *item.palette, score});
    }
    if (!any_palette) fail(Errc::MissingPalette, "category '" + cat + "' has no item with a palette");
    if (pool.empty()) fail(Errc::NoFeasibleItem, "every '" + cat + "' item is banned by the profile");
    std::sort(pool.begin(), pool.end(), [](const BundleItem& a, const BundleItem& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    if (pool.size() > options.per_category) {
      best.truncated = true;
      pool.resize(options.per_category);
    }
    pools.push_back(std::move(pool));
  }

  std::vector<std::size_t> pick(pools.size(), 0);
  std::optional<std::vector<std::size_t>> winner;
  double winner_score = 0.0;
  auto ids_of = [&](const std::vector<std::size_t>& p) {
    std::vector<std::string> ids;
    for (std::size_t c = 0; c < p.size(); ++c) ids.push_back(pools[c][p[c]].id);
    return ids;
  };
  while (true) {
    Bundle trial;
    double total = 0.0;
    for (std::size_t c = 0; c < pools.size(); ++c) {
      trial.items.push_back(pools[c][pick[c]]);
      total += pools[c][pick[c]].score;
    }
    if (compat_check(trial, options.tau)) {
      if (!winner || total > winner_score || (total == winner_score && ids_of(pick) < ids_of(*winner))) {
        winner = pick;
        winner_score = total;
      }
    }
    std::size_t c = 0;
    while (c < pick.size() && ++pick[c] == pools[c].size()) pick[c++] = 0;
    if (c == pick.size()) break;
  }
  if (!winner) fail(Errc::NoCompatibleBundle, "no combination of the top candidates is palette-compatible");
  for (std::size_t c = 0; c < pools.size(); ++c) best.items.push_back(pools[c][(*winner)[c]]);
  best.total_score = winner_score;
  return best;
}

Citations parse_citations(std::string_view s) {
  Citations c;
  std::size_t pos = 0;
  while ((pos = s.find('[', pos)) != std::string_view::npos) {
    std::size_t close = s.find(']', pos);
    if (close == std::string_view::npos) break;
    std::string_view body = s.substr(pos + 1, close - pos - 1);
    if (body.substr(0, 5) == "item:") {
      c.items.insert(std::string(body.substr(5)));
    } else if (body.substr(0, 5) == "fact:") {
      auto rest = body.substr(5);
      auto eq = rest.find('=');
      std::string slot(rest.substr(0, eq));
      std::string value = eq == std::string_view::npos ? "" : std::string(rest.substr(eq + 1));
      c.facts.emplace(std::move(slot), std::move(value));
    }
    pos = close + 1;
  }
  return c;
}

const std::vector<ExplanationTemplate>& default_templates() {
  static const std::vector<ExplanationTemplate> templates = {
      {"because", "We picked {title} {item} because you told us about {value} {fact}."},
      {"fits", "{title} {item} fits what we know about you: {fact}."},
      {"match", "{title} {item} is our closest match, in line with {value} {fact}."},
      {"item_only", "{title} {item} is our closest match for your request."},
  };
  return templates;
}

Explanation generate_explanation(const RankedList& recs, const std::vector<MemoryItem>& ctx,
                                 const std::vector<ExplanationTemplate>& templates, const Environment* env) {
  if (recs.entries.empty()) fail(Errc::InvalidArgument, "nothing to explain");
  auto facts = ctx_facts(ctx);
  const bool item_only = facts.empty();
  const ExplanationTemplate* chosen = nullptr;
  for (const auto& t : templates) {
    if (contains(t.text, "{fact}") != item_only) {
      chosen = &t;
      break;
    }
  }
  if (chosen == nullptr) fail(Errc::InvalidArgument, "no usable explanation template");

  const auto& top = recs.entries.front();
  std::string title = top.id;
  if (env != nullptr) {
    if (const auto* item = env->find_item(top.id)) title = item->title;
  }
  std::map<std::string, std::string> vars = {{"item", "[item:" + sanitize_citation(top.id) + "]"},
                                             {"title", title}};
  if (!item_only) {
    vars["fact"] = "[fact:" + sanitize_citation(facts.front().slot) + "=" + sanitize_citation(facts.front().value) + "]";
    vars["value"] = facts.front().value;
  }
  std::string out;
  const std::string& t = chosen->text;
  std::size_t i = 0;
  while (i < t.size()) {
    if (t[i] == '{') {
      std::size_t close = t.find('}', i);
      if (close != std::string::npos) {
        auto it = vars.find(t.substr(i + 1, close - i - 1));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += t[i++];
  }

  Explanation e;
  e.text = std::move(out);
  auto cites = parse_citations(e.text);
  e.cited_items = cites.items;
  for (const auto& [slot, _] : cites.facts) e.cited_facts.insert(slot);
  e.item_only = item_only;
  e.template_id = chosen->id;
  return e;
}

bool consistency_check(const Explanation& explanation, const RankedList& recs, const std::vector<MemoryItem>& ctx,
                       const BrandPolicy& policy) {
  auto cites = parse_citations(explanation.text);
  auto rec_ids = recs.ids();
  for (const auto& id : cites.items) {
    if (std::find(rec_ids.begin(), rec_ids.end(), id) == rec_ids.end()) return false;
  }
  auto facts = ctx_facts(ctx);
  for (const auto& [slot, value] : cites.facts) {
    bool aligned = std::any_of(facts.begin(), facts.end(), [&](const Fact& f) {
      return sanitize_citation(f.slot) == slot && sanitize_citation(f.value) == value;
    });
    if (!aligned) return false;
  }
  return check_compliance(explanation.text, policy);
}

RevisionResult explain_with_revision(const RankedList& recs, const std::vector<MemoryItem>& ctx,
                                     const BrandPolicy& policy, std::size_t max_rounds,
                                     std::vector<ExplanationTemplate> templates, const Environment* env) {
  if (max_rounds == 0) fail(Errc::InvalidArgument, "max_rounds must be positive");
  std::vector<Explanation> rejected;
  for (std::size_t round = 1; round <= max_rounds; ++round) {
    Explanation e;
    try {
      e = generate_explanation(recs, ctx, templates, env);
    } catch (const Error& err) {
      if (err.code() != Errc::InvalidArgument || recs.entries.empty()) throw;
      fail(Errc::RevisionExhausted, "no explanation template left after " + std::to_string(round - 1) + " rounds");
    }
    if (consistency_check(e, recs, ctx, policy)) return {std::move(e), round, std::move(rejected)};
    templates.erase(std::remove_if(templates.begin(), templates.end(),
                                   [&](const ExplanationTemplate& t) { return t.id == e.template_id; }),
                    templates.end());
    rejected.push_back(std::move(e));
  }
  fail(Errc::RevisionExhausted, "no consistent explanation within " + std::to_string(max_rounds) + " rounds");
}

}  // namespace agentrec
