#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls the code paths it is used to check.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "agentrec/memory.hpp"
#include "agentrec/rng.hpp"

namespace oracle {

/// Best index-order score sum over all 2^n subsets with length <= budget.
inline double brute_force_knapsack(const std::vector<agentrec::KnapsackEntry>& entries, std::size_t budget) {
  const std::size_t n = entries.size();
  double best = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double score = 0.0;
    std::size_t len = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((mask >> i) & 1U) {
        score += entries[i].score;
        len += entries[i].length;
      }
    }
    if (len <= budget && score > best) best = score;
  }
  return best;
}

/// Score every item, sort everything with the pinned tie-break, truncate.
inline std::vector<std::string> exhaustive_topk(const agentrec::MemoryStore& store, const std::string& query,
                                                std::size_t k) {
  struct Row {
    double score;
    agentrec::Timestamp ts;
    std::string text;
  };
  std::vector<Row> rows;
  for (const auto& m : store.items()) rows.push_back({agentrec::relevance_score(query, m), m.meta.timestamp,
                                                      m.canonical_text()});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.ts != b.ts) return a.ts < b.ts;
    return a.text < b.text;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < rows.size() && i < k; ++i) out.push_back(rows[i].text);
  return out;
}

/// Token-by-token tail using stream extraction.
inline std::string tail_tokens(const agentrec::MemoryStore& store, std::size_t L) {
  std::vector<std::string> all;
  for (const auto& t : store.raw_log()) {
    std::istringstream in(t.text);
    std::string w;
    while (in >> w) all.push_back(w);
  }
  std::size_t start = all.size() > L ? all.size() - L : 0;
  std::string out;
  for (std::size_t i = start; i < all.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += all[i];
  }
  return out;
}

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "gluten", "chocolate", "vanilla", "cake",   "party",  "mickey", "mouse",  "balloon", "banner", "sofa",
      "lamp",   "chair",     "blue",    "red",    "green",  "budget", "theme",  "guest",   "allergy", "favor",
      "candle", "plate",     "cup",     "gift",   "earthy", "boho",   "velvet", "oak",     "linen",  "rug"};
  return words;
}

inline std::string random_phrase(agentrec::Rng& rng, std::size_t min_words, std::size_t max_words) {
  std::size_t n = min_words + rng.below(max_words - min_words + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += vocabulary()[rng.below(vocabulary().size())];
  }
  return out;
}

/// Reference citation scanner: walks the text character by character looking
/// for "[item:ID]" and "[fact:SLOT=VALUE]" markers.
struct Citations {
  std::set<std::string> items;
  std::set<std::string> facts;
};

inline Citations scan_citations(const std::string& s) {
  Citations c;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '[') {
      ++i;
      continue;
    }
    std::size_t close = s.find(']', i);
    if (close == std::string::npos) break;
    std::string body = s.substr(i + 1, close - i - 1);
    if (body.rfind("item:", 0) == 0) {
      c.items.insert(body.substr(5));
    } else if (body.rfind("fact:", 0) == 0) {
      std::string rest = body.substr(5);
      c.facts.insert(rest.substr(0, rest.find('=')));
    }
    i = close + 1;
  }
  return c;
}

/// Regex-based compliance reference: word-boundary phrase search over the
/// lowercased text with tone markers blanked out.
inline bool reference_compliant(const std::string& text, const std::set<std::string>& banned,
                                const std::vector<std::pair<std::string, std::string>>& disclosures,
                                const std::optional<std::set<std::string>>& tones) {
  static const std::regex tone_re(R"(\[tone:([^\]]*)\])");
  static const std::regex word_re("[a-z0-9]+");
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  std::string body = lower(std::regex_replace(text, tone_re, " "));
  auto has = [&](const std::string& phrase) {
    std::string p = lower(phrase);
    std::vector<std::string> words;
    for (auto it = std::sregex_iterator(p.begin(), p.end(), word_re); it != std::sregex_iterator(); ++it)
      words.push_back(it->str());
    if (words.empty()) return false;
    std::string pat = "(^|[^a-z0-9])";
    for (std::size_t i = 0; i < words.size(); ++i) pat += (i ? "[^a-z0-9]+" : "") + words[i];
    pat += "($|[^a-z0-9])";
    return std::regex_search(body, std::regex(pat));
  };
  for (const auto& b : banned)
    if (has(b)) return false;
  for (const auto& [trigger, disclosure] : disclosures)
    if (has(trigger) && !has(disclosure)) return false;
  if (tones) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), tone_re); it != std::sregex_iterator(); ++it) {
      std::string t = lower((*it)[1].str());
      t.erase(0, t.find_first_not_of(" \t"));
      t.erase(t.find_last_not_of(" \t") + 1);
      bool ok = false;
      for (const auto& a : *tones) ok = ok || lower(a) == t;
      if (!ok) return false;
    }
  }
  return true;
}

}  // namespace oracle
