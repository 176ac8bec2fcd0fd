#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace agentrec::text {

/// Maximal runs of non-whitespace characters. This is the token unit used for
/// every budget in the library (context windows, STM tails, knapsack lengths).
std::vector<std::string_view> whitespace_tokens(std::string_view s);

std::size_t token_count(std::string_view s);

std::string to_lower(std::string_view s);

std::string trim(std::string_view s);

/// Lowercased maximal alphanumeric runs; everything else separates.
std::vector<std::string> word_tokens(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = kFnvOffsetBasis) {
  std::uint64_t h = basis;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace agentrec::text
