#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace agentrec {

inline constexpr std::size_t kEmbeddingDim = 64;
inline constexpr std::uint64_t kEmbeddingSeed = 248;

/// Dense key vector. Either all-zero (the empty-text sentinel) or unit L2 norm.
struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool is_zero() const;

  bool operator==(const EmbeddingVector&) const = default;
};

/// Signed feature hashing of lowercased alphanumeric tokens.
///
/// Each token t is hashed as h = splitmix64(fnv1a64(t) XOR kEmbeddingSeed),
/// where fnv1a64 is 64-bit FNV-1a with the standard offset basis. The token
/// contributes -1 to bucket h mod dim when bit 63 of h is set, +1 otherwise.
/// The summed vector is L2-normalized. A text without tokens (or whose contributions
/// cancel exactly) maps to the all-zero vector.
EmbeddingVector embed_text(std::string_view text, std::size_t dim = kEmbeddingDim);

/// Scales to unit norm; all-zero input stays all-zero.
EmbeddingVector normalized(std::vector<double> values);

/// Raw cosine similarity; 0 when either side is all-zero.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Non-negative relevance: max(0, cosine), exactly 1 for identical non-zero keys.
double relevance(const EmbeddingVector& query, const EmbeddingVector& key);

}  // namespace agentrec
