#include "agentrec/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "agentrec/error.hpp"
#include "agentrec/rng.hpp"
#include "agentrec/text.hpp"

namespace agentrec {

bool EmbeddingVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

EmbeddingVector normalized(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (sq > 0.0) {
    double inv = 1.0 / std::sqrt(sq);
    for (double& v : values) v *= inv;
  }
  return EmbeddingVector{std::move(values)};
}

EmbeddingVector embed_text(std::string_view text, std::size_t dim) {
  if (dim == 0) fail(Errc::InvalidArgument, "embedding dimension must be positive");
  std::vector<double> acc(dim, 0.0);
  for (const auto& tok : text::word_tokens(text)) {
    std::uint64_t h = splitmix64(text::fnv1a64(tok) ^ kEmbeddingSeed);
    double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    acc[h % dim] += sign;
  }
  return normalized(std::move(acc));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(Errc::InvalidArgument, "cosine of vectors with different dimensions");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

double relevance(const EmbeddingVector& query, const EmbeddingVector& key) {
  if (query.is_zero() || key.is_zero()) return 0.0;
  if (query == key) return 1.0;
  return std::clamp(cosine(query, key), 0.0, 1.0);
}

}  // namespace agentrec
