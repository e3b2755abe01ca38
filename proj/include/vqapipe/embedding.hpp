#pragma once

// Sentence embeddings and cosine similarity. The feature-hashing embedder is
// the default scoring backend: pure, cheap, and available regardless of what
// the serving stack exposes.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vqapipe/common.hpp"
#include "vqapipe/error.hpp"

namespace vqapipe {

struct Embedding {
  std::vector<double> values;

  size_t dim() const { return values.size(); }

  bool is_zero() const {
    for (double v : values) {
      if (v != 0.0) return false;
    }
    return true;
  }
};

// dot(a,b) / (|a||b|), 0 when either norm is zero. For equal inputs the
// denominator is computed as sqrt(dot*dot), which rounds back to dot exactly,
// so cosine(v, v) == 1.0 bit-for-bit.
inline double cosine(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw DimMismatch("cosine: dim " + std::to_string(a.dim()) + " vs " +
                      std::to_string(b.dim()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

inline constexpr size_t kHashEmbedderMinDim = 64;
inline constexpr size_t kDefaultEmbeddingDim = 1024;

inline size_t hash_bucket(std::string_view token, size_t dim) {
  return static_cast<size_t>(fnv1a64(token) % dim);
}

inline double hash_sign(std::string_view token) {
  return (fnv1a64(token, 0x84222325cbf29ce4ull) & 1) ? 1.0 : -1.0;
}

// Bag-of-words feature hashing: lowercase, split on non-alphanumerics, signed
// count per bucket, L2-normalized unless zero. Pure function of the text.
inline Embedding hash_embed(std::string_view text, size_t dim = kDefaultEmbeddingDim) {
  if (dim < kHashEmbedderMinDim) {
    throw Error("hash_embed: dim must be >= " + std::to_string(kHashEmbedderMinDim));
  }
  Embedding out;
  out.values.assign(dim, 0.0);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    out.values[hash_bucket(token, dim)] += hash_sign(token);
    token.clear();
  };
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      token += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();

  double norm2 = 0.0;
  for (double v : out.values) norm2 += v * v;
  if (norm2 > 0.0) {
    double inv = 1.0 / std::sqrt(norm2);
    for (double& v : out.values) v *= inv;
  }
  return out;
}

inline std::string hash_embedder_id(size_t dim = kDefaultEmbeddingDim) {
  return "hash-" + std::to_string(dim);
}

}  // namespace vqapipe
