#include "cycleform/embedder.hpp"

#include <cctype>

namespace cycleform::embedder {

HashedNgramEmbedder::HashedNgramEmbedder(int dim, std::vector<int> ngram_sizes)
    : dim_(dim), ngram_sizes_(std::move(ngram_sizes)) {
  if (dim_ < 1) throw ConfigError("embedder dimension must be >= 1");
  if (ngram_sizes_.empty()) throw ConfigError("embedder needs >= 1 n-gram size");
  for (int n : ngram_sizes_)
    if (n < 1) throw ConfigError("n-gram sizes must be >= 1");
}

Vector HashedNgramEmbedder::embed(std::string_view text) const {
  Vector v = Vector::Zero(dim_);
  bool all_ws = true;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      all_ws = false;
      break;
    }
  }
  if (all_ws) return v;

  auto cps = utf8_decode(text);
  std::string ngram_bytes;
  for (int n : ngram_sizes_) {
    if (cps.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cps.size(); ++i) {
      ngram_bytes.clear();
      for (int k = 0; k < n; ++k) utf8_append(ngram_bytes, cps[i + k]);
      std::uint64_t h = byte_hash(ngram_bytes);
      int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim_));
      double sign = (h >> 63) ? -1.0 : 1.0;
      v[bucket] += sign;
    }
  }
  double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

double cosine(const Vector& u, const Vector& v) {
  double nu = u.norm();
  double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return u.dot(v) / (nu * nv);
}

double cycle_consistency(const std::string& s, const std::string& formal_hat,
                         const BackTranslator& g, const Embedder& e) {
  return cosine(e.embed(s), e.embed(g(formal_hat)));
}

}  // namespace cycleform::embedder
