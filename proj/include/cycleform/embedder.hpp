#pragma once
// Sentence embedding e(.) and the cycle-consistency score built on it. The
// reference embedder hashes character n-grams (n in {2,3}, over Unicode
// codepoints) into D signed buckets and L2-normalizes. The hash is fixed
// bit-exactly: h = byte_hash(utf8(ngram)) with the shared splitmix64 chain
// and seed 0x9E3779B97F4A7C15; bucket = h mod D; sign = +1 when the top bit
// of h is clear, else -1. Any embedder behind the same interface can replace
// it; reward and evaluation must share one instance.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cycleform/common.hpp"

namespace cycleform::embedder {

using Vector = Eigen::VectorXd;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vector embed(std::string_view text) const = 0;
  virtual int dim() const = 0;
};

class HashedNgramEmbedder final : public Embedder {
 public:
  explicit HashedNgramEmbedder(int dim = 256, std::vector<int> ngram_sizes = {2, 3});

  // Unit-norm vector, or the zero vector for text that is empty, entirely
  // whitespace, or too short to contain any n-gram.
  Vector embed(std::string_view text) const override;
  int dim() const override { return dim_; }
  const std::vector<int>& ngram_sizes() const { return ngram_sizes_; }

 private:
  int dim_;
  std::vector<int> ngram_sizes_;
};

// 0 when either vector is (numerically) zero; otherwise the cosine.
double cosine(const Vector& u, const Vector& v);

using BackTranslator = std::function<std::string(const std::string&)>;

// cos(e(s), e(g(formal_hat))): how much of the original statement survives a
// round trip through the candidate formalization.
double cycle_consistency(const std::string& s, const std::string& formal_hat,
                         const BackTranslator& g, const Embedder& e);

}  // namespace cycleform::embedder
