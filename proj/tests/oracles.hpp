#pragma once
// Test-side reference implementations, written independently of the library
// code paths they check: dense-matrix TF-IDF decontamination, exhaustive
// rank-statistic enumeration, and a direct n-gram counting embedder. These
// trade efficiency for obviousness.

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cycleform/corpus.hpp"

namespace oracles {

// Terms: lowercased maximal alphanumeric-or-high-byte runs.
inline std::vector<std::string> simple_terms(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char u : s) {
    if (u >= 0x80 || std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Full dense pipeline: term-document count matrix over examples' nl plus the
// benchmark strings, smoothed idf, row normalization, explicit similarity
// matrix, then per-problem ranking with (similarity desc, id asc) ties.
// top_k = 0 means no rank cut.
inline std::set<std::string> dense_decontam_removed(
    const std::vector<cycleform::corpus::Example>& examples,
    const std::vector<std::string>& benchmark, double threshold, int top_k) {
  const std::size_t ne = examples.size();
  const std::size_t nb = benchmark.size();
  std::vector<std::string> docs;
  for (const auto& ex : examples) docs.push_back(ex.nl);
  for (const auto& b : benchmark) docs.push_back(b);

  std::map<std::string, int> vocab;
  for (const auto& d : docs)
    for (const auto& t : simple_terms(d)) vocab.emplace(t, 0);
  int col = 0;
  for (auto& [t, c] : vocab) c = col++;

  const std::size_t nd = docs.size();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(nd), static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < nd; ++i)
    for (const auto& t : simple_terms(docs[i]))
      counts(static_cast<Eigen::Index>(i), vocab[t]) += 1.0;

  Eigen::VectorXd idf(static_cast<Eigen::Index>(vocab.size()));
  for (Eigen::Index j = 0; j < idf.size(); ++j) {
    double df = 0;
    for (Eigen::Index i = 0; i < counts.rows(); ++i)
      if (counts(i, j) > 0) df += 1;
    idf(j) = std::log((1.0 + static_cast<double>(nd)) / (1.0 + df)) + 1.0;
  }
  Eigen::MatrixXd w = counts.array().rowwise() * idf.transpose().array();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double n = w.row(i).norm();
    if (n > 0) w.row(i) /= n;
  }

  std::set<std::string> removed;
  for (std::size_t b = 0; b < nb; ++b) {
    Eigen::VectorXd bench = w.row(static_cast<Eigen::Index>(ne + b));
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t i = 0; i < ne; ++i) {
      double sim = w.row(static_cast<Eigen::Index>(i)).dot(bench);
      if (sim > threshold) cand.emplace_back(sim, i);
    }
    std::sort(cand.begin(), cand.end(), [&](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return examples[x.second].id < examples[y.second].id;
    });
    std::size_t n = top_k == 0
                        ? cand.size()
                        : std::min<std::size_t>(cand.size(),
                                                static_cast<std::size_t>(top_k));
    for (std::size_t r = 0; r < n; ++r)
      removed.insert(examples[cand[r].second].id);
  }
  return removed;
}

// Character n-gram counting for the embedder checks: multiset of codepoint
// n-grams keyed by their UTF-8 bytes.
inline std::map<std::string, int> ngram_counts(const std::string& text,
                                               const std::vector<int>& sizes) {
  std::map<std::string, int> out;
  auto cps = cycleform::utf8_decode(text);
  for (int n : sizes) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cps.size(); ++i) {
      std::string g;
      for (int k = 0; k < n; ++k) cycleform::utf8_append(g, cps[i + k]);
      out[g] += 1;
    }
  }
  return out;
}

// Documented embedding hash, restated from first principles: one splitmix64
// step per byte from the golden-ratio seed; bucket = h mod D, sign from the
// top bit.
inline std::uint64_t spec_mix_step(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline Eigen::VectorXd dense_ngram_embed(const std::string& text, int dim,
                                         const std::vector<int>& sizes) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  bool all_ws = true;
  for (unsigned char c : text)
    if (!std::isspace(c)) all_ws = false;
  if (all_ws) return v;
  for (const auto& [gram, count] : ngram_counts(text, sizes)) {
    std::uint64_t h = 0x9E3779B97F4A7C15ull;
    for (unsigned char b : gram) h = spec_mix_step(h ^ b);
    int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim));
    double sign = (h >> 63) ? -1.0 : 1.0;
    v[bucket] += sign * count;
  }
  double n = v.norm();
  if (n > 0) v /= n;
  return v;
}

// Cosine over raw (unhashed) n-gram count vectors. Equal to the hashed
// cosine whenever no two distinct n-grams of the fixture share a bucket.
inline double unhashed_ngram_cosine(const std::string& a, const std::string& b,
                                    const std::vector<int>& sizes) {
  auto ca = ngram_counts(a, sizes);
  auto cb = ngram_counts(b, sizes);
  double dot = 0, na = 0, nb = 0;
  for (const auto& [g, c] : ca) {
    na += static_cast<double>(c) * c;
    auto it = cb.find(g);
    if (it != cb.end()) dot += static_cast<double>(c) * it->second;
  }
  for (const auto& [g, c] : cb) nb += static_cast<double>(c) * c;
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace oracles
