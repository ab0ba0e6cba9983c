#pragma once
// Corpus hygiene: near-duplicate removal, TF-IDF decontamination against a
// benchmark problem set, and stratified split assembly. Removal against the
// benchmark requires BOTH cosine similarity above the threshold AND membership
// in that problem's top-k most similar examples; ties break by id ascending.

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cycleform/corpus.hpp"

namespace cycleform::decontam {

inline constexpr const char* kTokenizationRule = "fold-strip-ws-v1";

// Case-folded terms: maximal runs of [a-z0-9] or bytes >= 0x80; every other
// byte separates. "Über-cat, 3x!" -> {"ber"... }: high bytes kept as-is.
std::vector<std::string> tfidf_terms(std::string_view text);

// Sparse vector sorted by term index.
using SparseVec = std::vector<std::pair<int, double>>;

double sparse_cosine(const SparseVec& a, const SparseVec& b);

struct TfidfModel {
  std::map<std::string, int> vocabulary;  // term -> column
  std::vector<double> idf;                // ln((1+N)/(1+df)) + 1
  int n_docs = 0;
  std::string tokenization_rule = kTokenizationRule;

  // L2-normalized tf-idf vector; unknown terms are dropped; all-unknown or
  // empty text yields the zero vector.
  SparseVec transform(std::string_view text) const;
};

TfidfModel tfidf_fit(const std::vector<std::string>& documents);

// Cosine of the two transformed strings; 0 when either vector is zero.
double tfidf_similarity(const TfidfModel& model, std::string_view a,
                        std::string_view b);

struct DedupResult {
  std::vector<corpus::Example> kept;
  // id of each dropped example and the id of the earlier survivor it matched.
  std::vector<std::pair<std::string, std::string>> dropped;
};

// Keeps the first occurrence per normalized nl (whitespace-collapsed,
// case-folded); otherwise order-preserving.
DedupResult dedup(const std::vector<corpus::Example>& examples);

struct DecontamResult {
  std::vector<corpus::Example> kept;
  std::vector<std::string> removed_ids;  // ascending
  // benchmark index -> ids that problem marked (its thresholded top-k).
  std::map<int, std::vector<std::string>> marks;
};

// Model is fitted on examples' nl plus the benchmark problems, then each
// problem marks its top_k most similar examples among those with similarity
// strictly above threshold. top_k = 0 disables the rank cut.
DecontamResult decontaminate(const std::vector<corpus::Example>& examples,
                             const std::vector<std::string>& benchmark,
                             double threshold, int top_k);

struct SplitPlan {
  int sft_cap_per_difficulty = 10000;  // cap on the SFT pool (train + val)
  double val_fraction = 0.05;          // carved out of the capped SFT pool
  int rl_cap_per_difficulty = 1000;
  int heldout_per_difficulty = 100;
  double threshold = 0.5;  // decontamination settings echoed into manifests
  int top_k = 4;

  void validate() const;
  nlohmann::json to_json() const;
};

// Stratified assignment, per difficulty under a per-bucket stream of `seed`:
// shuffle, fill heldout first, then the SFT pool (val carved by val_fraction,
// floor), then RL prompts from what is left. Short buckets produce warnings,
// never errors. Split names: sft_train, sft_val, rl_prompts, heldout.
corpus::CorpusManifest make_splits(const std::vector<corpus::Example>& examples,
                                   const SplitPlan& plan, std::uint64_t seed);

}  // namespace cycleform::decontam
