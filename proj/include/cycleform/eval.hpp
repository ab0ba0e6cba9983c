#pragma once
// Metrics and analysis over a frozen model pair: greedy cycle-consistency
// scoring with per-difficulty and per-domain breakdowns, a fixed-bin score
// histogram, echo detection, Mann-Whitney U significance, cross-model
// comparisons, qualitative dumps, and bootstrap intervals for mean scores.
//
// Scores here and training rewards share one code path (hashed-n-gram
// embeddings + cosine over the back-translated text), so an evaluation of a
// recorded rollout reproduces its reward bit-for-bit.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cycleform/common.hpp"
#include "cycleform/corpus.hpp"
#include "cycleform/embedder.hpp"

namespace cycleform::eval {

using TranslateFn = std::function<std::string(const std::string&)>;

inline constexpr int kHistogramBins = 20;  // over [-1, 1]; final bin closed

// Bin index for a score; values outside [-1, 1] clamp to the edge bins.
int histogram_bin(double score);

struct ScoredExample {
  std::string id;
  int difficulty = 0;
  std::string domain;
  std::string source;      // s
  std::string formal_hat;  // f(s)
  std::string back_text;   // g(f(s))
  double score = 0;        // cosine(e(s), e(back_text))
  bool echo = false;
};

struct PairwiseResult {
  std::string baseline;
  double delta_mean = 0;  // this model's mean minus the baseline's
  double u = 0;
  double p = 1;
};

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  int n = 0;
  double mean_cc = 0;
  double std_cc = 0;  // population standard deviation
  std::map<int, double> difficulty_mean;
  std::map<int, int> difficulty_count;
  std::map<std::string, double> domain_mean;
  std::map<std::string, int> domain_count;
  std::array<int, kHistogramBins> histogram{};
  bool has_ce = false;  // cross-entropy is attached separately when a
  double ce = 0;        // token-level model (not just text maps) is at hand
  std::map<int, double> ce_per_difficulty;
  int echo_count = 0;
  std::vector<PairwiseResult> pairwise;
};

struct EvalResult {
  std::vector<ScoredExample> examples;  // dataset order
  EvalReport report;
};

// True when the back-translation reproduces the source: whitespace-collapsed
// string equality, or embedding cosine within 1e-9 of 1.
bool detect_echo(const std::string& source, const std::string& back_translation,
                 const embedder::Embedder& emb);

// Greedy scoring of every example: formal_hat = f(s), back = g(formal_hat),
// score = cosine of source and back-translation embeddings.
EvalResult evaluate_model(const TranslateFn& f, const TranslateFn& g,
                          const std::vector<corpus::Example>& dataset,
                          const embedder::Embedder& emb,
                          const std::string& model_id,
                          const std::string& dataset_id);

struct MannWhitneyResult {
  double u = 0;       // U statistic of the first sample
  double p = 1;       // two-sided
  bool exact = false;  // exact enumeration (small n) vs normal approximation
};

// Rank-sum U with midrank tie handling. Exact two-sided p by enumerating all
// label assignments when the combined size is at most 16; otherwise a normal
// approximation with tie-corrected variance and continuity correction.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b);

struct ComparisonRow {
  std::string model_a;
  std::string model_b;
  double mean_a = 0;
  double mean_b = 0;
  double delta = 0;  // mean_a - mean_b
  double u = 0;
  double p = 1;
};

// Pairwise comparisons of evaluations taken on one dataset; `pairings` as
// index pairs into `results`, empty meaning every unordered pair in order.
std::vector<ComparisonRow> compare_models(
    const std::vector<EvalResult>& results,
    std::vector<std::pair<std::size_t, std::size_t>> pairings = {});

// Text report of the k/2 highest- and k/2 lowest-scoring examples (highest
// half first, descending; then lowest half ascending). Deterministic bytes.
std::string qualitative_dump(const TranslateFn& f, const TranslateFn& g,
                             const std::vector<corpus::Example>& dataset,
                             int k, const embedder::Embedder& emb);

struct Interval {
  double lo = 0;
  double hi = 0;
};

// Percentile bootstrap confidence interval for the mean at confidence
// 1 - alpha, resampling with the portable generator.
Interval bootstrap_mean_ci(const std::vector<double>& values, int resamples,
                           std::uint64_t seed, double alpha = 0.05);

nlohmann::json report_to_json(const EvalReport& r);
// Inverse of report_to_json; malformed documents raise DataError.
EvalReport report_from_json(const nlohmann::json& j);
std::string difficulty_csv(const EvalReport& r);
std::string domain_csv(const EvalReport& r);
std::string histogram_csv(const EvalReport& r);
std::string scores_csv(const std::vector<ScoredExample>& examples);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace cycleform::eval
