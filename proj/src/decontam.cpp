#include "cycleform/decontam.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace cycleform::decontam {

std::vector<std::string> tfidf_terms(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    bool term_char = (u >= 0x80) || std::isalnum(u);
    if (term_char) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double sparse_cosine(const SparseVec& a, const SparseVec& b) {
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) ++i;
    else if (a[i].first > b[j].first) ++j;
    else dot += a[i++].second * b[j++].second;
  }
  return dot;
}

TfidfModel tfidf_fit(const std::vector<std::string>& documents) {
  if (documents.empty()) throw ConfigError("tfidf_fit requires >= 1 document");
  TfidfModel m;
  m.n_docs = static_cast<int>(documents.size());
  std::map<std::string, int> df;
  for (const auto& doc : documents) {
    std::set<std::string> seen;
    for (auto& t : tfidf_terms(doc)) seen.insert(std::move(t));
    for (const auto& t : seen) df[t]++;
  }
  int idx = 0;
  m.idf.reserve(df.size());
  for (const auto& [term, d] : df) {
    m.vocabulary.emplace(term, idx++);
    m.idf.push_back(std::log((1.0 + m.n_docs) / (1.0 + d)) + 1.0);
  }
  return m;
}

SparseVec TfidfModel::transform(std::string_view text) const {
  std::map<int, double> tf;
  for (const auto& t : tfidf_terms(text)) {
    auto it = vocabulary.find(t);
    if (it != vocabulary.end()) tf[it->second] += 1.0;
  }
  SparseVec v;
  v.reserve(tf.size());
  double sq = 0.0;
  for (const auto& [col, count] : tf) {
    double w = count * idf[static_cast<std::size_t>(col)];
    v.emplace_back(col, w);
    sq += w * w;
  }
  if (sq > 0.0) {
    double inv = 1.0 / std::sqrt(sq);
    for (auto& [col, w] : v) w *= inv;
  }
  return v;
}

double tfidf_similarity(const TfidfModel& model, std::string_view a,
                        std::string_view b) {
  return sparse_cosine(model.transform(a), model.transform(b));
}

DedupResult dedup(const std::vector<corpus::Example>& examples) {
  DedupResult out;
  std::unordered_map<std::string, std::string> survivor_by_key;
  for (const auto& ex : examples) {
    std::string key = fold_whitespace_lower(ex.nl);
    auto [it, inserted] = survivor_by_key.emplace(key, ex.id);
    if (inserted) {
      out.kept.push_back(ex);
    } else {
      out.dropped.emplace_back(ex.id, it->second);
    }
  }
  return out;
}

DecontamResult decontaminate(const std::vector<corpus::Example>& examples,
                             const std::vector<std::string>& benchmark,
                             double threshold, int top_k) {
  if (threshold < 0.0 || threshold > 1.0)
    throw ConfigError("decontamination threshold must be in [0, 1]");
  if (top_k < 0) throw ConfigError("top_k must be >= 0 (0 = no rank cut)");
  DecontamResult out;
  if (examples.empty()) return out;

  std::vector<std::string> docs;
  docs.reserve(examples.size() + benchmark.size());
  for (const auto& ex : examples) docs.push_back(ex.nl);
  for (const auto& b : benchmark) docs.push_back(b);
  TfidfModel model = tfidf_fit(docs);

  std::vector<SparseVec> ex_vecs(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i)
    ex_vecs[i] = model.transform(examples[i].nl);

  std::set<std::string> removed;
  for (std::size_t b = 0; b < benchmark.size(); ++b) {
    SparseVec bv = model.transform(benchmark[b]);
    // (similarity, example index) for everything strictly above threshold.
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      double sim = sparse_cosine(ex_vecs[i], bv);
      if (sim > threshold) cand.emplace_back(sim, i);
    }
    std::sort(cand.begin(), cand.end(), [&](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return examples[x.second].id < examples[y.second].id;
    });
    std::size_t keep_n = top_k == 0 ? cand.size()
                                    : std::min(cand.size(),
                                               static_cast<std::size_t>(top_k));
    auto& marks = out.marks[static_cast<int>(b)];
    for (std::size_t r = 0; r < keep_n; ++r) {
      marks.push_back(examples[cand[r].second].id);
      removed.insert(examples[cand[r].second].id);
    }
    if (marks.empty()) out.marks.erase(static_cast<int>(b));
  }

  for (const auto& ex : examples) {
    if (!removed.count(ex.id)) out.kept.push_back(ex);
  }
  out.removed_ids.assign(removed.begin(), removed.end());
  return out;
}

void SplitPlan::validate() const {
  if (sft_cap_per_difficulty < 0 || rl_cap_per_difficulty < 0 ||
      heldout_per_difficulty < 0)
    throw ConfigError("split caps must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in (0, 1)");
  if (threshold < 0.0 || threshold > 1.0)
    throw ConfigError("threshold must be in [0, 1]");
  if (top_k < 0) throw ConfigError("top_k must be >= 0");
}

nlohmann::json SplitPlan::to_json() const {
  return {{"sft_cap_per_difficulty", sft_cap_per_difficulty},
          {"val_fraction", val_fraction},
          {"rl_cap_per_difficulty", rl_cap_per_difficulty},
          {"heldout_per_difficulty", heldout_per_difficulty},
          {"threshold", threshold},
          {"top_k", top_k}};
}

corpus::CorpusManifest make_splits(const std::vector<corpus::Example>& examples,
                                   const SplitPlan& plan, std::uint64_t seed) {
  plan.validate();
  corpus::CorpusManifest m;
  m.seed = seed;
  m.generator_version = corpus::kGeneratorVersion;
  m.plan = plan.to_json();
  m.splits["sft_train"] = {};
  m.splits["sft_val"] = {};
  m.splits["rl_prompts"] = {};
  m.splits["heldout"] = {};

  std::map<int, std::vector<std::size_t>> by_difficulty;
  for (std::size_t i = 0; i < examples.size(); ++i)
    by_difficulty[examples[i].difficulty].push_back(i);

  for (auto& [d, idxs] : by_difficulty) {
    m.counts_per_difficulty[d] = static_cast<int>(idxs.size());
    Rng rng(mix64(seed, static_cast<std::uint64_t>(d)));
    rng.shuffle(idxs);
    std::size_t pos = 0;
    auto take = [&](std::size_t want, const char* split) {
      std::size_t got = std::min(want, idxs.size() - pos);
      for (std::size_t k = 0; k < got; ++k)
        m.splits[split].push_back(examples[idxs[pos + k]].id);
      pos += got;
      if (got < want) {
        m.warnings.push_back("difficulty " + std::to_string(d) + ": " + split +
                             " short (wanted " + std::to_string(want) +
                             ", got " + std::to_string(got) + ")");
      }
      return got;
    };
    take(static_cast<std::size_t>(plan.heldout_per_difficulty), "heldout");
    std::size_t pool = std::min(static_cast<std::size_t>(plan.sft_cap_per_difficulty),
                                idxs.size() - pos);
    std::size_t n_val =
        static_cast<std::size_t>(std::floor(static_cast<double>(pool) *
                                            plan.val_fraction));
    std::size_t n_train = pool - n_val;
    take(n_train, "sft_train");
    take(n_val, "sft_val");
    if (pool < static_cast<std::size_t>(plan.sft_cap_per_difficulty)) {
      m.warnings.push_back("difficulty " + std::to_string(d) +
                           ": sft pool short (wanted " +
                           std::to_string(plan.sft_cap_per_difficulty) +
                           ", got " + std::to_string(pool) + ")");
    }
    take(static_cast<std::size_t>(plan.rl_cap_per_difficulty), "rl_prompts");
  }
  m.validate_disjoint();
  return m;
}

}  // namespace cycleform::decontam
