#include "cycleform/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace cycleform::eval {

namespace {

// Collapse whitespace runs to single spaces and trim the ends; case is
// preserved, unlike the corpus-level fold used for deduplication.
std::string collapse_whitespace(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
      continue;
    }
    if (pending) {
      out.push_back(' ');
      pending = false;
    }
    out.push_back(c);
  }
  return out;
}

// Midranks of `values` (1-based, ties averaged), indexed like the input.
std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  return rank;
}

ScoredExample score_one(const TranslateFn& f, const TranslateFn& g,
                        const corpus::Example& ex,
                        const embedder::Embedder& emb) {
  ScoredExample se;
  se.id = ex.id;
  se.difficulty = ex.difficulty;
  se.domain = ex.domain;
  se.source = ex.nl;
  se.formal_hat = f(ex.nl);
  se.back_text = g(se.formal_hat);
  se.score = embedder::cosine(emb.embed(se.source), emb.embed(se.back_text));
  se.echo = detect_echo(se.source, se.back_text, emb);
  return se;
}

}  // namespace

int histogram_bin(double score) {
  double c = std::clamp(score, -1.0, 1.0);
  int b = static_cast<int>(std::floor((c + 1.0) * 10.0));
  return std::clamp(b, 0, kHistogramBins - 1);
}

bool detect_echo(const std::string& source, const std::string& back_translation,
                 const embedder::Embedder& emb) {
  if (collapse_whitespace(source) == collapse_whitespace(back_translation))
    return true;
  return embedder::cosine(emb.embed(source), emb.embed(back_translation)) >=
         1.0 - 1e-9;
}

EvalResult evaluate_model(const TranslateFn& f, const TranslateFn& g,
                          const std::vector<corpus::Example>& dataset,
                          const embedder::Embedder& emb,
                          const std::string& model_id,
                          const std::string& dataset_id) {
  if (dataset.empty()) throw DataError("evaluate_model requires examples");
  EvalResult out;
  EvalReport& rep = out.report;
  rep.model_id = model_id;
  rep.dataset_id = dataset_id;
  rep.n = static_cast<int>(dataset.size());

  std::map<int, double> dsum;
  std::map<std::string, double> gsum;
  double sum = 0;
  for (const auto& ex : dataset) {
    ScoredExample se = score_one(f, g, ex, emb);
    sum += se.score;
    dsum[se.difficulty] += se.score;
    rep.difficulty_count[se.difficulty] += 1;
    gsum[se.domain] += se.score;
    rep.domain_count[se.domain] += 1;
    rep.histogram[static_cast<std::size_t>(histogram_bin(se.score))] += 1;
    if (se.echo) ++rep.echo_count;
    out.examples.push_back(std::move(se));
  }
  rep.mean_cc = sum / rep.n;
  double var = 0;
  for (const auto& se : out.examples)
    var += (se.score - rep.mean_cc) * (se.score - rep.mean_cc);
  rep.std_cc = std::sqrt(var / rep.n);
  for (const auto& [d, s] : dsum)
    rep.difficulty_mean[d] = s / rep.difficulty_count.at(d);
  for (const auto& [dom, s] : gsum)
    rep.domain_mean[dom] = s / rep.domain_count.at(dom);
  return out;
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.empty() || b.empty())
    throw DataError("mann_whitney_u requires two non-empty samples");
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<double> rank = midranks(pooled);

  double ra = 0;
  for (std::size_t i = 0; i < na; ++i) ra += rank[i];
  const double offset = static_cast<double>(na) * (na + 1) / 2.0;
  const double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;

  MannWhitneyResult res;
  res.u = ra - offset;

  if (n <= 16) {
    res.exact = true;
    // Midranks depend only on the pooled multiset, so every label assignment
    // is a size-na subset of the fixed rank vector.
    const double target = std::abs(res.u - mu);
    std::uint64_t extreme = 0, total = 0;
    std::vector<std::size_t> comb(na);
    std::iota(comb.begin(), comb.end(), std::size_t{0});
    while (true) {
      double rs = 0;
      for (std::size_t i : comb) rs += rank[i];
      if (std::abs(rs - offset - mu) >= target - 1e-9) ++extreme;
      ++total;
      std::size_t i = na;
      while (i > 0 && comb[i - 1] == n - na + (i - 1)) --i;
      if (i == 0) break;
      ++comb[i - 1];
      for (std::size_t j = i; j < na; ++j) comb[j] = comb[j - 1] + 1;
    }
    res.p = static_cast<double>(extreme) / static_cast<double>(total);
    return res;
  }

  // Tie-corrected variance over the pooled sample.
  double tie_term = 0;
  {
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
      double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  double nn = static_cast<double>(n);
  double sigma2 = (static_cast<double>(na) * static_cast<double>(nb) / 12.0) *
                  ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (sigma2 <= 0) {
    res.p = 1.0;  // every pooled value tied; no evidence either way
    return res;
  }
  double zmag = std::max(0.0, std::abs(res.u - mu) - 0.5) / std::sqrt(sigma2);
  res.p = std::min(1.0, std::erfc(zmag / std::sqrt(2.0)));
  return res;
}

std::vector<ComparisonRow> compare_models(
    const std::vector<EvalResult>& results,
    std::vector<std::pair<std::size_t, std::size_t>> pairings) {
  if (results.empty()) throw DataError("compare_models requires evaluations");
  for (const auto& r : results)
    if (r.report.dataset_id != results[0].report.dataset_id)
      throw DataError("compare_models requires a shared dataset: '" +
                      r.report.dataset_id + "' vs '" +
                      results[0].report.dataset_id + "'");
  if (pairings.empty())
    for (std::size_t i = 0; i < results.size(); ++i)
      for (std::size_t j = i + 1; j < results.size(); ++j)
        pairings.emplace_back(i, j);

  std::vector<ComparisonRow> rows;
  for (auto [i, j] : pairings) {
    if (i >= results.size() || j >= results.size())
      throw DataError("compare_models pairing index out of range");
    std::vector<double> sa, sb;
    for (const auto& e : results[i].examples) sa.push_back(e.score);
    for (const auto& e : results[j].examples) sb.push_back(e.score);
    auto mw = mann_whitney_u(sa, sb);
    ComparisonRow row;
    row.model_a = results[i].report.model_id;
    row.model_b = results[j].report.model_id;
    row.mean_a = results[i].report.mean_cc;
    row.mean_b = results[j].report.mean_cc;
    row.delta = row.mean_a - row.mean_b;
    row.u = mw.u;
    row.p = mw.p;
    rows.push_back(row);
  }
  return rows;
}

std::string qualitative_dump(const TranslateFn& f, const TranslateFn& g,
                             const std::vector<corpus::Example>& dataset,
                             int k, const embedder::Embedder& emb) {
  if (k < 0 || static_cast<std::size_t>(k) > dataset.size())
    throw DataError("qualitative_dump needs 0 <= k <= dataset size");
  std::vector<ScoredExample> scored;
  for (const auto& ex : dataset) scored.push_back(score_one(f, g, ex, emb));
  std::sort(scored.begin(), scored.end(),
            [](const ScoredExample& x, const ScoredExample& y) {
              if (x.score != y.score) return x.score > y.score;
              return x.id < y.id;
            });
  const int hi = (k + 1) / 2;
  const int lo = k / 2;

  auto block = [](const ScoredExample& se) {
    return "== " + se.id + " (score " + format_double(se.score) +
           (se.echo ? ", echo" : "") + ") ==\nsource: " + se.source +
           "\nformal: " + se.formal_hat + "\nback:   " + se.back_text + "\n";
  };
  std::string out = "highest " + std::to_string(hi) + " of " +
                    std::to_string(dataset.size()) + "\n";
  for (int i = 0; i < hi; ++i) out += block(scored[static_cast<std::size_t>(i)]);
  out += "lowest " + std::to_string(lo) + "\n";
  for (int i = 0; i < lo; ++i)
    out += block(scored[scored.size() - 1 - static_cast<std::size_t>(i)]);
  return out;
}

Interval bootstrap_mean_ci(const std::vector<double>& values, int resamples,
                           std::uint64_t seed, double alpha) {
  if (values.empty() || resamples < 1)
    throw DataError("bootstrap_mean_ci requires values and resamples >= 1");
  if (alpha <= 0 || alpha >= 1)
    throw ConfigError("bootstrap alpha must lie in (0, 1)");
  Rng rng(seed);
  const std::size_t n = values.size();
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += values[rng.below(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  auto at = [&](double q) {
    auto idx = static_cast<std::size_t>(
        std::llround(q * static_cast<double>(resamples - 1)));
    return means[idx];
  };
  return {at(alpha / 2), at(1.0 - alpha / 2)};
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json per_difficulty = nlohmann::json::object();
  for (const auto& [d, m] : r.difficulty_mean) {
    nlohmann::json row = {{"mean_cc", m}, {"count", r.difficulty_count.at(d)}};
    if (r.has_ce && r.ce_per_difficulty.count(d))
      row["ce"] = r.ce_per_difficulty.at(d);
    per_difficulty[std::to_string(d)] = row;
  }
  nlohmann::json per_domain = nlohmann::json::object();
  for (const auto& [dom, m] : r.domain_mean)
    per_domain[dom] = {{"mean_cc", m}, {"count", r.domain_count.at(dom)}};
  nlohmann::json pairwise = nlohmann::json::array();
  for (const auto& pw : r.pairwise)
    pairwise.push_back({{"baseline", pw.baseline},
                        {"delta_mean", pw.delta_mean},
                        {"u", pw.u},
                        {"p", pw.p}});
  nlohmann::json j = {{"model_id", r.model_id},
                      {"dataset_id", r.dataset_id},
                      {"n", r.n},
                      {"mean_cc", r.mean_cc},
                      {"std_cc", r.std_cc},
                      {"per_difficulty", per_difficulty},
                      {"per_domain", per_domain},
                      {"histogram", r.histogram},
                      {"echo_count", r.echo_count},
                      {"pairwise", pairwise}};
  if (r.has_ce) j["ce"] = r.ce;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    j.at("model_id").get_to(r.model_id);
    j.at("dataset_id").get_to(r.dataset_id);
    j.at("n").get_to(r.n);
    j.at("mean_cc").get_to(r.mean_cc);
    j.at("std_cc").get_to(r.std_cc);
    j.at("echo_count").get_to(r.echo_count);
    const auto& hist = j.at("histogram");
    if (!hist.is_array() || hist.size() != kHistogramBins)
      throw DataError("report histogram must have " +
                      std::to_string(kHistogramBins) + " bins");
    for (std::size_t i = 0; i < kHistogramBins; ++i)
      hist.at(i).get_to(r.histogram.at(i));
    for (const auto& item : j.at("per_difficulty").items()) {
      int d = std::stoi(item.key());
      item.value().at("mean_cc").get_to(r.difficulty_mean[d]);
      item.value().at("count").get_to(r.difficulty_count[d]);
      if (item.value().count("ce"))
        item.value().at("ce").get_to(r.ce_per_difficulty[d]);
    }
    for (const auto& item : j.at("per_domain").items()) {
      item.value().at("mean_cc").get_to(r.domain_mean[item.key()]);
      item.value().at("count").get_to(r.domain_count[item.key()]);
    }
    for (const auto& pw : j.at("pairwise")) {
      PairwiseResult p;
      pw.at("baseline").get_to(p.baseline);
      pw.at("delta_mean").get_to(p.delta_mean);
      pw.at("u").get_to(p.u);
      pw.at("p").get_to(p.p);
      r.pairwise.push_back(std::move(p));
    }
    if (j.count("ce")) {
      r.has_ce = true;
      j.at("ce").get_to(r.ce);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed evaluation report: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw DataError("malformed evaluation report: non-numeric difficulty key");
  }
  return r;
}

std::string difficulty_csv(const EvalReport& r) {
  std::string out = "difficulty,mean_cc,count,ce\n";
  for (const auto& [d, m] : r.difficulty_mean) {
    out += std::to_string(d) + "," + format_double(m) + "," +
           std::to_string(r.difficulty_count.at(d)) + ",";
    if (r.has_ce && r.ce_per_difficulty.count(d))
      out += format_double(r.ce_per_difficulty.at(d));
    out += "\n";
  }
  return out;
}

std::string domain_csv(const EvalReport& r) {
  std::string out = "domain,mean_cc,count\n";
  for (const auto& [dom, m] : r.domain_mean)
    out += dom + "," + format_double(m) + "," +
           std::to_string(r.domain_count.at(dom)) + "\n";
  return out;
}

std::string histogram_csv(const EvalReport& r) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (int i = 0; i < kHistogramBins; ++i)
    out += format_double((i - 10) / 10.0) + "," +
           format_double((i - 9) / 10.0) + "," +
           std::to_string(r.histogram[static_cast<std::size_t>(i)]) + "\n";
  return out;
}

std::string scores_csv(const std::vector<ScoredExample>& examples) {
  std::string out = "id,difficulty,domain,score,echo\n";
  for (const auto& e : examples)
    out += e.id + "," + std::to_string(e.difficulty) + "," + e.domain + "," +
           format_double(e.score) + "," + (e.echo ? "1" : "0") + "\n";
  return out;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "model_a,model_b,mean_a,mean_b,delta,u,p\n";
  for (const auto& r : rows)
    out += r.model_a + "," + r.model_b + "," + format_double(r.mean_a) + "," +
           format_double(r.mean_b) + "," + format_double(r.delta) + "," +
           format_double(r.u) + "," + format_double(r.p) + "\n";
  return out;
}

}  // namespace cycleform::eval
