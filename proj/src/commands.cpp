#include "cycleform/commands.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cycleform/checkpoint.hpp"
#include "cycleform/common.hpp"
#include "cycleform/corpus.hpp"
#include "cycleform/decontam.hpp"
#include "cycleform/embedder.hpp"
#include "cycleform/eval.hpp"
#include "cycleform/grpo.hpp"
#include "cycleform/model.hpp"
#include "cycleform/runconfig.hpp"
#include "cycleform/sft.hpp"
#include "cycleform/svg.hpp"
#include "cycleform/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cycleform::commands {
namespace {

runconfig::RunConfig load_config(const GlobalOpts& g) {
  runconfig::RunConfig cfg;
  if (!g.config_path.empty()) cfg = runconfig::load_run_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.profile) cfg.profile = *g.profile;
  cfg.validate();
  return cfg;
}

// Stage seeds all derive from the global seed through tagged mixing, so every
// stage is reproducible in isolation and stages never share a stream. The SFT
// tag carries only the direction: curriculum and shuffled runs of one
// direction start from identical streams, which keeps the regimes comparable.
std::uint64_t stage_seed(const runconfig::RunConfig& cfg, const std::string& tag) {
  return mix64(cfg.seed, byte_hash(tag));
}

std::string file_hash(const std::string& path) {
  return to_hex(byte_hash(read_text_file(path)));
}

void ensure_parent_dir(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_artifact(const std::string& path, std::string_view content) {
  ensure_parent_dir(path);
  write_text_file(path, content);
}

std::string timestamp_utc() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
  return buf;
}

// A fresh directory per invocation plus the manifest describing the run:
// config echo, derived seeds, content hashes of inputs and outputs. Artifacts
// whose bytes contain wall-clock readings are marked volatile instead of
// hashed, so back-to-back identical runs produce identical manifests.
class RunDir {
 public:
  RunDir(const runconfig::RunConfig& cfg, const GlobalOpts& g,
         const std::string& command) {
    if (g.out) {
      dir_ = *g.out;
    } else {
      std::string base = cfg.out_dir + "/" + command + "-" + timestamp_utc();
      dir_ = base;
      for (int i = 2; fs::exists(dir_); ++i)
        dir_ = base + "-" + std::to_string(i);
    }
    fs::create_directories(dir_);
    manifest_["command"] = command;
    manifest_["config"] = cfg.to_json();
    manifest_["seeds"] = json::object();
    manifest_["inputs"] = json::object();
    manifest_["outputs"] = json::object();
    manifest_["info"] = json::object();
    manifest_["versions"] = {{"generator", corpus::kGeneratorVersion},
                             {"manifest", 1}};
  }

  const std::string& dir() const { return dir_; }
  std::string path(const std::string& name) const { return dir_ + "/" + name; }

  void seed(const std::string& name, std::uint64_t v) {
    manifest_["seeds"][name] = v;
  }
  void input(const std::string& p) { manifest_["inputs"][p] = file_hash(p); }
  // `key` names the artifact; run-directory files use their bare name so the
  // timestamped directory never leaks into the manifest.
  void output(const std::string& key, const std::string& p) {
    manifest_["outputs"][key] = file_hash(p);
  }
  void output_volatile(const std::string& key) {
    manifest_["outputs"][key] = "volatile";
  }
  void info(const std::string& key, json v) {
    manifest_["info"][key] = std::move(v);
  }

  void finish() {
    write_text_file(path("manifest.json"), manifest_.dump(2) + "\n");
  }

 private:
  std::string dir_;
  json manifest_;
};

// Split membership lives in the splits manifest as id lists; examples live in
// the clean corpus. Joins the two, in stored split order.
struct SplitView {
  std::vector<corpus::Example> clean;
  corpus::CorpusManifest manifest;

  std::vector<corpus::Example> collect(const std::string& split) const {
    auto it = manifest.splits.find(split);
    if (it == manifest.splits.end())
      throw DataError("splits manifest has no split named '" + split + "'");
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < clean.size(); ++i) by_id[clean[i].id] = i;
    std::vector<corpus::Example> out;
    out.reserve(it->second.size());
    for (const std::string& id : it->second) {
      auto hit = by_id.find(id);
      if (hit == by_id.end())
        throw DataError("split '" + split + "' references unknown example id " +
                        id + "; regenerate splits from this corpus");
      out.push_back(clean[hit->second]);
    }
    return out;
  }
};

SplitView load_splits(const runconfig::RunConfig& cfg, RunDir& rd) {
  rd.input(cfg.paths.clean);
  rd.input(cfg.paths.splits);
  SplitView v;
  v.clean = corpus::load_jsonl(cfg.paths.clean);
  json j;
  try {
    j = json::parse(read_text_file(cfg.paths.splits));
  } catch (const json::exception& e) {
    throw DataError("splits file " + cfg.paths.splits + " is not valid JSON: " +
                    e.what());
  }
  v.manifest = corpus::CorpusManifest::from_json(j);
  v.manifest.validate_disjoint();
  return v;
}

std::string checkpoint_stem(const std::string& path) {
  return fs::path(path).stem().string();
}

std::string dataset_tag(const std::vector<corpus::Example>& data) {
  std::uint64_t h = kHashSeed;
  for (const auto& ex : data) {
    h = mix64(h, byte_hash(ex.id));
    h = mix64(h, byte_hash(ex.nl));
    h = mix64(h, byte_hash(ex.formal));
  }
  return "heldout-" + to_hex(h);
}

// ---------------------------------------------------------------------------
// gen-corpus
// ---------------------------------------------------------------------------

void gen_corpus(const runconfig::RunConfig& cfg, const GlobalOpts& g) {
  RunDir rd(cfg, g, "gen-corpus");
  rd.seed("corpus", cfg.seed);
  auto examples = corpus::generate_corpus(cfg.corpus, cfg.seed);

  ensure_parent_dir(cfg.paths.corpus);
  corpus::save_jsonl(cfg.paths.corpus, examples);
  rd.output(cfg.paths.corpus, cfg.paths.corpus);

  json counts = json::object();
  for (const auto& ex : examples) {
    std::string k = std::to_string(ex.difficulty);
    counts[k] = counts.value(k, 0) + 1;
  }
  rd.info("examples", examples.size());
  rd.info("counts_per_difficulty", counts);
  rd.finish();
  std::cout << "gen-corpus: " << examples.size() << " examples -> "
            << cfg.paths.corpus << " (run " << rd.dir() << ")\n";
}

// ---------------------------------------------------------------------------
// prep
// ---------------------------------------------------------------------------

std::vector<std::string> read_benchmark(const std::string& path) {
  std::vector<std::string> problems;
  std::string text = read_text_file(path);
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) problems.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return problems;
}

void prep(const runconfig::RunConfig& cfg, const GlobalOpts& g) {
  RunDir rd(cfg, g, "prep");
  rd.input(cfg.paths.corpus);
  auto loaded = corpus::load_jsonl(cfg.paths.corpus);

  auto deduped = decontam::dedup(loaded);

  std::vector<corpus::Example> parsed;
  parsed.reserve(deduped.kept.size());
  int parse_dropped = 0;
  for (auto& ex : deduped.kept) {
    if (corpus::parse_formal(ex.formal).ok)
      parsed.push_back(std::move(ex));
    else
      ++parse_dropped;
  }

  std::vector<corpus::Example> clean;
  int decontam_dropped = 0;
  if (!cfg.paths.benchmark.empty()) {
    rd.input(cfg.paths.benchmark);
    auto problems = read_benchmark(cfg.paths.benchmark);
    auto dec = decontam::decontaminate(parsed, problems, cfg.splits.threshold,
                                       cfg.splits.top_k);
    decontam_dropped = static_cast<int>(dec.removed_ids.size());
    clean = std::move(dec.kept);
    rd.info("benchmark_problems", problems.size());
  } else {
    clean = std::move(parsed);
  }

  std::uint64_t split_seed = stage_seed(cfg, "splits");
  rd.seed("splits", split_seed);
  auto manifest = decontam::make_splits(clean, cfg.splits, split_seed);
  manifest.generator_version = corpus::kGeneratorVersion;

  ensure_parent_dir(cfg.paths.clean);
  corpus::save_jsonl(cfg.paths.clean, clean);
  write_artifact(cfg.paths.splits, manifest.to_json().dump(2) + "\n");
  rd.output(cfg.paths.clean, cfg.paths.clean);
  rd.output(cfg.paths.splits, cfg.paths.splits);

  json split_sizes = json::object();
  for (const auto& [name, ids] : manifest.splits) split_sizes[name] = ids.size();
  rd.info("loaded", loaded.size());
  rd.info("dropped_duplicates", deduped.dropped.size());
  rd.info("dropped_unparseable", parse_dropped);
  rd.info("dropped_contaminated", decontam_dropped);
  rd.info("clean", clean.size());
  rd.info("split_sizes", split_sizes);
  rd.info("warnings", manifest.warnings);
  rd.finish();

  std::cout << "prep: " << loaded.size() << " -> " << clean.size()
            << " clean examples (dup " << deduped.dropped.size() << ", parse "
            << parse_dropped << ", contaminated " << decontam_dropped
            << ") -> " << cfg.paths.clean << "\n";
  for (const auto& w : manifest.warnings)
    std::cout << "prep warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// train-sft
// ---------------------------------------------------------------------------

template <typename S>
void train_sft_impl(const runconfig::RunConfig& cfg, const GlobalOpts& g,
                    const std::string& direction, const std::string& regime) {
  sft::Direction dir = sft::direction_from_name(direction);
  if (regime != "curriculum" && regime != "shuffled")
    throw ConfigError("regime must be 'curriculum' or 'shuffled', got '" +
                      regime + "'");

  RunDir rd(cfg, g, "train-sft-" + direction + "-" + regime);
  SplitView sv = load_splits(cfg, rd);
  auto train = sv.collect("sft_train");
  auto val = sv.collect("sft_val");
  if (train.empty()) throw DataError("sft_train split is empty");

  tokenizer::Vocab vocab = tokenizer::build_vocab(sv.clean, cfg.vocab_max_len);
  model::ModelConfig mcfg = cfg.model;
  mcfg.vocab = vocab.size();

  // One shared init seed: every SFT run starts from the same parameters, so
  // regime and direction comparisons see identical initialization.
  std::uint64_t init_seed = stage_seed(cfg, "model_init");
  std::uint64_t train_seed = stage_seed(cfg, "sft:" + direction);
  rd.seed("model_init", init_seed);
  rd.seed("sft", train_seed);

  auto params = model::init_params<S>(mcfg, cfg.adapter, init_seed);
  sft::SftConfig scfg = cfg.sft;
  scfg.seed = train_seed;

  auto result = regime == "curriculum"
                    ? sft::train_curriculum(std::move(params), train, vocab,
                                            dir, scfg)
                    : sft::train_shuffled(std::move(params), train, vocab, dir,
                                          scfg);

  sft::ValCe vce = sft::evaluate_val_ce(result.params, val, vocab, dir);

  json per_difficulty = json::object();
  for (const auto& [d, ce] : vce.per_difficulty)
    per_difficulty[std::to_string(d)] = ce;
  json val_report = {{"direction", direction},
                     {"regime", regime},
                     {"val_ce", vce.overall},
                     {"val_ce_per_difficulty", per_difficulty},
                     {"val_n", vce.n}};

  std::string ckpt =
      cfg.paths.ckpt_dir + "/sft_" + direction + "_" + regime + ".bin";
  ensure_parent_dir(ckpt);
  checkpoint::save_model(ckpt, result.params, vocab,
                         {{"direction", direction},
                          {"regime", regime},
                          {"val_ce", vce.overall}});

  write_text_file(rd.path("log.csv"), sft::log_csv(result.log));
  write_text_file(rd.path("val_ce.json"), val_report.dump(2) + "\n");
  rd.output(ckpt, ckpt);
  rd.output("log.csv", rd.path("log.csv"));
  rd.output("val_ce.json", rd.path("val_ce.json"));
  rd.info("train_examples", train.size());
  rd.info("val_examples", val.size());
  rd.info("steps", result.log.size());
  rd.info("consumed_multiset_hash", to_hex(result.consumed_multiset_hash));
  rd.info("val_ce", vce.overall);
  rd.finish();

  std::cout << "train-sft " << direction << " " << regime << ": "
            << result.log.size() << " steps, val_ce "
            << format_double(vce.overall) << " -> " << ckpt << "\n";
}

// ---------------------------------------------------------------------------
// train-grpo
// ---------------------------------------------------------------------------

template <typename S>
void train_grpo_impl(const runconfig::RunConfig& cfg, const GlobalOpts& g) {
  RunDir rd(cfg, g, "train-grpo");
  SplitView sv = load_splits(cfg, rd);
  auto prompts = sv.collect("rl_prompts");
  if (prompts.empty()) throw DataError("rl_prompts split is empty");

  rd.input(cfg.paths.policy_init);
  rd.input(cfg.paths.back_translator);
  auto policy0 = checkpoint::load_model<S>(cfg.paths.policy_init);
  auto back = checkpoint::load_model<S>(cfg.paths.back_translator);
  if (policy0.vocab.chars != back.vocab.chars)
    throw StateError(
        "policy and back-translator checkpoints use different vocabularies");

  embedder::HashedNgramEmbedder emb(cfg.embedder.dim, cfg.embedder.ngram_sizes);
  // The back-translator decodes with the same budget during training rewards
  // and evaluation, keeping the two scores one function.
  embedder::BackTranslator back_fn = [&](const std::string& formal) {
    return grpo::greedy_translate(back.params, back.vocab, formal,
                                  cfg.eval.max_new);
  };

  grpo::GrpoConfig gcfg = cfg.grpo;
  gcfg.seed = stage_seed(cfg, "grpo");
  rd.seed("grpo", gcfg.seed);
  std::string inflight = cfg.paths.ckpt_dir + "/grpo_inflight.bin";
  if (gcfg.checkpoint_every > 0) {
    ensure_parent_dir(inflight);
    gcfg.checkpoint_path = inflight;
  }

  grpo::RlResume<S> resume_state;
  const grpo::RlResume<S>* resume = nullptr;
  if (g.resume) {
    rd.input(*g.resume);
    resume_state = grpo::load_rl_checkpoint<S>(*g.resume);
    resume = &resume_state;
  }

  auto result = grpo::grpo_train(policy0.params, policy0.params, back_fn, emb,
                                 prompts, policy0.vocab, gcfg, resume);

  ensure_parent_dir(cfg.paths.grpo_out);
  checkpoint::save_model(cfg.paths.grpo_out, result.policy, policy0.vocab,
                         {{"phase", "grpo"},
                          {"steps", result.steps_completed},
                          {"finished", result.finished}});
  if (!result.finished) {
    ensure_parent_dir(inflight);
    grpo::save_rl_checkpoint(inflight, result.policy, policy0.vocab,
                             result.opt, gcfg, result.cursor,
                             result.steps_completed, result.rng_state);
  }

  write_text_file(rd.path("reward_log.csv"),
                  grpo::reward_log_csv(result.reward_log));
  write_text_file(rd.path("rollouts.jsonl"),
                  grpo::rollouts_jsonl(result.rollouts));
  rd.output(cfg.paths.grpo_out, cfg.paths.grpo_out);
  // Wall-clock column makes the reward log unrepeatable byte-for-byte.
  rd.output_volatile("reward_log.csv");
  rd.output("rollouts.jsonl", rd.path("rollouts.jsonl"));
  if (!result.finished) rd.output(inflight, inflight);
  rd.info("prompts", prompts.size());
  rd.info("steps_completed", result.steps_completed);
  rd.info("finished", result.finished);
  rd.info("resumed", resume != nullptr);
  if (!result.reward_log.empty()) {
    rd.info("first_mean_reward", result.reward_log.front().mean_reward);
    rd.info("last_mean_reward", result.reward_log.back().mean_reward);
  }
  rd.finish();

  std::cout << "train-grpo: " << result.steps_completed << " steps"
            << (result.finished ? "" : " (stopped early)") << " -> "
            << cfg.paths.grpo_out << "\n";
  if (!result.reward_log.empty())
    std::cout << "train-grpo: mean reward "
              << format_double(result.reward_log.front().mean_reward) << " -> "
              << format_double(result.reward_log.back().mean_reward) << "\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

template <typename S>
void eval_impl(const runconfig::RunConfig& cfg, const GlobalOpts& g,
               const std::vector<std::string>& checkpoints) {
  if (checkpoints.empty())
    throw ConfigError("eval requires at least one checkpoint path");
  {
    std::set<std::string> stems;
    for (const auto& c : checkpoints)
      if (!stems.insert(checkpoint_stem(c)).second)
        throw ConfigError("checkpoint file names must be unique, got '" +
                          checkpoint_stem(c) + "' twice");
  }

  RunDir rd(cfg, g, "eval");
  SplitView sv = load_splits(cfg, rd);
  auto heldout = sv.collect("heldout");
  auto val = sv.collect("sft_val");
  if (heldout.empty()) throw DataError("heldout split is empty");

  rd.input(cfg.paths.back_translator);
  auto back = checkpoint::load_model<S>(cfg.paths.back_translator);
  embedder::HashedNgramEmbedder emb(cfg.embedder.dim, cfg.embedder.ngram_sizes);
  eval::TranslateFn g_fn = [&](const std::string& formal) {
    return grpo::greedy_translate(back.params, back.vocab, formal,
                                  cfg.eval.max_new);
  };

  std::string dataset_id = dataset_tag(heldout);
  std::uint64_t ci_seed = stage_seed(cfg, "bootstrap");
  rd.seed("bootstrap", ci_seed);

  std::vector<eval::EvalResult> results;
  std::vector<std::string> ids;
  json ci_info = json::object();
  // Buffered until every checkpoint has evaluated, so a failure on a later
  // model never leaves the stable reports store half-updated.
  struct Pending {
    std::string key, path, content;
  };
  std::vector<Pending> pending;
  auto stage = [&](const std::string& key, const std::string& path,
                   std::string content) {
    pending.push_back({key, path, std::move(content)});
  };
  for (const auto& ckpt : checkpoints) {
    rd.input(ckpt);
    auto lm = checkpoint::load_model<S>(ckpt);
    if (lm.vocab.chars != back.vocab.chars)
      throw StateError("checkpoint " + ckpt +
                       " uses a different vocabulary than the back-translator");
    std::string id = checkpoint_stem(ckpt);
    eval::TranslateFn f_fn = [&](const std::string& nl) {
      return grpo::greedy_translate(lm.params, lm.vocab, nl, cfg.eval.max_new);
    };
    auto res = eval::evaluate_model(f_fn, g_fn, heldout, emb, id, dataset_id);

    sft::ValCe vce = sft::evaluate_val_ce(lm.params, val, lm.vocab,
                                          sft::Direction::kNlToFormal);
    res.report.has_ce = true;
    res.report.ce = vce.overall;
    res.report.ce_per_difficulty = vce.per_difficulty;

    std::vector<double> scores;
    for (const auto& e : res.examples) scores.push_back(e.score);

    if (!results.empty()) {
      // Delta and rank test against the first checkpoint as the baseline.
      std::vector<double> base;
      for (const auto& e : results.front().examples) base.push_back(e.score);
      auto mw = eval::mann_whitney_u(scores, base);
      res.report.pairwise.push_back(
          {results.front().report.model_id,
           res.report.mean_cc - results.front().report.mean_cc, mw.u, mw.p});
    }

    auto ci = eval::bootstrap_mean_ci(scores, cfg.eval.bootstrap_resamples,
                                      mix64(ci_seed, byte_hash(id)));
    ci_info[id] = {{"lo", ci.lo}, {"hi", ci.hi}};

    json report_json = eval::report_to_json(res.report);
    std::string report_doc = report_json.dump(2) + "\n";
    stage("report_" + id + ".json", rd.path("report_" + id + ".json"),
          report_doc);
    stage(cfg.paths.reports_dir + "/report_" + id + ".json",
          cfg.paths.reports_dir + "/report_" + id + ".json", report_doc);
    stage("scores_" + id + ".csv", rd.path("scores_" + id + ".csv"),
          eval::scores_csv(res.examples));
    int k = std::min<int>(cfg.eval.qualitative_k,
                          static_cast<int>(heldout.size()));
    stage("qualitative_" + id + ".txt", rd.path("qualitative_" + id + ".txt"),
          eval::qualitative_dump(f_fn, g_fn, heldout, k, emb));

    std::cout << "eval " << id << ": mean_cc " << format_double(res.report.mean_cc)
              << " (95% CI " << format_double(ci.lo) << ".."
              << format_double(ci.hi) << "), ce "
              << format_double(vce.overall) << ", echo "
              << res.report.echo_count << "/" << res.report.n << "\n";

    ids.push_back(id);
    results.push_back(std::move(res));
  }

  for (const auto& p : pending) {
    write_artifact(p.path, p.content);
    rd.output(p.key, p.path);
  }

  if (results.size() > 1) {
    auto rows = eval::compare_models(results);
    write_text_file(rd.path("comparisons.csv"), eval::comparison_csv(rows));
    rd.output("comparisons.csv", rd.path("comparisons.csv"));
    for (const auto& row : rows)
      std::cout << "eval compare " << row.model_a << " vs " << row.model_b
                << ": delta " << format_double(row.delta) << ", p "
                << format_double(row.p) << "\n";
  }

  rd.info("dataset_id", dataset_id);
  rd.info("heldout_examples", heldout.size());
  rd.info("models", ids);
  rd.info("bootstrap_ci", ci_info);
  rd.finish();
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

void report(const runconfig::RunConfig& cfg, const GlobalOpts& g) {
  if (!fs::is_directory(cfg.paths.reports_dir))
    throw IoError("reports directory not found: " + cfg.paths.reports_dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(cfg.paths.reports_dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("report_", 0) == 0 && name.size() > 12 &&
        name.substr(name.size() - 5) == ".json")
      files.push_back(name);
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw DataError("no stored reports in " + cfg.paths.reports_dir +
                    "; run eval first");

  RunDir rd(cfg, g, "report");
  std::vector<eval::EvalReport> reports;
  for (const auto& name : files) {
    std::string full = cfg.paths.reports_dir + "/" + name;
    rd.input(full);
    json j;
    try {
      j = json::parse(read_text_file(full));
    } catch (const json::exception& e) {
      throw DataError("report file " + full + " is not valid JSON: " + e.what());
    }
    reports.push_back(eval::report_from_json(j));
  }

  std::set<std::string> datasets;
  for (const auto& r : reports) datasets.insert(r.dataset_id);
  if (datasets.size() > 1)
    std::cout << "report warning: stored reports cover " << datasets.size()
              << " different datasets; charts mix them\n";

  auto emit = [&](const std::string& name, const std::string& content) {
    write_text_file(rd.path(name), content);
    rd.output(name, rd.path(name));
  };

  std::vector<std::string> labels;
  std::vector<double> means, errs;
  std::vector<svg::Series> diff_series, hist_series;
  for (const auto& r : reports) {
    labels.push_back(r.model_id);
    means.push_back(r.mean_cc);
    errs.push_back(r.n > 0 ? r.std_cc / std::sqrt(static_cast<double>(r.n))
                           : 0.0);

    svg::Series ds{r.model_id, {}};
    for (const auto& [d, m] : r.difficulty_mean)
      ds.points.push_back({static_cast<double>(d), m});
    diff_series.push_back(std::move(ds));

    svg::Series hs{r.model_id, {}};
    for (std::size_t i = 0; i < r.histogram.size(); ++i)
      hs.points.push_back({-1.0 + (static_cast<double>(i) + 0.5) / 10.0,
                           static_cast<double>(r.histogram[i])});
    hist_series.push_back(std::move(hs));

    emit("difficulty_" + r.model_id + ".csv", eval::difficulty_csv(r));
    emit("domain_" + r.model_id + ".csv", eval::domain_csv(r));
    emit("histogram_" + r.model_id + ".csv", eval::histogram_csv(r));

    // Thin domains stay in the CSV/JSON record but are excluded from charts,
    // where single-digit counts read as signal.
    std::vector<std::string> doms;
    std::vector<double> dmeans;
    for (const auto& [dom, m] : r.domain_mean)
      if (r.domain_count.at(dom) >= 10) {
        doms.push_back(dom);
        dmeans.push_back(m);
      }
    if (!doms.empty())
      emit("domain_mean_" + r.model_id + ".svg",
           svg::bar_chart("mean cycle consistency by domain: " + r.model_id,
                          doms, dmeans, {}, "mean cycle consistency"));
  }

  emit("overall_mean.svg",
       svg::bar_chart("held-out cycle consistency (error bars: std error)",
                      labels, means, errs, "mean cycle consistency"));
  emit("difficulty_mean.svg",
       svg::line_chart("mean cycle consistency by difficulty", diff_series,
                       "difficulty", "mean cycle consistency"));
  emit("histogram.svg",
       svg::line_chart("score distribution (20 bins over [-1, 1])",
                       hist_series, "cycle consistency", "count"));

  rd.info("reports", files);
  rd.finish();
  std::cout << "report: rendered " << reports.size() << " report(s) into "
            << rd.dir() << "\n";
}

}  // namespace

void run_gen_corpus(const GlobalOpts& g) { gen_corpus(load_config(g), g); }

void run_prep(const GlobalOpts& g) { prep(load_config(g), g); }

void run_train_sft(const GlobalOpts& g, const std::string& direction,
                   const std::string& regime) {
  auto cfg = load_config(g);
  if (cfg.profile == runconfig::kProfileFast)
    train_sft_impl<float>(cfg, g, direction, regime);
  else
    train_sft_impl<double>(cfg, g, direction, regime);
}

void run_train_grpo(const GlobalOpts& g) {
  auto cfg = load_config(g);
  if (cfg.profile == runconfig::kProfileFast)
    train_grpo_impl<float>(cfg, g);
  else
    train_grpo_impl<double>(cfg, g);
}

void run_eval(const GlobalOpts& g, const std::vector<std::string>& checkpoints) {
  auto cfg = load_config(g);
  if (cfg.profile == runconfig::kProfileFast)
    eval_impl<float>(cfg, g, checkpoints);
  else
    eval_impl<double>(cfg, g, checkpoints);
}

void run_report(const GlobalOpts& g) { report(load_config(g), g); }

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const StateError& e) {
    std::cerr << "state error: " << e.what() << "\n";
    return kExitState;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}

}  // namespace cycleform::commands
