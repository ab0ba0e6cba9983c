#include "cycleform/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "cycleform/common.hpp"

namespace cycleform::runconfig {
namespace {

using nlohmann::json;

// Walks one JSON object, handing out values for registered keys and rejecting
// everything it was never asked about. `path` qualifies messages ("grpo.lr").
class KeyChecker {
 public:
  KeyChecker(const json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object())
      throw ConfigError(label() + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      it->get_to(out);
    } catch (const json::exception&) {
      throw ConfigError("invalid value for config key '" + qualify(key) + "'");
    }
  }

  // Nested section, or nullptr when absent (defaults then stand).
  const json* section(const char* key) {
    known_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!known_.count(item.key()))
        throw ConfigError("unknown config key '" + qualify(item.key()) + "'");
  }

 private:
  std::string qualify(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  std::string label() const {
    return path_.empty() ? std::string("config root") : "section '" + path_ + "'";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

}  // namespace

void RunConfig::validate() const {
  if (profile != kProfileTest && profile != kProfileFast)
    throw ConfigError("profile must be '" + std::string(kProfileTest) +
                      "' or '" + std::string(kProfileFast) + "'");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (vocab_max_len < 8) throw ConfigError("vocab_max_len must be >= 8");

  if (corpus.min_difficulty < 1 || corpus.max_difficulty > 10 ||
      corpus.min_difficulty > corpus.max_difficulty)
    throw ConfigError("corpus difficulty range must satisfy 1 <= min <= max <= 10");
  if (corpus.per_difficulty < 1)
    throw ConfigError("corpus.per_difficulty must be >= 1");
  if (corpus.id_prefix.empty())
    throw ConfigError("corpus.id_prefix must not be empty");

  splits.validate();
  model.validate();
  adapter.validate();

  if (embedder.dim < 1) throw ConfigError("embedder.dim must be >= 1");
  if (embedder.ngram_sizes.empty())
    throw ConfigError("embedder.ngram_sizes must not be empty");
  for (int n : embedder.ngram_sizes)
    if (n < 1) throw ConfigError("embedder.ngram_sizes entries must be >= 1");

  sft.validate();

  // checkpoint_path is assigned by the run layer when checkpointing is on;
  // validate the user-visible fields against a stand-in path.
  grpo::GrpoConfig g = grpo;
  if (g.checkpoint_every > 0 && g.checkpoint_path.empty())
    g.checkpoint_path = "<run>";
  g.validate();

  if (eval.max_new < 1) throw ConfigError("eval.max_new must be >= 1");
  if (eval.qualitative_k < 0)
    throw ConfigError("eval.qualitative_k must be >= 0");
  if (eval.bootstrap_resamples < 1)
    throw ConfigError("eval.bootstrap_resamples must be >= 1");

  const std::pair<const char*, const std::string*> required[] = {
      {"paths.corpus", &paths.corpus},   {"paths.clean", &paths.clean},
      {"paths.splits", &paths.splits},   {"paths.ckpt_dir", &paths.ckpt_dir},
      {"paths.policy_init", &paths.policy_init},
      {"paths.back_translator", &paths.back_translator},
      {"paths.grpo_out", &paths.grpo_out},
      {"paths.reports_dir", &paths.reports_dir}};
  for (const auto& [name, value] : required)
    if (value->empty())
      throw ConfigError(std::string(name) + " must not be empty");
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"seed", seed},
      {"out_dir", out_dir},
      {"profile", profile},
      {"vocab_max_len", vocab_max_len},
      {"corpus",
       {{"min_difficulty", corpus.min_difficulty},
        {"max_difficulty", corpus.max_difficulty},
        {"per_difficulty", corpus.per_difficulty},
        {"id_prefix", corpus.id_prefix}}},
      {"splits", splits.to_json()},
      {"model",
       {{"layers", model.layers},
        {"heads", model.heads},
        {"d_model", model.d_model},
        {"d_ff", model.d_ff},
        {"max_seq", model.max_seq}}},
      {"adapter", adapter.to_json()},
      {"embedder",
       {{"dim", embedder.dim}, {"ngram_sizes", embedder.ngram_sizes}}},
      {"sft",
       {{"learning_rate", sft.learning_rate},
        {"warmup_fraction", sft.warmup_fraction},
        {"effective_batch", sft.effective_batch},
        {"epochs_per_stage", sft.epochs_per_stage},
        {"weight_decay", sft.weight_decay}}},
      {"grpo",
       {{"group_size", grpo.group_size},
        {"learning_rate", grpo.learning_rate},
        {"grad_accumulation", grpo.grad_accumulation},
        {"kl_beta", grpo.kl_beta},
        {"clip_epsilon", grpo.clip_epsilon},
        {"advantage_epsilon", grpo.advantage_epsilon},
        {"temperature", grpo.temperature},
        {"epochs", grpo.epochs},
        {"max_new", grpo.max_new},
        {"weight_decay", grpo.weight_decay},
        {"checkpoint_every", grpo.checkpoint_every},
        {"stop_after_steps", grpo.stop_after_steps}}},
      {"eval",
       {{"max_new", eval.max_new},
        {"qualitative_k", eval.qualitative_k},
        {"bootstrap_resamples", eval.bootstrap_resamples}}},
      {"paths",
       {{"corpus", paths.corpus},
        {"benchmark", paths.benchmark},
        {"clean", paths.clean},
        {"splits", paths.splits},
        {"ckpt_dir", paths.ckpt_dir},
        {"policy_init", paths.policy_init},
        {"back_translator", paths.back_translator},
        {"grpo_out", paths.grpo_out},
        {"reports_dir", paths.reports_dir}}},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  KeyChecker top(j, "");
  top.get("seed", c.seed);
  top.get("out_dir", c.out_dir);
  top.get("profile", c.profile);
  top.get("vocab_max_len", c.vocab_max_len);

  if (const json* s = top.section("corpus")) {
    KeyChecker k(*s, "corpus");
    k.get("min_difficulty", c.corpus.min_difficulty);
    k.get("max_difficulty", c.corpus.max_difficulty);
    k.get("per_difficulty", c.corpus.per_difficulty);
    k.get("id_prefix", c.corpus.id_prefix);
    k.finish();
  }
  if (const json* s = top.section("splits")) {
    KeyChecker k(*s, "splits");
    k.get("sft_cap_per_difficulty", c.splits.sft_cap_per_difficulty);
    k.get("val_fraction", c.splits.val_fraction);
    k.get("rl_cap_per_difficulty", c.splits.rl_cap_per_difficulty);
    k.get("heldout_per_difficulty", c.splits.heldout_per_difficulty);
    k.get("threshold", c.splits.threshold);
    k.get("top_k", c.splits.top_k);
    k.finish();
  }
  if (const json* s = top.section("model")) {
    // `vocab` is not configurable: it is derived from the corpus vocabulary.
    KeyChecker k(*s, "model");
    k.get("layers", c.model.layers);
    k.get("heads", c.model.heads);
    k.get("d_model", c.model.d_model);
    k.get("d_ff", c.model.d_ff);
    k.get("max_seq", c.model.max_seq);
    k.finish();
  }
  if (const json* s = top.section("adapter")) {
    KeyChecker k(*s, "adapter");
    k.get("enabled", c.adapter.enabled);
    k.get("rank", c.adapter.rank);
    k.get("alpha", c.adapter.alpha);
    k.finish();
  }
  if (const json* s = top.section("embedder")) {
    KeyChecker k(*s, "embedder");
    k.get("dim", c.embedder.dim);
    k.get("ngram_sizes", c.embedder.ngram_sizes);
    k.finish();
  }
  if (const json* s = top.section("sft")) {
    // Stage seeds are derived from the global seed, never set directly.
    KeyChecker k(*s, "sft");
    k.get("learning_rate", c.sft.learning_rate);
    k.get("warmup_fraction", c.sft.warmup_fraction);
    k.get("effective_batch", c.sft.effective_batch);
    k.get("epochs_per_stage", c.sft.epochs_per_stage);
    k.get("weight_decay", c.sft.weight_decay);
    k.finish();
  }
  if (const json* s = top.section("grpo")) {
    KeyChecker k(*s, "grpo");
    k.get("group_size", c.grpo.group_size);
    k.get("learning_rate", c.grpo.learning_rate);
    k.get("grad_accumulation", c.grpo.grad_accumulation);
    k.get("kl_beta", c.grpo.kl_beta);
    k.get("clip_epsilon", c.grpo.clip_epsilon);
    k.get("advantage_epsilon", c.grpo.advantage_epsilon);
    k.get("temperature", c.grpo.temperature);
    k.get("epochs", c.grpo.epochs);
    k.get("max_new", c.grpo.max_new);
    k.get("weight_decay", c.grpo.weight_decay);
    k.get("checkpoint_every", c.grpo.checkpoint_every);
    k.get("stop_after_steps", c.grpo.stop_after_steps);
    k.finish();
  }
  if (const json* s = top.section("eval")) {
    KeyChecker k(*s, "eval");
    k.get("max_new", c.eval.max_new);
    k.get("qualitative_k", c.eval.qualitative_k);
    k.get("bootstrap_resamples", c.eval.bootstrap_resamples);
    k.finish();
  }
  if (const json* s = top.section("paths")) {
    KeyChecker k(*s, "paths");
    k.get("corpus", c.paths.corpus);
    k.get("benchmark", c.paths.benchmark);
    k.get("clean", c.paths.clean);
    k.get("splits", c.paths.splits);
    k.get("ckpt_dir", c.paths.ckpt_dir);
    k.get("policy_init", c.paths.policy_init);
    k.get("back_translator", c.paths.back_translator);
    k.get("grpo_out", c.paths.grpo_out);
    k.get("reports_dir", c.paths.reports_dir);
    k.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " +
                      e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace cycleform::runconfig
