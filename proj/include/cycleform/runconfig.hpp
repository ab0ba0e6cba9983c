#pragma once
// One structured configuration for the whole pipeline. Every field has a
// default mirroring its module's config type, unknown keys are rejected with
// the offending path, and the resolved config echoes into run manifests so a
// rerun can be checked byte-for-byte.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cycleform/corpus.hpp"
#include "cycleform/decontam.hpp"
#include "cycleform/grpo.hpp"
#include "cycleform/model.hpp"
#include "cycleform/sft.hpp"

namespace cycleform::runconfig {

inline constexpr const char* kProfileTest = "test-64bit";
inline constexpr const char* kProfileFast = "fast-32bit";

struct EmbedderConfig {
  int dim = 256;
  std::vector<int> ngram_sizes = {2, 3};
};

struct EvalConfig {
  int max_new = 96;              // greedy decode budget for f and g
  int qualitative_k = 10;
  int bootstrap_resamples = 2000;
};

// Artifact locations shared between pipeline stages. Relative paths resolve
// against the working directory; stage outputs land here, per-run metadata
// (manifests, logs, reports) lands in the run directory.
struct PathsConfig {
  std::string corpus = "data/corpus.jsonl";
  std::string benchmark;  // optional text file, one problem per line
  std::string clean = "data/clean.jsonl";
  std::string splits = "data/splits.json";
  std::string ckpt_dir = "data/ckpt";
  std::string policy_init = "data/ckpt/sft_nl2formal_curriculum.bin";
  std::string back_translator = "data/ckpt/sft_formal2nl_curriculum.bin";
  std::string grpo_out = "data/ckpt/grpo.bin";
  std::string reports_dir = "data/reports";  // stable store the report command reads
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
  std::string profile = kProfileTest;
  int vocab_max_len = 512;

  corpus::GenPlan corpus;
  decontam::SplitPlan splits;
  model::ModelConfig model;  // vocab is derived from the corpus, not config
  model::AdapterConfig adapter;
  EmbedderConfig embedder;
  sft::SftConfig sft;  // seed is derived from the global seed, not config
  grpo::GrpoConfig grpo;
  EvalConfig eval;
  PathsConfig paths;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::string& path);

}  // namespace cycleform::runconfig
