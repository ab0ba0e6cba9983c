#pragma once
// Supervised fine-tuning of one translation direction. Two regimes over the
// identical example multiset: curriculum (one epoch per ascending difficulty
// stage, empty stages skipped, warmup/cosine schedule reset per stage) and
// shuffled (one seed-shuffled pass). Optimizer moments persist across
// curriculum stages; only the learning-rate schedule resets.
//
// Stage shuffles draw from streams keyed by stage *index*, so a one-bucket
// curriculum consumes the same randomness as the shuffled regime and the two
// produce bit-identical parameters on identical data and seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cycleform/common.hpp"
#include "cycleform/corpus.hpp"
#include "cycleform/framing.hpp"
#include "cycleform/model.hpp"
#include "cycleform/optim.hpp"
#include "cycleform/tokenizer.hpp"

namespace cycleform::sft {

enum class Direction { kNlToFormal, kFormalToNl };

inline std::string direction_name(Direction d) {
  return d == Direction::kNlToFormal ? "nl2formal" : "formal2nl";
}

inline Direction direction_from_name(const std::string& s) {
  if (s == "nl2formal") return Direction::kNlToFormal;
  if (s == "formal2nl") return Direction::kFormalToNl;
  throw ConfigError("unknown direction '" + s + "'");
}

inline const std::string& source_text(const corpus::Example& ex, Direction d) {
  return d == Direction::kNlToFormal ? ex.nl : ex.formal;
}

inline const std::string& target_text(const corpus::Example& ex, Direction d) {
  return d == Direction::kNlToFormal ? ex.formal : ex.nl;
}

inline framing::FramedPair frame_example(const tokenizer::Vocab& vocab,
                                         const corpus::Example& ex,
                                         Direction d, int max_len) {
  return framing::encode_pair(vocab, source_text(ex, d), target_text(ex, d),
                              max_len);
}

struct SftConfig {
  double learning_rate = 2e-4;
  double warmup_fraction = 0.03;
  int effective_batch = 32;
  int epochs_per_stage = 1;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(warmup_fraction > 0 && warmup_fraction < 1))
      throw ConfigError("warmup_fraction must lie in (0, 1)");
    if (effective_batch < 1) throw ConfigError("effective_batch must be >= 1");
    if (epochs_per_stage < 1) throw ConfigError("epochs_per_stage must be >= 1");
    if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  }
};

inline constexpr double kPi = 3.14159265358979323846;

// Linear 0 -> peak over the warmup span, then cosine peak -> 0.
inline double lr_at(std::int64_t step, std::int64_t total_steps,
                    const SftConfig& cfg) {
  if (step < 0 || step > total_steps || total_steps < 1)
    throw ConfigError("lr_at: step outside [0, total_steps]");
  std::int64_t warmup = std::llround(cfg.warmup_fraction *
                                     static_cast<double>(total_steps));
  warmup = std::max<std::int64_t>(1, warmup);
  if (warmup >= total_steps) warmup = total_steps - 1;
  if (warmup < 1) return cfg.learning_rate * 0.5 *
                         (1.0 + std::cos(kPi * static_cast<double>(step)));
  if (step <= warmup)
    return cfg.learning_rate * static_cast<double>(step) /
           static_cast<double>(warmup);
  double progress = static_cast<double>(step - warmup) /
                    static_cast<double>(total_steps - warmup);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(kPi * progress));
}

struct StepLog {
  int step = 0;   // global optimizer step, 1-based
  int stage = 0;  // difficulty of the stage; 0 for the shuffled regime
  double lr = 0;
  double loss = 0;
  double token_accuracy = 0;
};

inline std::string log_csv(const std::vector<StepLog>& log) {
  std::string out = "step,stage,lr,loss,token_accuracy\n";
  for (const auto& row : log)
    out += std::to_string(row.step) + "," + std::to_string(row.stage) + "," +
           format_double(row.lr) + "," + format_double(row.loss) + "," +
           format_double(row.token_accuracy) + "\n";
  return out;
}

// Order-independent fingerprint of the example multiset a run consumed.
inline std::uint64_t multiset_hash(const std::vector<corpus::Example>& data) {
  std::uint64_t acc = 0;
  for (const auto& ex : data)
    acc += byte_hash(ex.id + "\x1f" + ex.nl + "\x1f" + ex.formal);
  return acc;
}

template <typename S>
struct TrainResult {
  model::Parameters<S> params;
  std::vector<StepLog> log;
  std::uint64_t consumed_multiset_hash = 0;
};

namespace detail {

// One scheduled epoch block over `data`: shuffles with the given stream,
// batches, accumulates per-sequence gradients in index order, steps AdamW.
template <typename S>
void run_stage(model::Parameters<S>& params, optim::AdamW<S>& opt,
               std::vector<corpus::Example> data, const tokenizer::Vocab& vocab,
               Direction dir, const SftConfig& cfg, int stage_label,
               std::uint64_t stage_stream, int& global_step,
               std::vector<StepLog>& log) {
  Rng rng(mix64(cfg.seed, stage_stream));
  const int B = cfg.effective_batch;
  std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(data.size()) + B - 1) / B;
  std::int64_t total_steps = steps_per_epoch * cfg.epochs_per_stage;
  std::int64_t stage_step = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    rng.shuffle(data);
    for (std::size_t start = 0; start < data.size(); start += B) {
      std::size_t end = std::min(data.size(), start + B);
      auto n = static_cast<double>(end - start);
      model::Parameters<S> acc = model::zeros_like(params);
      double loss_sum = 0, acc_sum = 0;
      for (std::size_t i = start; i < end; ++i) {
        auto fp = frame_example(vocab, data[i], dir, params.cfg.max_seq);
        auto lg = model::loss_ce_grad(params, fp.tokens, fp.mask);
        loss_sum += static_cast<double>(lg.loss);
        acc_sum += lg.token_accuracy;
        auto refs = model::tensor_refs(acc);
        auto grefs = model::tensor_refs(lg.grads);
        for (std::size_t t = 0; t < refs.size(); ++t)
          if (refs[t].trainable)
            *refs[t].tensor += *grefs[t].tensor / static_cast<S>(n);
      }
      double lr = lr_at(stage_step, total_steps, cfg);
      opt.apply(params, acc, lr, cfg.weight_decay);
      ++stage_step;
      ++global_step;
      log.push_back({global_step, stage_label, lr, loss_sum / n, acc_sum / n});
    }
  }
}

}  // namespace detail

template <typename S>
TrainResult<S> train_curriculum(model::Parameters<S> params,
                                const std::vector<corpus::Example>& data,
                                const tokenizer::Vocab& vocab, Direction dir,
                                const SftConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("curriculum training requires examples");
  std::map<int, std::vector<corpus::Example>> buckets;
  for (const auto& ex : data) buckets[ex.difficulty].push_back(ex);

  TrainResult<S> out;
  out.consumed_multiset_hash = multiset_hash(data);
  optim::AdamW<S> opt = optim::AdamW<S>::init(params);
  int global_step = 0;
  std::uint64_t stage_index = 0;
  for (auto& [difficulty, bucket] : buckets) {
    detail::run_stage(params, opt, bucket, vocab, dir, cfg, difficulty,
                      stage_index, global_step, out.log);
    ++stage_index;
  }
  out.params = std::move(params);
  return out;
}

template <typename S>
TrainResult<S> train_shuffled(model::Parameters<S> params,
                              const std::vector<corpus::Example>& data,
                              const tokenizer::Vocab& vocab, Direction dir,
                              const SftConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("shuffled training requires examples");
  TrainResult<S> out;
  out.consumed_multiset_hash = multiset_hash(data);
  optim::AdamW<S> opt = optim::AdamW<S>::init(params);
  int global_step = 0;
  detail::run_stage(params, opt, data, vocab, dir, cfg, 0, 0, global_step,
                    out.log);
  out.params = std::move(params);
  return out;
}

struct ValCe {
  double overall = 0;
  std::map<int, double> per_difficulty;
  std::map<int, int> counts;
  int n = 0;
};

// Teacher-forced cross-entropy, averaged per example, then per difficulty
// and (count-weighted) overall.
template <typename S>
ValCe evaluate_val_ce(const model::Parameters<S>& params,
                      const std::vector<corpus::Example>& val,
                      const tokenizer::Vocab& vocab, Direction dir) {
  if (val.empty()) throw DataError("validation split is empty");
  ValCe out;
  std::map<int, double> sums;
  for (const auto& ex : val) {
    auto fp = frame_example(vocab, ex, dir, params.cfg.max_seq);
    double ce = static_cast<double>(model::loss_ce(params, fp.tokens, fp.mask).loss);
    sums[ex.difficulty] += ce;
    out.counts[ex.difficulty]++;
    out.overall += ce;
    ++out.n;
  }
  out.overall /= out.n;
  for (const auto& [d, s] : sums)
    out.per_difficulty[d] = s / out.counts[d];
  return out;
}

}  // namespace cycleform::sft
