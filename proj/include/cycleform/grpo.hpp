#pragma once
// Group-relative policy optimization of the NL->formal policy. For each
// prompt, G completions are temperature-sampled with per-completion derived
// seeds; rewards come from cycle consistency against a frozen back-translator
// and are normalized within the group (population standard deviation plus a
// small epsilon). The policy maximizes the clipped surrogate minus an exact
// per-position full-vocabulary KL to the frozen reference, with gradients
// accumulated over a fixed number of prompt groups per optimizer step.
//
// Checkpoints capture policy tensors, optimizer moments, RNG state, and the
// prompt cursor, making an interrupted run bit-identical to an uninterrupted
// one after resume.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cycleform/checkpoint.hpp"
#include "cycleform/common.hpp"
#include "cycleform/corpus.hpp"
#include "cycleform/embedder.hpp"
#include "cycleform/framing.hpp"
#include "cycleform/model.hpp"
#include "cycleform/optim.hpp"
#include "cycleform/tokenizer.hpp"

namespace cycleform::grpo {

struct GrpoConfig {
  int group_size = 8;
  double learning_rate = 1e-5;
  int grad_accumulation = 16;
  double kl_beta = 0.04;
  double clip_epsilon = 0.2;
  double advantage_epsilon = 1e-4;
  double temperature = 1.0;
  int epochs = 1;
  std::uint64_t seed = 0;
  int max_new = 96;
  double weight_decay = 0.0;
  int checkpoint_every = 0;        // optimizer steps; 0 = never
  std::string checkpoint_path;     // required when checkpoint_every > 0
  int stop_after_steps = 0;        // halt once this global step count is done

  void validate() const {
    if (group_size < 2)
      throw ConfigError("group_size must be >= 2 for within-group variance");
    if (learning_rate <= 0 || temperature <= 0 || advantage_epsilon <= 0)
      throw ConfigError("grpo rates must be > 0");
    if (grad_accumulation < 1 || epochs < 1 || max_new < 1)
      throw ConfigError("grpo counts must be >= 1");
    if (kl_beta < 0 || clip_epsilon <= 0 || weight_decay < 0)
      throw ConfigError("grpo penalties out of range");
    if (checkpoint_every > 0 && checkpoint_path.empty())
      throw ConfigError("checkpoint_every requires checkpoint_path");
  }

  nlohmann::json to_json() const {
    return {{"group_size", group_size},
            {"learning_rate", learning_rate},
            {"grad_accumulation", grad_accumulation},
            {"kl_beta", kl_beta},
            {"clip_epsilon", clip_epsilon},
            {"advantage_epsilon", advantage_epsilon},
            {"temperature", temperature},
            {"epochs", epochs},
            {"seed", seed},
            {"max_new", max_new},
            {"weight_decay", weight_decay}};
  }
};

// Rewards normalized with the population standard deviation (divide by G).
inline std::vector<double> normalize_advantages(const std::vector<double>& r,
                                                double eps) {
  if (r.size() < 2)
    throw DataError("advantage normalization needs at least two rewards");
  double mu = 0;
  for (double x : r) mu += x;
  mu /= static_cast<double>(r.size());
  double var = 0;
  for (double x : r) var += (x - mu) * (x - mu);
  var /= static_cast<double>(r.size());
  double denom = std::sqrt(var) + eps;
  std::vector<double> a(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) a[i] = (r[i] - mu) / denom;
  return a;
}

struct Completion {
  std::vector<int> actions;  // sampled tokens; includes EOS when it was drawn
  std::string text;          // decoded, specials stripped
};

struct RolloutGroup {
  std::string prompt_id;
  std::string source_text;
  std::vector<int> prompt_tokens;
  std::vector<Completion> completions;
  std::vector<double> rewards;
  std::vector<double> advantages;
  // Per completion, one value per action (aligned with Completion::actions).
  std::vector<std::vector<double>> behavior_logprobs;
  std::vector<std::vector<double>> reference_logprobs;
};

struct RolloutRecord {
  std::string prompt_id;
  std::string source_text;
  std::string completion_text;
  double reward = 0;
};

struct RewardLogRow {
  int step = 0;
  double mean_reward = 0;
  double mean_kl = 0;
  double mean_abs_advantage = 0;
  double wall_time = 0;  // seconds since run start; excluded from manifests
};

inline std::string reward_log_csv(const std::vector<RewardLogRow>& log) {
  std::string out = "step,mean_reward,mean_kl,mean_abs_advantage,wall_time\n";
  for (const auto& r : log)
    out += std::to_string(r.step) + "," + format_double(r.mean_reward) + "," +
           format_double(r.mean_kl) + "," + format_double(r.mean_abs_advantage) +
           "," + format_double(r.wall_time) + "\n";
  return out;
}

inline std::string rollouts_jsonl(const std::vector<RolloutRecord>& recs) {
  std::string out;
  for (const auto& r : recs) {
    nlohmann::json j = {{"prompt_id", r.prompt_id},
                        {"source", r.source_text},
                        {"completion", r.completion_text},
                        {"reward", r.reward}};
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling with the EOS decision visible as an action.
// ---------------------------------------------------------------------------

// Unlike model::sample, the returned sequence keeps a sampled EOS: the policy
// is scored on every decision it made, including stopping.
template <typename S>
std::vector<int> sample_actions(const model::Parameters<S>& p,
                                const std::vector<int>& prompt,
                                double temperature, std::uint64_t seed,
                                int max_new) {
  if (static_cast<int>(prompt.size()) + max_new > p.cfg.max_seq)
    throw ConfigError("prompt length + max_new exceeds max_seq");
  model::DecodeCache<S> cache(p);
  Eigen::Matrix<S, 1, Eigen::Dynamic> logits;
  for (int t : prompt) logits = model::decode_step(p, cache, t);
  Rng rng(seed);
  std::vector<int> actions;
  for (int step = 0; step < max_new; ++step) {
    model::Vec<S> lsm = model::log_softmax_row<S>(
        (logits / static_cast<S>(temperature)).eval());
    double u = rng.uniform01();
    double acc = 0;
    int next = p.cfg.vocab - 1;
    for (int j = 0; j < p.cfg.vocab; ++j) {
      acc += std::exp(static_cast<double>(lsm(j)));
      if (u < acc) {
        next = j;
        break;
      }
    }
    actions.push_back(next);
    if (next == tokenizer::kEos) break;
    if (step + 1 < max_new) logits = model::decode_step(p, cache, next);
  }
  return actions;
}

inline std::uint64_t completion_seed(std::uint64_t run_seed,
                                     const std::string& prompt_id, int i) {
  return mix64(mix64(run_seed, byte_hash(prompt_id)),
               static_cast<std::uint64_t>(i));
}

template <typename S>
RolloutGroup rollout(const model::Parameters<S>& policy,
                     const model::Parameters<S>& reference,
                     const tokenizer::Vocab& vocab, const corpus::Example& ex,
                     const embedder::BackTranslator& back_translate,
                     const embedder::Embedder& emb, const GrpoConfig& cfg) {
  RolloutGroup g;
  g.prompt_id = ex.id;
  g.source_text = ex.nl;
  g.prompt_tokens = framing::make_prompt(vocab, ex.nl);
  int budget = std::min<int>(
      cfg.max_new,
      policy.cfg.max_seq - static_cast<int>(g.prompt_tokens.size()));
  if (budget < 1)
    throw DataError("prompt '" + ex.id + "' leaves no room to generate");
  for (int i = 0; i < cfg.group_size; ++i) {
    Completion c;
    c.actions = sample_actions(policy, g.prompt_tokens, cfg.temperature,
                               completion_seed(cfg.seed, ex.id, i), budget);
    c.text = tokenizer::decode(c.actions, vocab);

    std::vector<int> tokens = g.prompt_tokens;
    tokens.insert(tokens.end(), c.actions.begin(), c.actions.end());
    model::Mask mask(tokens.size(), 0);
    for (std::size_t t = g.prompt_tokens.size(); t < tokens.size(); ++t)
      mask[t] = 1;
    auto blp = model::token_logprobs(policy, tokens, mask);
    auto rlp = model::token_logprobs(reference, tokens, mask);
    std::vector<double> bl, rl;
    for (std::size_t t = g.prompt_tokens.size(); t < tokens.size(); ++t) {
      bl.push_back(static_cast<double>(blp[t]));
      rl.push_back(static_cast<double>(rlp[t]));
    }
    g.behavior_logprobs.push_back(std::move(bl));
    g.reference_logprobs.push_back(std::move(rl));
    g.rewards.push_back(
        embedder::cycle_consistency(ex.nl, c.text, back_translate, emb));
    g.completions.push_back(std::move(c));
  }
  g.advantages = normalize_advantages(g.rewards, cfg.advantage_epsilon);
  return g;
}

// ---------------------------------------------------------------------------
// Objective pieces.
// ---------------------------------------------------------------------------

// One token's clipped-surrogate contribution: min of the unclipped and
// clipped importance-weighted advantage.
inline double surrogate_term(double rho, double advantage, double clip_eps) {
  double unclipped = rho * advantage;
  double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
  return std::min(unclipped, clipped);
}

// Mean over tokens within each completion, then mean over completions; the
// sequence-level advantage is broadcast to every token.
inline double surrogate_loss(
    const std::vector<std::vector<double>>& new_logprobs,
    const std::vector<std::vector<double>>& behavior_logprobs,
    const std::vector<double>& advantages, double clip_eps) {
  if (new_logprobs.size() != behavior_logprobs.size() ||
      new_logprobs.size() != advantages.size())
    throw DataError("surrogate_loss: misaligned completion lists");
  double total = 0;
  for (std::size_t i = 0; i < new_logprobs.size(); ++i) {
    if (new_logprobs[i].size() != behavior_logprobs[i].size() ||
        new_logprobs[i].empty())
      throw DataError("surrogate_loss: misaligned token lists");
    double seq = 0;
    for (std::size_t t = 0; t < new_logprobs[i].size(); ++t)
      seq += surrogate_term(std::exp(new_logprobs[i][t] - behavior_logprobs[i][t]),
                            advantages[i], clip_eps);
    total += seq / static_cast<double>(new_logprobs[i].size());
  }
  return total / static_cast<double>(new_logprobs.size());
}

// Exact KL(p || q) between two distributions given as probabilities, with the
// 0 * log(0/q) = 0 convention.
inline double kl_exact(const std::vector<double>& p,
                       const std::vector<double>& q) {
  if (p.size() != q.size()) throw DataError("kl_exact: dimension mismatch");
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

struct GroupStats {
  double objective = 0;   // surrogate minus beta * KL, to maximize
  double mean_kl = 0;
  double mean_reward = 0;
  double mean_abs_advantage = 0;
};

// Accumulates d(-objective)/d(params) for one group into `acc`, scaled by
// 1/scale_groups (the accumulation window size). The surrogate gradient flows
// only where the unclipped branch attains the min; KL is exact over the
// vocabulary.
template <typename S>
GroupStats accumulate_group_gradient(const model::Parameters<S>& policy,
                                     const model::Parameters<S>& reference,
                                     const RolloutGroup& g,
                                     const GrpoConfig& cfg, double scale_groups,
                                     model::Parameters<S>* acc) {
  GroupStats st;
  const int G = static_cast<int>(g.completions.size());
  for (int i = 0; i < G; ++i) {
    const auto& c = g.completions[i];
    const double A = g.advantages[i];
    std::vector<int> tokens = g.prompt_tokens;
    tokens.insert(tokens.end(), c.actions.begin(), c.actions.end());
    model::Mask mask(tokens.size(), 0);
    for (std::size_t t = g.prompt_tokens.size(); t < tokens.size(); ++t)
      mask[t] = 1;

    model::ForwardTrace<S> tr;
    model::Mat<S> logits = model::forward(policy, tokens, &tr);
    model::Mat<S> ref_logits = model::forward(reference, tokens);
    model::Mat<S> dlogits = model::Mat<S>::Zero(logits.rows(), logits.cols());

    const double Ti = static_cast<double>(c.actions.size());
    double surr_sum = 0, kl_sum = 0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (!mask[t]) continue;
      Eigen::Index row = static_cast<Eigen::Index>(t) - 1;
      Eigen::Matrix<S, 1, Eigen::Dynamic> prow = logits.row(row);
      Eigen::Matrix<S, 1, Eigen::Dynamic> qrow = ref_logits.row(row);
      model::Vec<S> p_lsm = model::log_softmax_row<S>(prow);
      model::Vec<S> q_lsm = model::log_softmax_row<S>(qrow);
      model::Vec<S> p = p_lsm.array().exp();
      int a = tokens[t];
      double behavior =
          g.behavior_logprobs[i][t - g.prompt_tokens.size()];
      double rho = std::exp(static_cast<double>(p_lsm(a)) - behavior);
      double unclipped = rho * A;
      double clipped =
          std::clamp(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * A;
      surr_sum += surrogate_term(rho, A, cfg.clip_epsilon);

      model::Vec<S> logdiff = p_lsm - q_lsm;
      double kl = static_cast<double>((p.array() * logdiff.array()).sum());
      kl_sum += kl;

      // d(objective)/dlogits for this row; converted to a loss gradient by
      // the leading minus below.
      double weight = 1.0 / (Ti * static_cast<double>(G) * scale_groups);
      model::Vec<S> dobj = model::Vec<S>::Zero(p.size());
      if (unclipped <= clipped) {
        dobj = -static_cast<S>(rho * A) * p;
        dobj(a) += static_cast<S>(rho * A);
      }
      dobj -= static_cast<S>(cfg.kl_beta) *
              (p.array() * (logdiff.array() - static_cast<S>(kl))).matrix();
      dlogits.row(row) -= static_cast<S>(weight) * dobj.transpose();
    }
    st.objective += (surr_sum - cfg.kl_beta * kl_sum) / Ti / G;
    st.mean_kl += kl_sum / Ti / G;
    st.mean_abs_advantage += std::abs(A) / G;
    st.mean_reward += g.rewards[i] / G;

    model::Parameters<S> grads = model::backward(policy, tr, dlogits);
    auto arefs = model::tensor_refs(*acc);
    auto grefs = model::tensor_refs(grads);
    for (std::size_t k = 0; k < arefs.size(); ++k)
      if (arefs[k].trainable) *arefs[k].tensor += *grefs[k].tensor;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Checkpointing.
// ---------------------------------------------------------------------------

template <typename S>
void save_rl_checkpoint(const std::string& path,
                        const model::Parameters<S>& policy,
                        const tokenizer::Vocab& vocab,
                        const optim::AdamW<S>& opt, const GrpoConfig& cfg,
                        std::int64_t cursor, int step,
                        const std::string& rng_state) {
  checkpoint::Container c;
  c.meta["kind"] = "rl";
  c.meta["model_config"] = policy.cfg.to_json();
  c.meta["adapter_config"] = policy.acfg.to_json();
  c.meta["vocab"] = checkpoint::vocab_to_json(vocab);
  c.meta["grpo_config"] = cfg.to_json();
  c.meta["cursor"] = cursor;
  c.meta["step"] = step;
  c.meta["opt_step"] = opt.step;
  c.meta["rng"] = rng_state;
  checkpoint::append_params(c, policy);
  for (std::size_t k = 0; k < opt.names.size(); ++k) {
    c.tensors.emplace_back("opt.m." + opt.names[k],
                           opt.m[k].template cast<double>().eval());
    c.tensors.emplace_back("opt.v." + opt.names[k],
                           opt.v[k].template cast<double>().eval());
  }
  checkpoint::save_container(path, c);
}

template <typename S>
struct RlResume {
  model::Parameters<S> policy;
  tokenizer::Vocab vocab;
  optim::AdamW<S> opt;
  nlohmann::json grpo_config_echo;
  std::int64_t cursor = 0;
  int step = 0;
  std::string rng_state;
};

template <typename S>
RlResume<S> load_rl_checkpoint(const std::string& path) {
  checkpoint::Container c = checkpoint::load_container(path);
  if (c.meta.value("kind", "") != "rl")
    throw DataError("not an RL checkpoint: kind=" + c.meta.value("kind", "?"));
  RlResume<S> r;
  auto mcfg = model::ModelConfig::from_json(c.meta.at("model_config"));
  auto acfg = model::AdapterConfig::from_json(c.meta.at("adapter_config"));
  r.policy = model::init_params<S>(mcfg, acfg, 0);
  checkpoint::read_params(c, r.policy);
  r.vocab = checkpoint::vocab_from_json(c.meta.at("vocab"));
  r.opt = optim::AdamW<S>::init(r.policy);
  r.opt.step = c.meta.at("opt_step").get<std::int64_t>();
  for (std::size_t k = 0; k < r.opt.names.size(); ++k) {
    r.opt.m[k] = c.tensor("opt.m." + r.opt.names[k]).template cast<S>();
    r.opt.v[k] = c.tensor("opt.v." + r.opt.names[k]).template cast<S>();
  }
  r.grpo_config_echo = c.meta.at("grpo_config");
  r.cursor = c.meta.at("cursor").get<std::int64_t>();
  r.step = c.meta.at("step").get<int>();
  r.rng_state = c.meta.at("rng").get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

template <typename S>
struct GrpoResult {
  model::Parameters<S> policy;
  optim::AdamW<S> opt;
  std::vector<RewardLogRow> reward_log;
  std::vector<RolloutRecord> rollouts;
  std::int64_t cursor = 0;
  int steps_completed = 0;
  std::string rng_state;
  bool finished = false;  // false when stop_after_steps halted the run early
};

template <typename S>
GrpoResult<S> grpo_train(model::Parameters<S> policy,
                         const model::Parameters<S>& reference,
                         const embedder::BackTranslator& back_translate,
                         const embedder::Embedder& emb,
                         const std::vector<corpus::Example>& prompts,
                         const tokenizer::Vocab& vocab, const GrpoConfig& cfg,
                         const RlResume<S>* resume = nullptr) {
  cfg.validate();
  if (prompts.empty()) throw DataError("grpo_train requires prompts");
  if (!(policy.cfg == reference.cfg))
    throw ConfigError("policy and reference configurations differ");

  GrpoResult<S> out;
  optim::AdamW<S> opt = optim::AdamW<S>::init(policy);
  std::int64_t cursor = 0;
  int step = 0;
  Rng master(mix64(cfg.seed, 0xD1CEull));
  if (resume) {
    if (resume->grpo_config_echo != cfg.to_json())
      throw StateError("checkpoint config echo does not match this run");
    policy = resume->policy;
    opt = resume->opt;
    cursor = resume->cursor;
    step = resume->step;
    master.set_state(resume->rng_state);
  }

  const std::int64_t n = static_cast<std::int64_t>(prompts.size());
  const std::int64_t total_groups = n * cfg.epochs;

  // Epoch orders are derived from the config seed, not the master stream, so
  // a resumed run rebuilds the identical schedule from the cursor alone.
  auto order_for_epoch = [&](std::int64_t epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng r(mix64(cfg.seed, mix64(0x0BDE5ull, static_cast<std::uint64_t>(epoch))));
    r.shuffle(order);
    return order;
  };

  auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  model::Parameters<S> acc = model::zeros_like(policy);
  int in_window = 0;
  double win_reward = 0, win_kl = 0, win_absadv = 0, win_obj = 0;
  std::vector<std::int64_t> order;
  std::int64_t order_epoch = -1;

  auto emergency_save = [&](const char* why) {
    if (!cfg.checkpoint_path.empty())
      save_rl_checkpoint(cfg.checkpoint_path + ".abort", policy, vocab, opt,
                         cfg, cursor, step, master.state());
    throw StateError(std::string("grpo aborted: ") + why);
  };

  while (cursor < total_groups) {
    std::int64_t epoch = cursor / n;
    if (epoch != order_epoch) {
      order = order_for_epoch(epoch);
      order_epoch = epoch;
    }
    const corpus::Example& ex =
        prompts[static_cast<std::size_t>(order[static_cast<std::size_t>(cursor % n)])];
    RolloutGroup g =
        rollout(policy, reference, vocab, ex, back_translate, emb, cfg);
    double window = static_cast<double>(cfg.grad_accumulation);
    GroupStats st =
        accumulate_group_gradient(policy, reference, g, cfg, window, &acc);
    if (!std::isfinite(st.objective)) emergency_save("non-finite objective");
    for (int i = 0; i < cfg.group_size; ++i)
      out.rollouts.push_back(
          {ex.id, ex.nl, g.completions[static_cast<std::size_t>(i)].text,
           g.rewards[static_cast<std::size_t>(i)]});
    win_reward += st.mean_reward;
    win_kl += st.mean_kl;
    win_absadv += st.mean_abs_advantage;
    win_obj += st.objective;
    ++in_window;
    ++cursor;

    bool last_group = cursor == total_groups;
    if (in_window == cfg.grad_accumulation || last_group) {
      // A short tail window still averages over the configured window size;
      // consistent with the per-group scaling applied during accumulation.
      try {
        opt.apply(policy, acc, cfg.learning_rate, cfg.weight_decay);
      } catch (const StateError&) {
        emergency_save("non-finite gradient");
      }
      ++step;
      out.reward_log.push_back({step, win_reward / in_window,
                                win_kl / in_window, win_absadv / in_window,
                                wall()});
      acc = model::zeros_like(policy);
      in_window = 0;
      win_reward = win_kl = win_absadv = win_obj = 0;
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
        save_rl_checkpoint(cfg.checkpoint_path, policy, vocab, opt, cfg,
                           cursor, step, master.state());
      if (cfg.stop_after_steps > 0 && step >= cfg.stop_after_steps) {
        out.policy = std::move(policy);
        out.opt = std::move(opt);
        out.cursor = cursor;
        out.steps_completed = step;
        out.rng_state = master.state();
        out.finished = cursor == total_groups;
        return out;
      }
    }
  }

  out.policy = std::move(policy);
  out.opt = std::move(opt);
  out.cursor = cursor;
  out.steps_completed = step;
  out.rng_state = master.state();
  out.finished = true;
  return out;
}

// Greedy translation through a frozen model: the standard back-translator
// and evaluation decoder.
template <typename S>
std::string greedy_translate(const model::Parameters<S>& p,
                             const tokenizer::Vocab& vocab,
                             const std::string& src, int max_new) {
  auto prompt = framing::make_prompt(vocab, src);
  int budget =
      std::min<int>(max_new, p.cfg.max_seq - static_cast<int>(prompt.size()));
  if (budget < 1) throw DataError("prompt leaves no room to generate");
  model::SampleOptions opts;
  opts.greedy = true;
  opts.max_new = budget;
  return tokenizer::decode(model::sample(p, prompt, opts), vocab);
}

}  // namespace cycleform::grpo
