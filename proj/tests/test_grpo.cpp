#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cycleform/grpo.hpp"

using namespace cycleform;
using namespace cycleform::grpo;
using Md = model::Mat<double>;

namespace {

corpus::Example micro(const std::string& id, const std::string& nl,
                      const std::string& formal, int difficulty) {
  corpus::Example ex;
  ex.id = id;
  ex.nl = nl;
  ex.formal = formal;
  ex.difficulty = difficulty;
  ex.domain = "algebra";
  return ex;
}

std::vector<corpus::Example> micro_prompts(int n) {
  std::vector<corpus::Example> out;
  for (int i = 0; i < n; ++i)
    out.push_back(micro("p" + std::to_string(i),
                        "go " + std::to_string(i % 7) + " now",
                        "v" + std::to_string(i % 5) + " = w", 1 + i % 3));
  return out;
}

struct MicroRig {
  std::vector<corpus::Example> prompts;
  tokenizer::Vocab vocab;
  model::Parameters<double> policy;
  model::Parameters<double> reference;
  embedder::HashedNgramEmbedder emb{64, {2, 3}};

  explicit MicroRig(int n_prompts, std::uint64_t init_seed = 3) {
    prompts = micro_prompts(n_prompts);
    vocab = tokenizer::build_vocab(prompts, 48);
    model::ModelConfig mc;
    mc.layers = 1;
    mc.heads = 2;
    mc.d_model = 16;
    mc.d_ff = 24;
    mc.vocab = vocab.size();
    mc.max_seq = 48;
    policy = model::init_params<double>(mc, {}, init_seed);
    reference = policy;
  }
};

GrpoConfig micro_cfg() {
  GrpoConfig cfg;
  cfg.group_size = 2;
  cfg.grad_accumulation = 2;
  cfg.max_new = 6;
  cfg.learning_rate = 1e-3;
  cfg.seed = 99;
  return cfg;
}

// Reward becomes a constant independent of the completion text.
struct ConstEmbedder final : embedder::Embedder {
  embedder::Vector embed(std::string_view) const override {
    embedder::Vector v = embedder::Vector::Zero(4);
    v(0) = 1.0;
    return v;
  }
  int dim() const override { return 4; }
};

struct ZeroEmbedder final : embedder::Embedder {
  embedder::Vector embed(std::string_view) const override {
    return embedder::Vector::Zero(4);
  }
  int dim() const override { return 4; }
};

const embedder::BackTranslator kEchoInput = [](const std::string& s) {
  return s;
};

bool params_equal(const model::Parameters<double>& a,
                  const model::Parameters<double>& b) {
  auto& am = const_cast<model::Parameters<double>&>(a);
  auto& bm = const_cast<model::Parameters<double>&>(b);
  auto ar = model::tensor_refs(am);
  auto br = model::tensor_refs(bm);
  for (std::size_t i = 0; i < ar.size(); ++i)
    if (*ar[i].tensor != *br[i].tensor) return false;
  return true;
}

// Largest per-position KL(policy || reference) over the masked positions of
// the prompts' framed pairs, recomputed from raw logits.
double probe_max_kl(const MicroRig& rig, const model::Parameters<double>& p) {
  double worst = 0;
  for (const auto& ex : rig.prompts) {
    auto fp = framing::encode_pair(rig.vocab, ex.nl, ex.formal);
    Md lp = model::forward(p, fp.tokens);
    Md lq = model::forward(rig.reference, fp.tokens);
    for (std::size_t t = 1; t < fp.tokens.size(); ++t) {
      if (!fp.mask[t]) continue;
      Eigen::Index r = static_cast<Eigen::Index>(t) - 1;
      Eigen::Matrix<double, 1, Eigen::Dynamic> rowp = lp.row(r), rowq = lq.row(r);
      auto pl = model::log_softmax_row<double>(rowp);
      auto ql = model::log_softmax_row<double>(rowq);
      double kl = (pl.array().exp() * (pl - ql).array()).sum();
      worst = std::max(worst, kl);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("advantage normalization uses the population standard deviation") {
  SUBCASE("identical rewards zero out") {
    auto a = normalize_advantages({1, 1, 1, 1}, 0.5);
    for (double x : a) CHECK(x == 0.0);
  }
  SUBCASE("two-point fixture") {
    auto a = normalize_advantages({0.0, 1.0}, 0.0);
    CHECK(a[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("four-point fixture against direct arithmetic") {
    auto a = normalize_advantages({0.2, 0.4, 0.6, 0.8}, 0.0);
    CHECK(a[0] == doctest::Approx(-1.3416).epsilon(1e-4));
    CHECK(a[1] == doctest::Approx(-0.4472).epsilon(1e-4));
    CHECK(a[2] == doctest::Approx(0.4472).epsilon(1e-4));
    CHECK(a[3] == doctest::Approx(1.3416).epsilon(1e-4));
  }
  SUBCASE("zero mean always; unit spread when sigma dwarfs epsilon") {
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> r;
      for (int i = 0; i < 8; ++i) r.push_back(rng.uniform(-1, 1));
      double eps = 1e-4;
      auto a = normalize_advantages(r, eps);
      double mean = 0;
      for (double x : a) mean += x;
      mean /= 8;
      CHECK(std::abs(mean) < 1e-9);
      double var = 0;
      for (double x : a) var += (x - mean) * (x - mean);
      double sd = std::sqrt(var / 8);
      double rsd = 0;
      for (double x : r) rsd += x * x;
      // population sd of r
      double rmean = 0;
      for (double x : r) rmean += x / 8;
      double rvar = 0;
      for (double x : r) rvar += (x - rmean) * (x - rmean) / 8;
      if (std::sqrt(rvar) >= 100 * eps) CHECK(std::abs(sd - 1.0) < 1e-3);
    }
  }
  SUBCASE("fewer than two rewards is an error") {
    CHECK_THROWS_AS(normalize_advantages({0.5}, 1e-4), DataError);
  }
}

TEST_CASE("clipped surrogate arithmetic") {
  CHECK(surrogate_term(1.5, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(surrogate_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(surrogate_term(1.0, 0.7, 0.2) == doctest::Approx(0.7).epsilon(1e-12));

  SUBCASE("unit ratios reduce the objective to the mean advantage") {
    auto adv = normalize_advantages({0.2, 0.4, 0.6, 0.8}, 1e-4);
    std::vector<std::vector<double>> lps = {
        {-1.0, -2.0}, {-0.5}, {-3.0, -0.1, -0.2}, {-1.5}};
    CHECK(std::abs(surrogate_loss(lps, lps, adv, 0.2)) < 1e-12);
  }

  SUBCASE("misaligned inputs are rejected") {
    CHECK_THROWS_AS(surrogate_loss({{-1.0}}, {{-1.0}, {-2.0}}, {0.0}, 0.2),
                    DataError);
    CHECK_THROWS_AS(surrogate_loss({{-1.0}}, {{-1.0, -2.0}}, {0.0}, 0.2),
                    DataError);
  }
}

TEST_CASE("exact KL fixtures") {
  CHECK(kl_exact({1.0, 0.0}, {0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // 0.9 ln(1.8) + 0.1 ln(0.2)
  CHECK(kl_exact({0.9, 0.1}, {0.5, 0.5}) == doctest::Approx(0.36806).epsilon(1e-4));
  CHECK(kl_exact({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK_THROWS_AS(kl_exact({1.0}, {0.5, 0.5}), DataError);

  SUBCASE("log-space form used by the gradient agrees on random rows") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      int v = 7;
      Eigen::Matrix<double, 1, Eigen::Dynamic> lp(v), lq(v);
      for (int i = 0; i < v; ++i) {
        lp(i) = rng.uniform(-3, 3);
        lq(i) = rng.uniform(-3, 3);
      }
      auto pl = model::log_softmax_row<double>(lp);
      auto ql = model::log_softmax_row<double>(lq);
      double kl_logspace = (pl.array().exp() * (pl - ql).array()).sum();
      std::vector<double> p(v), q(v);
      for (int i = 0; i < v; ++i) {
        p[i] = std::exp(pl(i));
        q[i] = std::exp(ql(i));
      }
      CHECK(kl_logspace == doctest::Approx(kl_exact(p, q)).epsilon(1e-12));
    }
  }
}

TEST_CASE("rollouts are deterministic with aligned logprobs and rewards") {
  MicroRig rig(4);
  GrpoConfig cfg = micro_cfg();
  auto g1 = rollout(rig.policy, rig.reference, rig.vocab, rig.prompts[0],
                    kEchoInput, rig.emb, cfg);
  auto g2 = rollout(rig.policy, rig.reference, rig.vocab, rig.prompts[0],
                    kEchoInput, rig.emb, cfg);

  REQUIRE(g1.completions.size() == 2);
  CHECK(g1.rewards.size() == 2);
  CHECK(g1.advantages.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(g1.completions[i].actions == g2.completions[i].actions);
    CHECK(g1.rewards[i] == g2.rewards[i]);
    CHECK(g1.behavior_logprobs[i] == g2.behavior_logprobs[i]);
    CHECK(static_cast<int>(g1.completions[i].actions.size()) <= cfg.max_new);
    for (std::size_t t = 0; t + 1 < g1.completions[i].actions.size(); ++t)
      CHECK(g1.completions[i].actions[t] != tokenizer::kEos);
  }
  CHECK(completion_seed(cfg.seed, "p0", 0) != completion_seed(cfg.seed, "p0", 1));

  SUBCASE("group advantages have zero mean") {
    double m = 0;
    for (double a : g1.advantages) m += a;
    CHECK(std::abs(m / 2) < 1e-9);
  }

  SUBCASE("behavior logprobs equal a fresh scoring of the frozen policy") {
    for (int i = 0; i < 2; ++i) {
      std::vector<int> tokens = g1.prompt_tokens;
      const auto& acts = g1.completions[i].actions;
      tokens.insert(tokens.end(), acts.begin(), acts.end());
      model::Mask mask(tokens.size(), 0);
      for (std::size_t t = g1.prompt_tokens.size(); t < tokens.size(); ++t)
        mask[t] = 1;
      auto lps = model::token_logprobs(rig.policy, tokens, mask);
      for (std::size_t t = 0; t < acts.size(); ++t)
        CHECK(g1.behavior_logprobs[i][t] ==
              lps[g1.prompt_tokens.size() + t]);
    }
  }

  SUBCASE("recorded rewards equal an independent reward recomputation") {
    for (int i = 0; i < 2; ++i)
      CHECK(g1.rewards[i] ==
            embedder::cycle_consistency(rig.prompts[0].nl,
                                        g1.completions[i].text, kEchoInput,
                                        rig.emb));
  }
}

TEST_CASE("a micro training run produces the documented logs and artifacts") {
  MicroRig rig(8);
  GrpoConfig cfg = micro_cfg();
  auto res = grpo_train(rig.policy, rig.reference, kEchoInput, rig.emb,
                        rig.prompts, rig.vocab, cfg);

  CHECK(res.finished);
  CHECK(res.cursor == 8);
  CHECK(res.steps_completed == 4);  // 8 groups / accumulation 2
  REQUIRE(res.reward_log.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(res.reward_log[i].step == i + 1);
    CHECK(res.reward_log[i].mean_reward >= -1.0);
    CHECK(res.reward_log[i].mean_reward <= 1.0);
    CHECK(res.reward_log[i].mean_kl >= -1e-12);
    if (i > 0)
      CHECK(res.reward_log[i].wall_time >= res.reward_log[i - 1].wall_time);
  }
  CHECK(res.rollouts.size() == 8 * 2);
  CHECK_FALSE(params_equal(res.policy, rig.reference));

  SUBCASE("the reference stayed frozen") {
    MicroRig fresh(8);
    CHECK(params_equal(rig.reference, fresh.reference));
  }

  SUBCASE("csv and jsonl emitters cover every row") {
    auto csv = reward_log_csv(res.reward_log);
    CHECK(csv.rfind("step,mean_reward,mean_kl,mean_abs_advantage,wall_time\n",
                    0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    auto jl = rollouts_jsonl(res.rollouts);
    CHECK(std::count(jl.begin(), jl.end(), '\n') == 16);
    auto first = nlohmann::json::parse(jl.substr(0, jl.find('\n')));
    CHECK(first.contains("prompt_id"));
    CHECK(first.contains("reward"));
  }
}

TEST_CASE("an overwhelming KL weight pins the policy to its reference") {
  MicroRig rig(16);
  GrpoConfig cfg = micro_cfg();
  // The first update is pure surrogate (the KL gradient vanishes while the
  // policy still equals its reference), so the achievable pin tightness is
  // set by the step size.
  cfg.learning_rate = 3e-4;

  GrpoConfig pinned = cfg;
  pinned.kl_beta = 1e3;
  auto res_pinned = grpo_train(rig.policy, rig.reference, kEchoInput, rig.emb,
                               rig.prompts, rig.vocab, pinned);

  GrpoConfig free_run = cfg;
  free_run.kl_beta = 0.0;
  auto res_free = grpo_train(rig.policy, rig.reference, kEchoInput, rig.emb,
                             rig.prompts, rig.vocab, free_run);

  double kl_pinned = probe_max_kl(rig, res_pinned.policy);
  double kl_free = probe_max_kl(rig, res_free.policy);
  CHECK(kl_pinned < 1e-3);
  CHECK(kl_pinned < kl_free);
}

TEST_CASE("constant rewards degenerate to a pure-KL update stream") {
  // Advantages vanish for any constant reward, so two runs whose rewards
  // differ only in the constant value must produce identical parameters.
  MicroRig rig(8);
  GrpoConfig cfg = micro_cfg();
  ConstEmbedder ones;
  ZeroEmbedder zeros;
  auto res_one = grpo_train(rig.policy, rig.reference, kEchoInput, ones,
                            rig.prompts, rig.vocab, cfg);
  auto res_zero = grpo_train(rig.policy, rig.reference, kEchoInput, zeros,
                             rig.prompts, rig.vocab, cfg);
  CHECK(res_one.reward_log[0].mean_reward == doctest::Approx(1.0));
  CHECK(res_zero.reward_log[0].mean_reward == doctest::Approx(0.0));
  CHECK(res_one.reward_log[0].mean_abs_advantage == 0.0);
  CHECK(params_equal(res_one.policy, res_zero.policy));
}

TEST_CASE("rl checkpoints round-trip bit-exactly") {
  MicroRig rig(8);
  GrpoConfig cfg = micro_cfg();
  cfg.stop_after_steps = 2;
  auto res = grpo_train(rig.policy, rig.reference, kEchoInput, rig.emb,
                        rig.prompts, rig.vocab, cfg);
  CHECK_FALSE(res.finished);

  auto path = (std::filesystem::temp_directory_path() / "rl_ckpt.bin").string();
  save_rl_checkpoint(path, res.policy, rig.vocab, res.opt, cfg, res.cursor,
                     res.steps_completed, res.rng_state);
  auto loaded = load_rl_checkpoint<double>(path);
  CHECK(params_equal(loaded.policy, res.policy));
  CHECK(loaded.opt.step == res.opt.step);
  REQUIRE(loaded.opt.m.size() == res.opt.m.size());
  for (std::size_t i = 0; i < res.opt.m.size(); ++i) {
    CHECK(loaded.opt.m[i] == res.opt.m[i]);
    CHECK(loaded.opt.v[i] == res.opt.v[i]);
  }
  CHECK(loaded.cursor == res.cursor);
  CHECK(loaded.step == res.steps_completed);
  CHECK(loaded.rng_state == res.rng_state);
  CHECK(loaded.vocab.chars == rig.vocab.chars);
  std::remove(path.c_str());
}

TEST_CASE("interrupt-resume reproduces the uninterrupted run bit-exactly") {
  GrpoConfig cfg = micro_cfg();

  MicroRig rig_c(16);
  auto uninterrupted = grpo_train(rig_c.policy, rig_c.reference, kEchoInput,
                                  rig_c.emb, rig_c.prompts, rig_c.vocab, cfg);
  CHECK(uninterrupted.steps_completed == 8);

  MicroRig rig_a(16);
  GrpoConfig cfg_a = cfg;
  cfg_a.stop_after_steps = 4;
  auto partial = grpo_train(rig_a.policy, rig_a.reference, kEchoInput,
                            rig_a.emb, rig_a.prompts, rig_a.vocab, cfg_a);
  CHECK(partial.steps_completed == 4);

  auto path =
      (std::filesystem::temp_directory_path() / "rl_resume.bin").string();
  save_rl_checkpoint(path, partial.policy, rig_a.vocab, partial.opt, cfg,
                     partial.cursor, partial.steps_completed,
                     partial.rng_state);
  auto resume = load_rl_checkpoint<double>(path);

  MicroRig rig_b(16);
  auto finished = grpo_train(rig_b.policy, rig_b.reference, kEchoInput,
                             rig_b.emb, rig_b.prompts, rig_b.vocab, cfg,
                             &resume);
  CHECK(finished.finished);
  CHECK(finished.steps_completed == 8);
  CHECK(params_equal(finished.policy, uninterrupted.policy));
  for (std::size_t i = 0; i < finished.opt.m.size(); ++i) {
    CHECK(finished.opt.m[i] == uninterrupted.opt.m[i]);
    CHECK(finished.opt.v[i] == uninterrupted.opt.v[i]);
  }
  CHECK(finished.reward_log.front().step == 5);
  CHECK(finished.reward_log.back().step == 8);
  std::remove(path.c_str());

  SUBCASE("a different configuration refuses the checkpoint") {
    GrpoConfig other = cfg;
    other.kl_beta = 0.123;
    MicroRig rig_d(16);
    CHECK_THROWS_AS(grpo_train(rig_d.policy, rig_d.reference, kEchoInput,
                               rig_d.emb, rig_d.prompts, rig_d.vocab, other,
                               &resume),
                    StateError);
  }
}

TEST_CASE("rl checkpoint loading rejects foreign and corrupt files") {
  MicroRig rig(2);
  auto dir = std::filesystem::temp_directory_path();

  auto model_path = (dir / "plain_model.bin").string();
  checkpoint::save_model(model_path, rig.policy, rig.vocab);
  CHECK_THROWS_AS(load_rl_checkpoint<double>(model_path), DataError);
  std::remove(model_path.c_str());

  auto rl_path = (dir / "rl_corrupt.bin").string();
  auto opt = optim::AdamW<double>::init(rig.policy);
  save_rl_checkpoint(rl_path, rig.policy, rig.vocab, opt, micro_cfg(), 0, 0,
                     Rng(1).state());
  auto bytes = read_text_file(rl_path);
  write_text_file(rl_path, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_rl_checkpoint<double>(rl_path), DataError);
  write_text_file(rl_path, "XXXXXXXX" + bytes.substr(8));
  CHECK_THROWS_AS(load_rl_checkpoint<double>(rl_path), DataError);
  std::remove(rl_path.c_str());
}

TEST_CASE("a non-finite objective aborts with an emergency checkpoint") {
  MicroRig rig(4);
  GrpoConfig cfg = micro_cfg();
  cfg.checkpoint_every = 100;
  cfg.checkpoint_path =
      (std::filesystem::temp_directory_path() / "rl_abort.bin").string();
  rig.policy.head(0, 0) = std::nan("");
  CHECK_THROWS_AS(grpo_train(rig.policy, rig.reference, kEchoInput, rig.emb,
                             rig.prompts, rig.vocab, cfg),
                  StateError);
  std::string abort_path = cfg.checkpoint_path + ".abort";
  CHECK(std::filesystem::exists(abort_path));
  std::remove(abort_path.c_str());
}
