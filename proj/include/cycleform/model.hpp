#pragma once
// Tiny decoder-only transformer, templated on scalar type. Pre-norm blocks,
// exact-erf GELU FFN, learned positional embeddings, untied output head.
// Weights follow the right-multiply convention y = x * W with W shaped
// (d_in x d_out). Low-rank adapters attach to both FFN matrices per block:
// the effective weight is W + (alpha/r) * lora_in * lora_out with
// lora_in (d_in x r) and lora_out (r x d_out); lora_out starts at zero so a
// fresh adapter is exactly transparent. When adapters are enabled they are
// the only trainable tensors.
//
// forward/backward trace every activation needed for an exact reverse pass;
// sample() decodes incrementally against per-layer key/value caches, which
// reproduces the full forward's arithmetic row by row because causal rows
// never read later positions.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "cycleform/common.hpp"
#include "cycleform/tokenizer.hpp"

namespace cycleform::model {

struct ModelConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 64;
  int d_ff = 128;
  int vocab = 64;
  int max_seq = 512;

  void validate() const {
    if (layers < 0) throw ConfigError("layers must be >= 0");
    if (heads < 1 || d_model < 1 || d_ff < 1 || vocab < 6 || max_seq < 2)
      throw ConfigError("model dimensions out of range");
    if (d_model % heads != 0)
      throw ConfigError("d_model must be divisible by heads");
  }
  nlohmann::json to_json() const {
    return {{"layers", layers},   {"heads", heads}, {"d_model", d_model},
            {"d_ff", d_ff},       {"vocab", vocab}, {"max_seq", max_seq}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    c.validate();
    return c;
  }
  bool operator==(const ModelConfig&) const = default;
};

struct AdapterConfig {
  bool enabled = false;
  int rank = 16;
  double alpha = 32.0;

  void validate() const {
    if (enabled && rank < 1) throw ConfigError("adapter rank must be >= 1");
    if (enabled && alpha <= 0) throw ConfigError("adapter alpha must be > 0");
  }
  double scale() const { return enabled ? alpha / rank : 0.0; }
  nlohmann::json to_json() const {
    return {{"enabled", enabled}, {"rank", rank}, {"alpha", alpha}};
  }
  static AdapterConfig from_json(const nlohmann::json& j) {
    AdapterConfig a;
    a.enabled = j.at("enabled").get<bool>();
    a.rank = j.at("rank").get<int>();
    a.alpha = j.at("alpha").get<double>();
    a.validate();
    return a;
  }
  bool operator==(const AdapterConfig&) const = default;
};

inline constexpr double kLnEps = 1e-5;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct AdapterPair {
  Mat<S> in;   // d_in x r
  Mat<S> out;  // r x d_out
};

template <typename S>
struct LayerParams {
  Mat<S> ln1_g, ln1_b;  // 1 x d
  Mat<S> wq, wk, wv, wo;
  Mat<S> ln2_g, ln2_b;
  Mat<S> w1, b1;  // d x d_ff, 1 x d_ff
  Mat<S> w2, b2;  // d_ff x d, 1 x d
  AdapterPair<S> w1_lora, w2_lora;
};

template <typename S>
struct Parameters {
  ModelConfig cfg;
  AdapterConfig acfg;
  Mat<S> tok_emb;  // V x d
  Mat<S> pos_emb;  // max_seq x d
  std::vector<LayerParams<S>> layers;
  Mat<S> final_ln_g, final_ln_b;
  Mat<S> head;  // d x V
};

template <typename S>
struct TensorRef {
  std::string name;
  Mat<S>* tensor;
  bool trainable;
};

// "attn.wq", "ffn.w1.lora_in", ... : the per-layer index stripped away.
inline std::string tensor_kind(const std::string& name) {
  if (name.rfind("layers.", 0) == 0) {
    auto dot = name.find('.', 7);
    return name.substr(dot + 1);
  }
  return name;
}

template <typename S>
std::vector<TensorRef<S>> tensor_refs(Parameters<S>& p) {
  const bool lora = p.acfg.enabled;
  // With adapters on, only adapter factors train.
  const bool base = !lora;
  std::vector<TensorRef<S>> out;
  out.push_back({"tok_emb", &p.tok_emb, base});
  out.push_back({"pos_emb", &p.pos_emb, base});
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& lp = p.layers[l];
    std::string prefix = "layers." + std::to_string(l) + ".";
    out.push_back({prefix + "ln1.g", &lp.ln1_g, base});
    out.push_back({prefix + "ln1.b", &lp.ln1_b, base});
    out.push_back({prefix + "attn.wq", &lp.wq, base});
    out.push_back({prefix + "attn.wk", &lp.wk, base});
    out.push_back({prefix + "attn.wv", &lp.wv, base});
    out.push_back({prefix + "attn.wo", &lp.wo, base});
    out.push_back({prefix + "ln2.g", &lp.ln2_g, base});
    out.push_back({prefix + "ln2.b", &lp.ln2_b, base});
    out.push_back({prefix + "ffn.w1", &lp.w1, base});
    out.push_back({prefix + "ffn.b1", &lp.b1, base});
    out.push_back({prefix + "ffn.w2", &lp.w2, base});
    out.push_back({prefix + "ffn.b2", &lp.b2, base});
    if (lora) {
      out.push_back({prefix + "ffn.w1.lora_in", &lp.w1_lora.in, true});
      out.push_back({prefix + "ffn.w1.lora_out", &lp.w1_lora.out, true});
      out.push_back({prefix + "ffn.w2.lora_in", &lp.w2_lora.in, true});
      out.push_back({prefix + "ffn.w2.lora_out", &lp.w2_lora.out, true});
    }
  }
  out.push_back({"final_ln.g", &p.final_ln_g, base});
  out.push_back({"final_ln.b", &p.final_ln_b, base});
  out.push_back({"head", &p.head, base});
  return out;
}

template <typename S>
Parameters<S> zeros_like(const Parameters<S>& p) {
  Parameters<S> z;
  z.cfg = p.cfg;
  z.acfg = p.acfg;
  z.tok_emb = Mat<S>::Zero(p.tok_emb.rows(), p.tok_emb.cols());
  z.pos_emb = Mat<S>::Zero(p.pos_emb.rows(), p.pos_emb.cols());
  z.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& a = p.layers[l];
    auto& b = z.layers[l];
    auto zero = [](const Mat<S>& m) { return Mat<S>::Zero(m.rows(), m.cols()).eval(); };
    b.ln1_g = zero(a.ln1_g);
    b.ln1_b = zero(a.ln1_b);
    b.wq = zero(a.wq);
    b.wk = zero(a.wk);
    b.wv = zero(a.wv);
    b.wo = zero(a.wo);
    b.ln2_g = zero(a.ln2_g);
    b.ln2_b = zero(a.ln2_b);
    b.w1 = zero(a.w1);
    b.b1 = zero(a.b1);
    b.w2 = zero(a.w2);
    b.b2 = zero(a.b2);
    if (p.acfg.enabled) {
      b.w1_lora.in = zero(a.w1_lora.in);
      b.w1_lora.out = zero(a.w1_lora.out);
      b.w2_lora.in = zero(a.w2_lora.in);
      b.w2_lora.out = zero(a.w2_lora.out);
    }
  }
  z.final_ln_g = Mat<S>::Zero(1, p.cfg.d_model);
  z.final_ln_b = Mat<S>::Zero(1, p.cfg.d_model);
  z.head = Mat<S>::Zero(p.head.rows(), p.head.cols());
  return z;
}

template <typename S>
std::int64_t param_count(const Parameters<S>& p, bool trainable_only) {
  std::int64_t n = 0;
  auto& mut = const_cast<Parameters<S>&>(p);
  for (const auto& ref : tensor_refs(mut)) {
    if (trainable_only && !ref.trainable) continue;
    n += ref.tensor->size();
  }
  return n;
}

template <typename S>
Parameters<S> init_params(const ModelConfig& cfg, const AdapterConfig& acfg,
                          std::uint64_t seed) {
  cfg.validate();
  acfg.validate();
  Parameters<S> p;
  p.cfg = cfg;
  p.acfg = acfg;
  p.tok_emb.resize(cfg.vocab, cfg.d_model);
  p.pos_emb.resize(cfg.max_seq, cfg.d_model);
  p.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& lp : p.layers) {
    lp.ln1_g.resize(1, cfg.d_model);
    lp.ln1_b.resize(1, cfg.d_model);
    lp.wq.resize(cfg.d_model, cfg.d_model);
    lp.wk.resize(cfg.d_model, cfg.d_model);
    lp.wv.resize(cfg.d_model, cfg.d_model);
    lp.wo.resize(cfg.d_model, cfg.d_model);
    lp.ln2_g.resize(1, cfg.d_model);
    lp.ln2_b.resize(1, cfg.d_model);
    lp.w1.resize(cfg.d_model, cfg.d_ff);
    lp.b1.resize(1, cfg.d_ff);
    lp.w2.resize(cfg.d_ff, cfg.d_model);
    lp.b2.resize(1, cfg.d_model);
    if (acfg.enabled) {
      lp.w1_lora.in.resize(cfg.d_model, acfg.rank);
      lp.w1_lora.out.resize(acfg.rank, cfg.d_ff);
      lp.w2_lora.in.resize(cfg.d_ff, acfg.rank);
      lp.w2_lora.out.resize(acfg.rank, cfg.d_model);
    }
  }
  p.final_ln_g.resize(1, cfg.d_model);
  p.final_ln_b.resize(1, cfg.d_model);
  p.head.resize(cfg.d_model, cfg.vocab);

  // Each tensor draws from its own stream keyed by name, so adding or
  // reordering tensors never shifts the others' values.
  for (const auto& ref : tensor_refs(p)) {
    Mat<S>& t = *ref.tensor;
    bool is_ln_gain = ref.name.size() >= 2 &&
                      ref.name.compare(ref.name.size() - 2, 2, ".g") == 0;
    bool is_bias = (ref.name.size() >= 2 &&
                    ref.name.compare(ref.name.size() - 2, 2, ".b") == 0) ||
                   ref.name.find(".b1") != std::string::npos ||
                   ref.name.find(".b2") != std::string::npos;
    bool is_lora_out = ref.name.find("lora_out") != std::string::npos;
    if (is_ln_gain) {
      t.setOnes();
      continue;
    }
    if (is_bias || is_lora_out) {
      t.setZero();
      continue;
    }
    // Embedding rows feed the residual stream of width d_model; matmul
    // weights see their own row count as fan-in.
    double fan_in = (ref.name == "tok_emb" || ref.name == "pos_emb")
                        ? static_cast<double>(cfg.d_model)
                        : static_cast<double>(t.rows());
    double s = 1.0 / std::sqrt(fan_in);
    Rng rng(mix64(seed, byte_hash(ref.name)));
    for (Eigen::Index c = 0; c < t.cols(); ++c)
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        t(r, c) = static_cast<S>(rng.uniform(-s, s));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward with trace.
// ---------------------------------------------------------------------------

template <typename S>
struct LayerTrace {
  Mat<S> x_in;                 // L x d, block input
  Vec<S> ln1_mean, ln1_inv;    // per-position stats
  Mat<S> ln1_out;
  Mat<S> q, k, v;              // L x d
  std::vector<Mat<S>> att;     // per head, L x L row-causal softmax
  Mat<S> ctx;                  // L x d
  Mat<S> x_mid;                // after attention residual
  Vec<S> ln2_mean, ln2_inv;
  Mat<S> ln2_out;
  Mat<S> xp1;                  // L x r (adapter intermediate), empty if off
  Mat<S> h1;                   // L x d_ff, pre-GELU
  Mat<S> gelu_out;
  Mat<S> xp2;                  // L x r
};

template <typename S>
struct ForwardTrace {
  std::vector<int> tokens;
  Mat<S> x0;
  std::vector<LayerTrace<S>> layers;
  Mat<S> x_last;
  Vec<S> lnf_mean, lnf_inv;
  Mat<S> xf;
  Mat<S> logits;
};

namespace detail {

template <typename S>
void layer_norm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, Mat<S>& out,
                Vec<S>& mean, Vec<S>& inv) {
  const Eigen::Index L = x.rows(), d = x.cols();
  out.resize(L, d);
  mean.resize(L);
  inv.resize(L);
  for (Eigen::Index i = 0; i < L; ++i) {
    S mu = x.row(i).mean();
    S var = (x.row(i).array() - mu).square().mean();
    S iv = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
    mean(i) = mu;
    inv(i) = iv;
    out.row(i) =
        ((x.row(i).array() - mu) * iv * g.array()).matrix() + b;
  }
}

// dy -> dx for the layer norm above; accumulates dg/db when wanted.
template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& x, const Mat<S>& g, const Vec<S>& mean,
                           const Vec<S>& inv, const Mat<S>& dy, Mat<S>* dg,
                           Mat<S>* db) {
  const Eigen::Index L = x.rows(), d = x.cols();
  Mat<S> dx(L, d);
  for (Eigen::Index i = 0; i < L; ++i) {
    auto xhat = ((x.row(i).array() - mean(i)) * inv(i)).eval();
    auto dyh = (dy.row(i).array() * g.array()).eval();
    if (dg) dg->array() += dy.row(i).array() * xhat;
    if (db) db->array() += dy.row(i).array();
    S m1 = dyh.mean();
    S m2 = (dyh * xhat).mean();
    dx.row(i) = ((dyh - m1 - xhat * m2) * inv(i)).matrix();
  }
  return dx;
}

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <typename S>
S gelu_scalar(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * static_cast<S>(kInvSqrt2)));
}

template <typename S>
S gelu_grad_scalar(S x) {
  S phi = std::exp(S(-0.5) * x * x) * static_cast<S>(kInvSqrt2Pi);
  return S(0.5) * (S(1) + std::erf(x * static_cast<S>(kInvSqrt2))) + x * phi;
}

// Row-stable softmax over the causal prefix [0, i] of each row.
template <typename S>
void causal_softmax_rows(Mat<S>& scores) {
  const Eigen::Index L = scores.rows();
  for (Eigen::Index i = 0; i < L; ++i) {
    S mx = scores(i, 0);
    for (Eigen::Index j = 1; j <= i; ++j) mx = std::max(mx, scores(i, j));
    S sum = 0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      scores(i, j) = std::exp(scores(i, j) - mx);
      sum += scores(i, j);
    }
    for (Eigen::Index j = 0; j <= i; ++j) scores(i, j) /= sum;
    for (Eigen::Index j = i + 1; j < L; ++j) scores(i, j) = 0;
  }
}

inline void check_tokens(const ModelConfig& cfg, const std::vector<int>& tokens) {
  if (tokens.empty()) throw DataError("forward requires >= 1 token");
  if (static_cast<int>(tokens.size()) > cfg.max_seq)
    throw DataError("sequence length " + std::to_string(tokens.size()) +
                    " exceeds max_seq " + std::to_string(cfg.max_seq));
  for (int t : tokens)
    if (t < 0 || t >= cfg.vocab)
      throw DataError("token id " + std::to_string(t) +
                      " outside vocabulary of size " +
                      std::to_string(cfg.vocab));
}

}  // namespace detail

// FFN with optional low-rank delta; stashes the adapter intermediate.
template <typename S>
void ffn_matmul(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b,
                const AdapterPair<S>& lora, double scale, Mat<S>& out,
                Mat<S>& xp) {
  out.noalias() = x * w;
  if (scale != 0.0) {
    xp.noalias() = x * lora.in;
    out.noalias() += static_cast<S>(scale) * (xp * lora.out);
  } else {
    xp.resize(0, 0);
  }
  out.rowwise() += b.row(0);
}

template <typename S>
Mat<S> forward(const Parameters<S>& p, const std::vector<int>& tokens,
               ForwardTrace<S>* trace = nullptr) {
  detail::check_tokens(p.cfg, tokens);
  const Eigen::Index L = static_cast<Eigen::Index>(tokens.size());
  const int d = p.cfg.d_model;
  const int H = p.cfg.heads;
  const int dh = d / H;
  const S att_scale = S(1) / std::sqrt(static_cast<S>(dh));
  const double lora_scale = p.acfg.scale();

  ForwardTrace<S> local;
  ForwardTrace<S>& tr = trace ? *trace : local;
  tr.tokens = tokens;
  tr.layers.assign(p.layers.size(), {});

  Mat<S> x(L, d);
  for (Eigen::Index i = 0; i < L; ++i)
    x.row(i) = p.tok_emb.row(tokens[static_cast<std::size_t>(i)]) +
               p.pos_emb.row(i);
  tr.x0 = x;

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& lp = p.layers[l];
    auto& lt = tr.layers[l];
    lt.x_in = x;
    detail::layer_norm(x, lp.ln1_g, lp.ln1_b, lt.ln1_out, lt.ln1_mean,
                       lt.ln1_inv);
    lt.q.noalias() = lt.ln1_out * lp.wq;
    lt.k.noalias() = lt.ln1_out * lp.wk;
    lt.v.noalias() = lt.ln1_out * lp.wv;
    lt.ctx.resize(L, d);
    lt.att.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      auto qh = lt.q.middleCols(h * dh, dh);
      auto kh = lt.k.middleCols(h * dh, dh);
      auto vh = lt.v.middleCols(h * dh, dh);
      Mat<S> scores = (qh * kh.transpose()) * att_scale;
      detail::causal_softmax_rows(scores);
      lt.att[static_cast<std::size_t>(h)] = scores;
      lt.ctx.middleCols(h * dh, dh).noalias() = scores * vh;
    }
    x.noalias() += lt.ctx * lp.wo;
    lt.x_mid = x;
    detail::layer_norm(x, lp.ln2_g, lp.ln2_b, lt.ln2_out, lt.ln2_mean,
                       lt.ln2_inv);
    ffn_matmul(lt.ln2_out, lp.w1, lp.b1, lp.w1_lora, lora_scale, lt.h1, lt.xp1);
    lt.gelu_out = lt.h1.unaryExpr([](S v) { return detail::gelu_scalar(v); });
    Mat<S> ffn_out;
    ffn_matmul(lt.gelu_out, lp.w2, lp.b2, lp.w2_lora, lora_scale, ffn_out,
               lt.xp2);
    x.noalias() += ffn_out;
  }

  tr.x_last = x;
  detail::layer_norm(x, p.final_ln_g, p.final_ln_b, tr.xf, tr.lnf_mean,
                     tr.lnf_inv);
  tr.logits.noalias() = tr.xf * p.head;
  return tr.logits;
}

// Exact reverse pass from dlogits. Frozen tensors keep zero gradients; the
// chain rule still flows through them to reach upstream trainables.
template <typename S>
Parameters<S> backward(const Parameters<S>& p, const ForwardTrace<S>& tr,
                       const Mat<S>& dlogits) {
  const Eigen::Index L = tr.logits.rows();
  const int d = p.cfg.d_model;
  const int H = p.cfg.heads;
  const int dh = d / H;
  const S att_scale = S(1) / std::sqrt(static_cast<S>(dh));
  const double lora_scale = p.acfg.scale();
  const bool base = !p.acfg.enabled;

  Parameters<S> g = zeros_like(p);

  if (base) g.head.noalias() = tr.xf.transpose() * dlogits;
  Mat<S> dxf = dlogits * p.head.transpose();
  Mat<S> dx = detail::layer_norm_backward(
      tr.x_last, p.final_ln_g, tr.lnf_mean, tr.lnf_inv, dxf,
      base ? &g.final_ln_g : nullptr, base ? &g.final_ln_b : nullptr);

  for (int li = static_cast<int>(p.layers.size()) - 1; li >= 0; --li) {
    const auto& lp = p.layers[static_cast<std::size_t>(li)];
    const auto& lt = tr.layers[static_cast<std::size_t>(li)];
    auto& lg = g.layers[static_cast<std::size_t>(li)];

    // FFN branch: x = x_mid + ffn(ln2(x_mid)).
    const Mat<S>& dffn = dx;
    Mat<S> dgelu = dffn * lp.w2.transpose();
    if (lora_scale != 0.0) {
      Mat<S> dxp2 = static_cast<S>(lora_scale) * (dffn * lp.w2_lora.out.transpose());
      dgelu.noalias() += dxp2 * lp.w2_lora.in.transpose();
      lg.w2_lora.out.noalias() =
          static_cast<S>(lora_scale) * (lt.xp2.transpose() * dffn);
      lg.w2_lora.in.noalias() = lt.gelu_out.transpose() * dxp2;
    }
    if (base) {
      lg.w2.noalias() = lt.gelu_out.transpose() * dffn;
      lg.b2 = dffn.colwise().sum();
    }
    Mat<S> dh1 =
        (dgelu.array() *
         lt.h1.unaryExpr([](S v) { return detail::gelu_grad_scalar(v); }).array())
            .matrix();
    Mat<S> dln2 = dh1 * lp.w1.transpose();
    if (lora_scale != 0.0) {
      Mat<S> dxp1 = static_cast<S>(lora_scale) * (dh1 * lp.w1_lora.out.transpose());
      dln2.noalias() += dxp1 * lp.w1_lora.in.transpose();
      lg.w1_lora.out.noalias() =
          static_cast<S>(lora_scale) * (lt.xp1.transpose() * dh1);
      lg.w1_lora.in.noalias() = lt.ln2_out.transpose() * dxp1;
    }
    if (base) {
      lg.w1.noalias() = lt.ln2_out.transpose() * dh1;
      lg.b1 = dh1.colwise().sum();
    }
    Mat<S> dx_mid =
        dx + detail::layer_norm_backward(lt.x_mid, lp.ln2_g, lt.ln2_mean,
                                         lt.ln2_inv, dln2,
                                         base ? &lg.ln2_g : nullptr,
                                         base ? &lg.ln2_b : nullptr);

    // Attention branch: x_mid = x_in + attn(ln1(x_in)).
    const Mat<S>& dattn = dx_mid;
    if (base) lg.wo.noalias() = lt.ctx.transpose() * dattn;
    Mat<S> dctx = dattn * lp.wo.transpose();
    Mat<S> dq(L, d), dk(L, d), dv(L, d);
    for (int h = 0; h < H; ++h) {
      const Mat<S>& A = lt.att[static_cast<std::size_t>(h)];
      auto vh = lt.v.middleCols(h * dh, dh);
      auto qh = lt.q.middleCols(h * dh, dh);
      auto kh = lt.k.middleCols(h * dh, dh);
      auto dctx_h = dctx.middleCols(h * dh, dh);
      Mat<S> dA = dctx_h * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() = A.transpose() * dctx_h;
      // Softmax rows over the causal prefix.
      Mat<S> dS = Mat<S>::Zero(L, L);
      for (Eigen::Index i = 0; i < L; ++i) {
        S inner = 0;
        for (Eigen::Index j = 0; j <= i; ++j) inner += A(i, j) * dA(i, j);
        for (Eigen::Index j = 0; j <= i; ++j)
          dS(i, j) = A(i, j) * (dA(i, j) - inner);
      }
      dq.middleCols(h * dh, dh).noalias() = (dS * kh) * att_scale;
      dk.middleCols(h * dh, dh).noalias() = (dS.transpose() * qh) * att_scale;
    }
    if (base) {
      lg.wq.noalias() = lt.ln1_out.transpose() * dq;
      lg.wk.noalias() = lt.ln1_out.transpose() * dk;
      lg.wv.noalias() = lt.ln1_out.transpose() * dv;
    }
    Mat<S> dln1 = dq * lp.wq.transpose() + dk * lp.wk.transpose() +
                  dv * lp.wv.transpose();
    dx = dx_mid + detail::layer_norm_backward(lt.x_in, lp.ln1_g, lt.ln1_mean,
                                              lt.ln1_inv, dln1,
                                              base ? &lg.ln1_g : nullptr,
                                              base ? &lg.ln1_b : nullptr);
  }

  if (base) {
    for (Eigen::Index i = 0; i < L; ++i) {
      g.tok_emb.row(tr.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
      g.pos_emb.row(i) += dx.row(i);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Losses, log-probabilities, sampling.
// ---------------------------------------------------------------------------

using Mask = std::vector<std::uint8_t>;

inline void check_mask(const std::vector<int>& tokens, const Mask& mask) {
  if (mask.size() != tokens.size())
    throw DataError("mask length must equal token length");
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      if (i == 0)
        throw DataError("position 0 has no preceding context to predict it");
      ++n;
    }
  }
  if (n == 0) throw DataError("loss mask selects no positions");
}

template <typename S>
Vec<S> log_softmax_row(const Eigen::Matrix<S, 1, Eigen::Dynamic>& row) {
  S mx = row.maxCoeff();
  Vec<S> shifted = (row.array() - mx).transpose();
  S lse = std::log(shifted.array().exp().sum());
  return (shifted.array() - lse).matrix();
}

template <typename S>
struct LossResult {
  S loss = 0;
  double token_accuracy = 0;
};

template <typename S>
int argmax_lowest(const Eigen::Matrix<S, 1, Eigen::Dynamic>& row) {
  int best = 0;
  for (int j = 1; j < row.cols(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

// Mean negative log-likelihood over masked positions; token i is predicted
// from logits row i-1.
template <typename S>
LossResult<S> loss_from_logits(const Mat<S>& logits,
                               const std::vector<int>& tokens, const Mask& mask,
                               Mat<S>* dlogits = nullptr) {
  check_mask(tokens, mask);
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  if (dlogits) *dlogits = Mat<S>::Zero(logits.rows(), logits.cols());
  S total = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!mask[i]) continue;
    Eigen::Matrix<S, 1, Eigen::Dynamic> row = logits.row(static_cast<Eigen::Index>(i - 1));
    Vec<S> lsm = log_softmax_row<S>(row);
    total -= lsm(tokens[i]);
    if (argmax_lowest<S>(row) == tokens[i]) ++hits;
    if (dlogits) {
      // d(-log p_t)/dlogits = softmax - onehot, averaged over masked count.
      Vec<S> probs = lsm.array().exp();
      dlogits->row(static_cast<Eigen::Index>(i - 1)) +=
          probs.transpose() / static_cast<S>(n);
      (*dlogits)(static_cast<Eigen::Index>(i - 1), tokens[i]) -=
          S(1) / static_cast<S>(n);
    }
  }
  LossResult<S> out;
  out.loss = total / static_cast<S>(n);
  out.token_accuracy = static_cast<double>(hits) / static_cast<double>(n);
  return out;
}

template <typename S>
LossResult<S> loss_ce(const Parameters<S>& p, const std::vector<int>& tokens,
                      const Mask& mask) {
  Mat<S> logits = forward(p, tokens);
  return loss_from_logits<S>(logits, tokens, mask);
}

template <typename S>
struct LossGrad {
  S loss = 0;
  double token_accuracy = 0;
  Parameters<S> grads;
};

template <typename S>
LossGrad<S> loss_ce_grad(const Parameters<S>& p, const std::vector<int>& tokens,
                         const Mask& mask) {
  ForwardTrace<S> tr;
  forward(p, tokens, &tr);
  Mat<S> dlogits;
  auto lr = loss_from_logits<S>(tr.logits, tokens, mask, &dlogits);
  if (!std::isfinite(static_cast<double>(lr.loss)))
    throw StateError("non-finite loss");
  LossGrad<S> out;
  out.loss = lr.loss;
  out.token_accuracy = lr.token_accuracy;
  out.grads = backward(p, tr, dlogits);
  return out;
}

// log softmax(logits[i-1])[tokens[i]] at masked positions, 0 elsewhere.
template <typename S>
std::vector<S> token_logprobs(const Parameters<S>& p,
                              const std::vector<int>& tokens, const Mask& mask) {
  check_mask(tokens, mask);
  Mat<S> logits = forward(p, tokens);
  std::vector<S> out(tokens.size(), S(0));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!mask[i]) continue;
    Eigen::Matrix<S, 1, Eigen::Dynamic> row = logits.row(static_cast<Eigen::Index>(i - 1));
    out[i] = log_softmax_row<S>(row)(tokens[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Incremental decoding.
// ---------------------------------------------------------------------------

template <typename S>
struct DecodeCache {
  // Per layer, rows 0..len-1 hold keys/values of consumed positions.
  std::vector<Mat<S>> k, v;
  Eigen::Index len = 0;

  explicit DecodeCache(const Parameters<S>& p) {
    k.assign(p.layers.size(), Mat<S>(p.cfg.max_seq, p.cfg.d_model));
    v.assign(p.layers.size(), Mat<S>(p.cfg.max_seq, p.cfg.d_model));
  }
};

// Feeds one token at the cache's current position; returns that position's
// logits row. Equivalent to the matching row of a full forward.
template <typename S>
Eigen::Matrix<S, 1, Eigen::Dynamic> decode_step(const Parameters<S>& p,
                                                DecodeCache<S>& cache,
                                                int token) {
  if (token < 0 || token >= p.cfg.vocab)
    throw DataError("token id " + std::to_string(token) + " outside vocabulary");
  if (cache.len >= p.cfg.max_seq) throw StateError("decode past max_seq");
  const int d = p.cfg.d_model;
  const int H = p.cfg.heads;
  const int dh = d / H;
  const S att_scale = S(1) / std::sqrt(static_cast<S>(dh));
  const double lora_scale = p.acfg.scale();
  const Eigen::Index pos = cache.len;

  using RowV = Eigen::Matrix<S, 1, Eigen::Dynamic>;
  RowV x = p.tok_emb.row(token) + p.pos_emb.row(pos);
  auto ln_row = [&](const RowV& r, const Mat<S>& gg, const Mat<S>& bb) -> RowV {
    S mu = r.mean();
    S var = (r.array() - mu).square().mean();
    S iv = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
    return (((r.array() - mu) * iv) * gg.array()).matrix() + bb;
  };

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& lp = p.layers[l];
    RowV h = ln_row(x, lp.ln1_g, lp.ln1_b);
    RowV q = h * lp.wq;
    cache.k[l].row(pos) = h * lp.wk;
    cache.v[l].row(pos) = h * lp.wv;
    RowV ctx(d);
    for (int hd = 0; hd < H; ++hd) {
      auto kh = cache.k[l].middleCols(hd * dh, dh).topRows(pos + 1);
      auto vh = cache.v[l].middleCols(hd * dh, dh).topRows(pos + 1);
      auto qh = q.middleCols(hd * dh, dh);
      Vec<S> scores = (kh * qh.transpose()) * att_scale;
      S mx = scores.maxCoeff();
      Vec<S> w = (scores.array() - mx).exp();
      w /= w.sum();
      ctx.middleCols(hd * dh, dh).noalias() = w.transpose() * vh;
    }
    x.noalias() += ctx * lp.wo;
    RowV h2 = ln_row(x, lp.ln2_g, lp.ln2_b);
    RowV a1 = h2 * lp.w1;
    if (lora_scale != 0.0)
      a1.noalias() += static_cast<S>(lora_scale) * ((h2 * lp.w1_lora.in) * lp.w1_lora.out);
    a1 += lp.b1;
    RowV act = a1.unaryExpr([](S vv) { return detail::gelu_scalar(vv); });
    RowV a2 = act * lp.w2;
    if (lora_scale != 0.0)
      a2.noalias() += static_cast<S>(lora_scale) * ((act * lp.w2_lora.in) * lp.w2_lora.out);
    a2 += lp.b2;
    x += a2;
  }
  cache.len = pos + 1;
  RowV xf = ln_row(x, p.final_ln_g, p.final_ln_b);
  return xf * p.head;
}

struct SampleOptions {
  bool greedy = true;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  int max_new = 64;
};

// Completion tokens only; the terminating EOS (if reached) is not included.
template <typename S>
std::vector<int> sample(const Parameters<S>& p, const std::vector<int>& prompt,
                        const SampleOptions& opts) {
  if (prompt.empty()) throw DataError("sampling requires a non-empty prompt");
  if (static_cast<int>(prompt.size()) + opts.max_new > p.cfg.max_seq)
    throw ConfigError("prompt length + max_new exceeds max_seq");
  if (!opts.greedy && opts.temperature <= 0)
    throw ConfigError("temperature must be > 0");

  DecodeCache<S> cache(p);
  Eigen::Matrix<S, 1, Eigen::Dynamic> logits;
  for (int t : prompt) logits = decode_step(p, cache, t);

  Rng rng(opts.seed);
  std::vector<int> completion;
  for (int step = 0; step < opts.max_new; ++step) {
    int next;
    if (opts.greedy) {
      next = argmax_lowest<S>(logits);
    } else {
      Vec<S> lsm = log_softmax_row<S>(
          (logits / static_cast<S>(opts.temperature)).eval());
      double u = rng.uniform01();
      double acc = 0;
      next = p.cfg.vocab - 1;
      for (int j = 0; j < p.cfg.vocab; ++j) {
        acc += std::exp(static_cast<double>(lsm(j)));
        if (u < acc) {
          next = j;
          break;
        }
      }
    }
    if (next == tokenizer::kEos) break;
    completion.push_back(next);
    if (step + 1 < opts.max_new) logits = decode_step(p, cache, next);
  }
  return completion;
}

}  // namespace cycleform::model
