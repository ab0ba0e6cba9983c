#pragma once
// Versioned binary checkpoint container: an 8-byte magic, a format version,
// a JSON metadata block (config echo, vocabulary, counters, RNG state), and
// an ordered list of named tensors stored as little-endian 64-bit floats in
// row-major order. Round trips are bit-exact regardless of host endianness;
// narrower scalar profiles widen to 64-bit on save and narrow on load.

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cycleform/common.hpp"
#include "cycleform/model.hpp"
#include "cycleform/tokenizer.hpp"

namespace cycleform::checkpoint {

inline constexpr char kMagic[8] = {'C', 'Y', 'C', 'L', 'E', 'F', 'R', 'M'};
inline constexpr std::uint32_t kVersion = 1;

struct Container {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

  const Eigen::MatrixXd& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw DataError("checkpoint is missing tensor '" + name + "'");
  }
  bool has_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return true;
    return false;
  }
};

void save_container(const std::string& path, const Container& c);
Container load_container(const std::string& path);

nlohmann::json vocab_to_json(const tokenizer::Vocab& vocab);
tokenizer::Vocab vocab_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Model-level helpers.
// ---------------------------------------------------------------------------

template <typename S>
void append_params(Container& c, const model::Parameters<S>& params,
                   const std::string& prefix = "") {
  auto& mut = const_cast<model::Parameters<S>&>(params);
  for (const auto& ref : model::tensor_refs(mut))
    c.tensors.emplace_back(prefix + ref.name,
                           ref.tensor->template cast<double>().eval());
}

template <typename S>
void read_params(const Container& c, model::Parameters<S>& params,
                 const std::string& prefix = "") {
  for (auto& ref : model::tensor_refs(params)) {
    const Eigen::MatrixXd& t = c.tensor(prefix + ref.name);
    if (t.rows() != ref.tensor->rows() || t.cols() != ref.tensor->cols())
      throw DataError("checkpoint tensor '" + prefix + ref.name +
                      "' has mismatched shape");
    *ref.tensor = t.cast<S>();
  }
}

template <typename S>
void save_model(const std::string& path, const model::Parameters<S>& params,
                const tokenizer::Vocab& vocab,
                nlohmann::json extra_meta = nlohmann::json::object()) {
  Container c;
  c.meta = std::move(extra_meta);
  c.meta["kind"] = c.meta.contains("kind") ? c.meta["kind"] : "model";
  c.meta["model_config"] = params.cfg.to_json();
  c.meta["adapter_config"] = params.acfg.to_json();
  c.meta["vocab"] = vocab_to_json(vocab);
  append_params(c, params);
  save_container(path, c);
}

template <typename S>
struct LoadedModel {
  model::Parameters<S> params;
  tokenizer::Vocab vocab;
  nlohmann::json meta;
};

template <typename S>
LoadedModel<S> load_model(const std::string& path) {
  Container c = load_container(path);
  LoadedModel<S> out;
  out.meta = c.meta;
  auto cfg = model::ModelConfig::from_json(c.meta.at("model_config"));
  auto acfg = model::AdapterConfig::from_json(c.meta.at("adapter_config"));
  out.params = model::init_params<S>(cfg, acfg, 0);
  read_params(c, out.params);
  out.vocab = vocab_from_json(c.meta.at("vocab"));
  return out;
}

// Refuses to load when the stored config echo differs from what the caller
// is resuming with.
template <typename S>
LoadedModel<S> load_model_expecting(const std::string& path,
                                    const model::ModelConfig& cfg,
                                    const model::AdapterConfig& acfg) {
  auto lm = load_model<S>(path);
  if (!(lm.params.cfg == cfg) || !(lm.params.acfg == acfg))
    throw StateError("checkpoint config echo does not match the requested "
                     "configuration: " +
                     lm.params.cfg.to_json().dump());
  return lm;
}

}  // namespace cycleform::checkpoint
