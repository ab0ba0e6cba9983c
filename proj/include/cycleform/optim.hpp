#pragma once
// AdamW with bias correction and decoupled weight decay, applied only to
// trainable tensors. Moments are kept per trainable tensor, aligned by name,
// so optimizer state serializes alongside model tensors in checkpoints.

#include <cmath>
#include <string>
#include <vector>

#include "cycleform/common.hpp"
#include "cycleform/model.hpp"

namespace cycleform::optim {

template <typename S>
struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;  // completed updates
  std::vector<std::string> names;
  std::vector<model::Mat<S>> m, v;

  static AdamW init(model::Parameters<S>& params) {
    AdamW st;
    for (const auto& ref : model::tensor_refs(params)) {
      if (!ref.trainable) continue;
      st.names.push_back(ref.name);
      st.m.push_back(model::Mat<S>::Zero(ref.tensor->rows(), ref.tensor->cols()));
      st.v.push_back(model::Mat<S>::Zero(ref.tensor->rows(), ref.tensor->cols()));
    }
    return st;
  }

  // grads is a same-shaped parameter struct (zeros at frozen tensors).
  void apply(model::Parameters<S>& params, const model::Parameters<S>& grads,
             double lr, double weight_decay) {
    auto refs = model::tensor_refs(params);
    auto& gmut = const_cast<model::Parameters<S>&>(grads);
    auto grefs = model::tensor_refs(gmut);
    ++step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    std::size_t k = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (!refs[i].trainable) continue;
      if (k >= names.size() || names[k] != refs[i].name)
        throw StateError("optimizer state does not match trainable tensors");
      const model::Mat<S>& g = *grefs[i].tensor;
      if (!g.allFinite()) throw StateError("non-finite gradient at " + refs[i].name);
      model::Mat<S>& t = *refs[i].tensor;
      m[k] = static_cast<S>(beta1) * m[k] + static_cast<S>(1.0 - beta1) * g;
      v[k] = (static_cast<S>(beta2) * v[k].array() +
              static_cast<S>(1.0 - beta2) * g.array().square())
                 .matrix();
      auto mhat = (m[k].array() / static_cast<S>(bc1)).eval();
      auto vhat = (v[k].array() / static_cast<S>(bc2)).eval();
      t.array() -= static_cast<S>(lr) *
                   (mhat / (vhat.sqrt() + static_cast<S>(eps)) +
                    static_cast<S>(weight_decay) * t.array());
      ++k;
    }
    if (k != names.size())
      throw StateError("optimizer state covers tensors the model lacks");
  }
};

}  // namespace cycleform::optim
