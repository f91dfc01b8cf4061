#pragma once

#include <cmath>

#include "sqtk/nn/graph.hpp"

namespace sqtk::nn {

// AdamW with decoupled weight decay.
template <class S>
struct AdamW {
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  S weight_decay = S(1e-4);
  long t = 0;

  void step(ParameterStore<S>& params, S lr) {
    ++t;
    S bc1 = S(1) - std::pow(beta1, static_cast<S>(t));
    S bc2 = S(1) - std::pow(beta2, static_cast<S>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter<S>& p = params[i];
      if (p.adam_m.size() == 0) {
        p.adam_m = Mat<S>::Zero(p.value.rows(), p.value.cols());
        p.adam_v = Mat<S>::Zero(p.value.rows(), p.value.cols());
      }
      p.adam_m = beta1 * p.adam_m + (S(1) - beta1) * p.grad;
      p.adam_v = beta2 * p.adam_v.array() + (S(1) - beta2) * p.grad.array().square();
      Mat<S> mhat = p.adam_m / bc1;
      Mat<S> vhat = p.adam_v / bc2;
      p.value.array() -= lr * (mhat.array() / (vhat.array().sqrt() + eps) +
                               weight_decay * p.value.array());
    }
  }
};

// Scales gradients so their global L2 norm is at most max_norm. Returns the
// pre-clip norm.
template <class S>
double clip_grad_norm(ParameterStore<S>& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    sq += static_cast<double>(params[i].grad.squaredNorm());
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    S scale = static_cast<S>(max_norm / norm);
    for (std::size_t i = 0; i < params.size(); ++i) params[i].grad *= scale;
  }
  return norm;
}

}  // namespace sqtk::nn
