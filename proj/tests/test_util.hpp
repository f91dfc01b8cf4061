#pragma once

#include <functional>

#include <doctest.h>

#include "sqtk/nn/graph.hpp"

namespace sqtk::test {

inline nn::Mat<double> random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  nn::Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = scale * rng.uniform(-1.0, 1.0);
  return m;
}

// Central-difference check of d(loss)/d(param) for every entry of every
// parameter in the store. `loss_fn` must be a pure function of the parameter
// values.
inline double max_grad_rel_error(
    nn::ParameterStore<double>& store,
    const std::function<nn::Var(nn::Graph<double>&)>& loss_fn, double h = 1e-5) {
  store.zero_grad();
  {
    nn::Graph<double> g;
    nn::Var loss = loss_fn(g);
    g.backward(loss);
  }
  auto eval = [&]() {
    nn::Graph<double> g;
    return g.value(loss_fn(g))(0, 0);
  };
  double worst = 0.0;
  for (std::size_t pi = 0; pi < store.size(); ++pi) {
    auto& p = store[pi];
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double saved = p.value.data()[i];
      p.value.data()[i] = saved + h;
      double f1 = eval();
      p.value.data()[i] = saved - h;
      double f0 = eval();
      p.value.data()[i] = saved;
      double fd = (f1 - f0) / (2.0 * h);
      double an = p.grad.data()[i];
      double rel = std::abs(an - fd) / std::max({1e-6, std::abs(an), std::abs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace sqtk::test
