#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sqtk/common.hpp"

namespace sqtk::nn {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrtHalf = 0.70710678118654752440;

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct Parameter {
  std::string name;
  Mat<S> value;
  Mat<S> grad;    // accumulated across backward passes until zeroed
  Mat<S> adam_m;  // optimizer state, lazily sized
  Mat<S> adam_v;
};

// Named parameter registry. Creation order is the canonical order used by the
// optimizer and the checkpoint format.
template <class S>
class ParameterStore {
 public:
  Parameter<S>& create(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw ContractViolation("duplicate parameter: " + name);
    auto p = std::make_unique<Parameter<S>>();
    p->name = name;
    p->value = Mat<S>::Zero(rows, cols);
    p->grad = Mat<S>::Zero(rows, cols);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("unknown parameter: " + name);
    return *params_[it->second];
  }
  const Parameter<S>& at(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
  std::map<std::string, std::size_t> index_;
};

using Var = int;

// Reverse-mode tape over dense row-major matrices. One Graph per forward
// pass; backward() accumulates parameter gradients into the ParameterStore.
template <class S>
class Graph {
 public:
  Var leaf(Mat<S> v) { return push(std::move(v), false, nullptr); }

  Var param(Parameter<S>& p) {
    Var v = push(p.value, true, nullptr);
    nodes_[v].param = &p;
    return v;
  }

  const Mat<S>& value(Var v) const { return nodes_[v].value; }
  bool needs_grad(Var v) const { return nodes_[v].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // ---- elementwise / broadcast ----

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Var out = push(value(a) + value(b), needs_grad(a) || needs_grad(b),
                   make_back([a, b](Graph& g, const Mat<S>& gr) {
                     g.accum(a, gr);
                     g.accum(b, gr);
                   }));
    return out;
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    return push(value(a) - value(b), needs_grad(a) || needs_grad(b),
                make_back([a, b](Graph& g, const Mat<S>& gr) {
                  g.accum(a, gr);
                  g.accum(b, -gr);
                }));
  }

  Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    return push(value(a).cwiseProduct(value(b)), needs_grad(a) || needs_grad(b),
                make_back([a, b](Graph& g, const Mat<S>& gr) {
                  g.accum(a, gr.cwiseProduct(g.value(b)));
                  g.accum(b, gr.cwiseProduct(g.value(a)));
                }));
  }

  Var div(Var a, Var b) {
    check_same_shape(a, b, "div");
    return push(value(a).cwiseQuotient(value(b)), needs_grad(a) || needs_grad(b),
                make_back([a, b](Graph& g, const Mat<S>& gr) {
                  const Mat<S>& bv = g.value(b);
                  g.accum(a, gr.cwiseQuotient(bv));
                  if (g.needs_grad(b))
                    g.accum(b, -gr.cwiseProduct(g.value(a))
                                    .cwiseQuotient(bv.cwiseProduct(bv)));
                }));
  }

  Var scale(Var a, S c) {
    return push(value(a) * c, needs_grad(a),
                make_back([a, c](Graph& g, const Mat<S>& gr) { g.accum(a, gr * c); }));
  }

  Var add_const(Var a, S c) {
    return push(Mat<S>((value(a).array() + c).matrix()), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) { g.accum(a, gr); }));
  }

  // a + row vector broadcast over rows of a
  Var add_rowvec(Var a, Var r) {
    if (value(r).rows() != 1 || value(r).cols() != value(a).cols())
      throw ContractViolation("add_rowvec: shape mismatch");
    Mat<S> out = value(a);
    out.rowwise() += value(r).row(0);
    return push(std::move(out), needs_grad(a) || needs_grad(r),
                make_back([a, r](Graph& g, const Mat<S>& gr) {
                  g.accum(a, gr);
                  if (g.needs_grad(r)) g.accum(r, gr.colwise().sum());
                }));
  }

  Var relu(Var a) {
    return push(value(a).cwiseMax(S(0)), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) {
                  Mat<S> m = (g.value(a).array() > S(0)).template cast<S>().matrix();
                  g.accum(a, gr.cwiseProduct(m));
                }));
  }

  // exact gelu: 0.5 x (1 + erf(x / sqrt(2)))
  Var gelu(Var a) {
    const Mat<S>& x = value(a);
    Mat<S> out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      S v = x.data()[i];
      out.data()[i] = S(0.5) * v * (S(1) + std::erf(v * S(kSqrtHalf)));
    }
    return push(std::move(out), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) {
                  const Mat<S>& x = g.value(a);
                  Mat<S> dx(x.rows(), x.cols());
                  constexpr S inv_sqrt_2pi = S(0.3989422804014326779);
                  for (Eigen::Index i = 0; i < x.size(); ++i) {
                    S v = x.data()[i];
                    S phi = S(0.5) * (S(1) + std::erf(v * S(kSqrtHalf)));
                    dx.data()[i] = phi + v * inv_sqrt_2pi * std::exp(S(-0.5) * v * v);
                  }
                  g.accum(a, gr.cwiseProduct(dx));
                }));
  }

  Var sigmoid(Var a) {
    const Mat<S>& x = value(a);
    Mat<S> y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      y.data()[i] = stable_sigmoid(x.data()[i]);
    Var out = push(std::move(y), needs_grad(a), nullptr);
    if (needs_grad(a))
      nodes_[out].back = make_back([a, out](Graph& g, const Mat<S>& gr) {
        const Mat<S>& yv = g.value(out);
        g.accum(a, gr.cwiseProduct(yv.cwiseProduct(Mat<S>::Ones(yv.rows(), yv.cols()) - yv)));
      });
    return out;
  }

  // log(sigmoid(x)), stable
  Var logsigmoid(Var a) {
    const Mat<S>& x = value(a);
    Mat<S> y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      S v = x.data()[i];
      y.data()[i] = v < S(0) ? v - std::log1p(std::exp(v)) : -std::log1p(std::exp(-v));
    }
    return push(std::move(y), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) {
                  const Mat<S>& x = g.value(a);
                  Mat<S> d(x.rows(), x.cols());
                  for (Eigen::Index i = 0; i < x.size(); ++i)
                    d.data()[i] = stable_sigmoid(-x.data()[i]);  // 1 - sigma(x)
                  g.accum(a, gr.cwiseProduct(d));
                }));
  }

  Var sin_op(Var a) {
    return push(Mat<S>(value(a).array().sin().matrix()), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) {
                  g.accum(a, gr.cwiseProduct(Mat<S>(g.value(a).array().cos().matrix())));
                }));
  }

  Var cos_op(Var a) {
    return push(Mat<S>(value(a).array().cos().matrix()), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) {
                  g.accum(a, Mat<S>(-gr.cwiseProduct(Mat<S>(g.value(a).array().sin().matrix()))));
                }));
  }

  // a^p for a >= 0
  Var pow_const(Var a, S p) {
    return push(Mat<S>(value(a).array().pow(p).matrix()), needs_grad(a),
                make_back([a, p](Graph& g, const Mat<S>& gr) {
                  g.accum(a, gr.cwiseProduct(
                                 Mat<S>((p * g.value(a).array().pow(p - S(1))).matrix())));
                }));
  }

  Var abs_op(Var a) {
    return push(value(a).cwiseAbs(), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) {
                  g.accum(a, gr.cwiseProduct(Mat<S>(g.value(a).array().sign().matrix())));
                }));
  }

  // elementwise max; ties route gradient to a
  Var max_elem(Var a, Var b) {
    check_same_shape(a, b, "max_elem");
    return push(value(a).cwiseMax(value(b)), needs_grad(a) || needs_grad(b),
                make_back([a, b](Graph& g, const Mat<S>& gr) {
                  Mat<S> take_a =
                      (g.value(a).array() >= g.value(b).array()).template cast<S>().matrix();
                  if (g.needs_grad(a)) g.accum(a, gr.cwiseProduct(take_a));
                  if (g.needs_grad(b))
                    g.accum(b, gr.cwiseProduct(Mat<S>((S(1) - take_a.array()).matrix())));
                }));
  }

  Var min_elem(Var a, Var b) {
    check_same_shape(a, b, "min_elem");
    return push(value(a).cwiseMin(value(b)), needs_grad(a) || needs_grad(b),
                make_back([a, b](Graph& g, const Mat<S>& gr) {
                  Mat<S> take_a =
                      (g.value(a).array() <= g.value(b).array()).template cast<S>().matrix();
                  if (g.needs_grad(a)) g.accum(a, gr.cwiseProduct(take_a));
                  if (g.needs_grad(b))
                    g.accum(b, gr.cwiseProduct(Mat<S>((S(1) - take_a.array()).matrix())));
                }));
  }

  // ---- matmul ----

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
    const Mat<S>& A = value(a);
    const Mat<S>& B = value(b);
    Mat<S> out;
    if (!trans_a && !trans_b)
      out.noalias() = A * B;
    else if (trans_a && !trans_b)
      out.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b)
      out.noalias() = A * B.transpose();
    else
      out.noalias() = A.transpose() * B.transpose();
    return push(std::move(out), needs_grad(a) || needs_grad(b),
                make_back([a, b, trans_a, trans_b](Graph& g, const Mat<S>& gr) {
                  const Mat<S>& A = g.value(a);
                  const Mat<S>& B = g.value(b);
                  if (g.needs_grad(a)) {
                    Mat<S> da;
                    if (!trans_a && !trans_b)
                      da.noalias() = gr * B.transpose();
                    else if (trans_a && !trans_b)
                      da.noalias() = B * gr.transpose();
                    else if (!trans_a && trans_b)
                      da.noalias() = gr * B;
                    else
                      da.noalias() = B.transpose() * gr.transpose();
                    g.accum(a, da);
                  }
                  if (g.needs_grad(b)) {
                    Mat<S> db;
                    if (!trans_a && !trans_b)
                      db.noalias() = A.transpose() * gr;
                    else if (trans_a && !trans_b)
                      db.noalias() = A * gr;
                    else if (!trans_a && trans_b)
                      db.noalias() = gr.transpose() * A;
                    else
                      db.noalias() = gr.transpose() * A.transpose();
                    g.accum(b, db);
                  }
                }));
  }

  // ---- reductions ----

  Var sum_all(Var a) {
    Mat<S> out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) {
                  const Mat<S>& av = g.value(a);
                  g.accum(a, Mat<S>::Constant(av.rows(), av.cols(), gr(0, 0)));
                }));
  }

  Var mean_rows(Var a) {
    const Mat<S>& A = value(a);
    Mat<S> out = A.colwise().mean();  // 1 x C
    return push(std::move(out), needs_grad(a),
                make_back([a](Graph& g, const Mat<S>& gr) {
                  const Mat<S>& av = g.value(a);
                  S inv = S(1) / S(av.rows());
                  Mat<S> da(av.rows(), av.cols());
                  da.rowwise() = gr.row(0) * inv;
                  g.accum(a, da);
                }));
  }

  // ---- structure ----

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractViolation("concat_rows: empty");
    Eigen::Index cols = value(parts[0]).cols(), rows = 0;
    bool ng = false;
    for (Var p : parts) {
      if (value(p).cols() != cols) throw ContractViolation("concat_rows: col mismatch");
      rows += value(p).rows();
      ng = ng || needs_grad(p);
    }
    Mat<S> out(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      out.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    return push(std::move(out), ng, make_back([parts](Graph& g, const Mat<S>& gr) {
                  Eigen::Index r = 0;
                  for (Var p : parts) {
                    Eigen::Index n = g.value(p).rows();
                    if (g.needs_grad(p)) g.accum(p, gr.middleRows(r, n));
                    r += n;
                  }
                }));
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractViolation("concat_cols: empty");
    Eigen::Index rows = value(parts[0]).rows(), cols = 0;
    bool ng = false;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw ContractViolation("concat_cols: row mismatch");
      cols += value(p).cols();
      ng = ng || needs_grad(p);
    }
    Mat<S> out(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
      out.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    return push(std::move(out), ng, make_back([parts](Graph& g, const Mat<S>& gr) {
                  Eigen::Index c = 0;
                  for (Var p : parts) {
                    Eigen::Index n = g.value(p).cols();
                    if (g.needs_grad(p)) g.accum(p, gr.middleCols(c, n));
                    c += n;
                  }
                }));
  }

  Var slice_rows(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > value(a).rows())
      throw ContractViolation("slice_rows: out of range");
    return push(value(a).middleRows(start, count), needs_grad(a),
                make_back([a, start, count](Graph& g, const Mat<S>& gr) {
                  g.ensure_grad(a).middleRows(start, count) += gr;
                }));
  }

  Var slice_cols(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > value(a).cols())
      throw ContractViolation("slice_cols: out of range");
    return push(value(a).middleCols(start, count), needs_grad(a),
                make_back([a, start, count](Graph& g, const Mat<S>& gr) {
                  g.ensure_grad(a).middleCols(start, count) += gr;
                }));
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    const Mat<S>& A = value(a);
    Mat<S> out(static_cast<Eigen::Index>(idx.size()), A.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= A.rows())
        throw ContractViolation("gather_rows: index out of range");
      out.row(static_cast<Eigen::Index>(i)) = A.row(idx[i]);
    }
    return push(std::move(out), needs_grad(a),
                make_back([a, idx = std::move(idx)](Graph& g, const Mat<S>& gr) {
                  Mat<S>& da = g.ensure_grad(a);
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    da.row(idx[i]) += gr.row(static_cast<Eigen::Index>(i));
                }));
  }

  // ---- normalization / attention ----

  Var layernorm_rows(Var a, Var gamma, Var beta, S eps = S(1e-5)) {
    const Mat<S>& X = value(a);
    if (value(gamma).rows() != 1 || value(gamma).cols() != X.cols() ||
        value(beta).rows() != 1 || value(beta).cols() != X.cols())
      throw ContractViolation("layernorm_rows: gamma/beta must be 1 x cols");
    auto xhat = std::make_shared<Mat<S>>(X.rows(), X.cols());
    auto inv_std = std::make_shared<Mat<S>>(X.rows(), 1);
    Mat<S> out(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      S mean = X.row(i).mean();
      S var = (X.row(i).array() - mean).square().mean();
      S is = S(1) / std::sqrt(var + eps);
      (*inv_std)(i, 0) = is;
      xhat->row(i) = (X.row(i).array() - mean) * is;
      out.row(i) = xhat->row(i).cwiseProduct(value(gamma).row(0)) + value(beta).row(0);
    }
    return push(std::move(out), needs_grad(a) || needs_grad(gamma) || needs_grad(beta),
                make_back([a, gamma, beta, xhat, inv_std](Graph& g, const Mat<S>& gr) {
                  if (g.needs_grad(gamma))
                    g.accum(gamma, gr.cwiseProduct(*xhat).colwise().sum());
                  if (g.needs_grad(beta)) g.accum(beta, gr.colwise().sum());
                  if (!g.needs_grad(a)) return;
                  const Mat<S>& gam = g.value(gamma);
                  Mat<S> da(gr.rows(), gr.cols());
                  for (Eigen::Index i = 0; i < gr.rows(); ++i) {
                    Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat =
                        gr.row(i).cwiseProduct(gam.row(0));
                    S m1 = dxhat.mean();
                    S m2 = dxhat.cwiseProduct(xhat->row(i)).mean();
                    da.row(i) =
                        (((dxhat.array() - m1) - xhat->row(i).array() * m2) * (*inv_std)(i, 0))
                            .matrix();
                  }
                  g.accum(a, da);
                }));
  }

  // Row-wise softmax with a boolean mask; disallowed entries get exactly 0.
  // mask(i, j) != 0 means entry j participates in row i.
  Var softmax_rows_masked(Var a, std::shared_ptr<const MaskMatrix> mask) {
    const Mat<S>& X = value(a);
    if (mask && (mask->rows() != X.rows() || mask->cols() != X.cols()))
      throw ContractViolation("softmax_rows_masked: mask shape mismatch");
    Mat<S> out(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      S mx = std::numeric_limits<S>::lowest();
      for (Eigen::Index j = 0; j < X.cols(); ++j)
        if (!mask || (*mask)(i, j)) mx = std::max(mx, X(i, j));
      if (mx == std::numeric_limits<S>::lowest()) {
        out.row(i).setZero();
        continue;
      }
      S sum = S(0);
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (!mask || (*mask)(i, j)) {
          out(i, j) = std::exp(X(i, j) - mx);
          sum += out(i, j);
        } else {
          out(i, j) = S(0);
        }
      }
      out.row(i) /= sum;
    }
    Var o = push(std::move(out), needs_grad(a), nullptr);
    if (needs_grad(a))
      nodes_[o].back = make_back([a, o](Graph& g, const Mat<S>& gr) {
        const Mat<S>& p = g.value(o);
        Mat<S> da(p.rows(), p.cols());
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          S dot = gr.row(i).cwiseProduct(p.row(i)).sum();
          da.row(i) = p.row(i).cwiseProduct(
              Eigen::Matrix<S, 1, Eigen::Dynamic>((gr.row(i).array() - dot).matrix()));
        }
        g.accum(a, da);
      });
    return o;
  }

  // ---- convolution (im2col) ----

  // x: (H*W) x Cin raster-major rows; weight: (k*k*Cin) x Cout; bias 1 x Cout.
  Var conv2d(Var x, int H, int W, Var weight, Var bias, int k, int stride, int pad,
             int* out_h, int* out_w) {
    const Mat<S>& X = value(x);
    const int cin = static_cast<int>(X.cols());
    if (X.rows() != static_cast<Eigen::Index>(H) * W)
      throw ContractViolation("conv2d: input rows != H*W");
    if (value(weight).rows() != static_cast<Eigen::Index>(k) * k * cin)
      throw ContractViolation("conv2d: weight rows != k*k*Cin");
    const int h2 = (H + 2 * pad - k) / stride + 1;
    const int w2 = (W + 2 * pad - k) / stride + 1;
    if (h2 < 1 || w2 < 1) throw ContractViolation("conv2d: output would be empty");
    *out_h = h2;
    *out_w = w2;

    auto col = std::make_shared<Mat<S>>(static_cast<Eigen::Index>(h2) * w2,
                                        static_cast<Eigen::Index>(k) * k * cin);
    col->setZero();
    for (int oy = 0; oy < h2; ++oy)
      for (int ox = 0; ox < w2; ++ox) {
        Eigen::Index row = static_cast<Eigen::Index>(oy) * w2 + ox;
        for (int ky = 0; ky < k; ++ky) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < k; ++kx) {
            int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            col->block(row, static_cast<Eigen::Index>(ky * k + kx) * cin, 1, cin) =
                X.row(static_cast<Eigen::Index>(iy) * W + ix);
          }
        }
      }

    Mat<S> out = *col * value(weight);
    out.rowwise() += value(bias).row(0);
    bool ng = needs_grad(x) || needs_grad(weight) || needs_grad(bias);
    return push(std::move(out), ng,
                make_back([x, weight, bias, col, H, W, h2, w2, k, stride, pad,
                           cin](Graph& g, const Mat<S>& gr) {
                  if (g.needs_grad(weight)) g.accum(weight, col->transpose() * gr);
                  if (g.needs_grad(bias)) g.accum(bias, gr.colwise().sum());
                  if (!g.needs_grad(x)) return;
                  Mat<S> dcol = gr * g.value(weight).transpose();
                  Mat<S> dx = Mat<S>::Zero(static_cast<Eigen::Index>(H) * W, cin);
                  for (int oy = 0; oy < h2; ++oy)
                    for (int ox = 0; ox < w2; ++ox) {
                      Eigen::Index row = static_cast<Eigen::Index>(oy) * w2 + ox;
                      for (int ky = 0; ky < k; ++ky) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < k; ++kx) {
                          int ix = ox * stride + kx - pad;
                          if (ix < 0 || ix >= W) continue;
                          dx.row(static_cast<Eigen::Index>(iy) * W + ix) += dcol.block(
                              row, static_cast<Eigen::Index>(ky * k + kx) * cin, 1, cin);
                        }
                      }
                    }
                  g.accum(x, dx);
                }));
  }

  // Sine embedding of box coordinates: boxes n x 4 -> n x dim. Each coordinate
  // owns dim/4 channels filled with interleaved sin/cos at geometric
  // frequencies.
  Var box_sine_embed(Var boxes, int dim) {
    const Mat<S>& B = value(boxes);
    if (B.cols() != 4) throw ContractViolation("box_sine_embed: expected n x 4");
    if (dim % 8 != 0) throw ContractViolation("box_sine_embed: dim must be divisible by 8");
    const int per = dim / 4;      // channels per coordinate
    const int nf = per / 2;       // frequency count
    auto freqs = std::make_shared<std::vector<S>>(sine_frequencies(nf));
    Mat<S> out(B.rows(), dim);
    for (Eigen::Index i = 0; i < B.rows(); ++i)
      for (int c = 0; c < 4; ++c)
        for (int f = 0; f < nf; ++f) {
          S ang = B(i, c) * (*freqs)[f];
          out(i, c * per + 2 * f) = std::sin(ang);
          out(i, c * per + 2 * f + 1) = std::cos(ang);
        }
    return push(std::move(out), needs_grad(boxes),
                make_back([boxes, per, nf, freqs](Graph& g, const Mat<S>& gr) {
                  const Mat<S>& B = g.value(boxes);
                  Mat<S> db = Mat<S>::Zero(B.rows(), 4);
                  for (Eigen::Index i = 0; i < B.rows(); ++i)
                    for (int c = 0; c < 4; ++c)
                      for (int f = 0; f < nf; ++f) {
                        S w = (*freqs)[f];
                        S ang = B(i, c) * w;
                        db(i, c) += gr(i, c * per + 2 * f) * w * std::cos(ang) -
                                    gr(i, c * per + 2 * f + 1) * w * std::sin(ang);
                      }
                  g.accum(boxes, db);
                }));
  }

  static std::vector<S> sine_frequencies(int nf) {
    // geometric ladder from 2*pi to 32*pi
    std::vector<S> f(nf);
    for (int i = 0; i < nf; ++i) {
      double t = nf > 1 ? static_cast<double>(i) / (nf - 1) : 0.0;
      f[i] = static_cast<S>(2.0 * kPi * std::pow(16.0, t));
    }
    return f;
  }

  // ---- backward ----

  void backward(Var loss) {
    if (value(loss).rows() != 1 || value(loss).cols() != 1)
      throw ContractViolation("backward: loss must be scalar");
    if (!nodes_[loss].needs_grad) return;
    ensure_grad(loss)(0, 0) = S(1);
    for (int i = loss; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.back) n.back(*this, n.grad);
      if (n.param) n.param->grad += n.grad;
    }
  }

  Mat<S>& ensure_grad(Var v) {
    Node& n = nodes_[v];
    if (n.grad.size() == 0)
      n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void accum(Var v, const Mat<S>& g) {
    if (!nodes_[v].needs_grad) return;
    ensure_grad(v) += g;
  }

 private:
  using BackFn = std::function<void(Graph&, const Mat<S>&)>;

  struct Node {
    Mat<S> value;
    Mat<S> grad;
    BackFn back;
    Parameter<S>* param = nullptr;
    bool needs_grad = false;
  };

  static S stable_sigmoid(S x) {
    if (x >= S(0)) {
      S e = std::exp(-x);
      return S(1) / (S(1) + e);
    }
    S e = std::exp(x);
    return e / (S(1) + e);
  }

  template <class F>
  BackFn make_back(F&& f) {
    return BackFn(std::forward<F>(f));
  }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw ContractViolation(std::string(op) + ": shape mismatch");
  }

  Var push(Mat<S> v, bool needs, BackFn back) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs;
    n.back = needs ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace sqtk::nn
