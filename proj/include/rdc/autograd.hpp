#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rdc/kernels.hpp"
#include "rdc/tensor.hpp"

// Reverse-mode autodiff over dense tensors. Each op builds a node whose
// backward closure pulls the node's gradient into its parents. Graphs are
// DAGs of shared_ptrs (parent links only, no cycles) and are discarded
// after the step.

namespace rdc {

template <typename T>
class Var {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void ensure_grad() {
      if (!grad_alloc) {
        grad = Tensor<T>::zeros(value.shape());
        grad_alloc = true;
      }
    }
    void accum_grad(const Tensor<T>& g) {
      ensure_grad();
      T* dst = grad.data();
      const T* src = g.data();
      for (int64_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
    }
  };
  using NodePtr = std::shared_ptr<Node>;

  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : n_(std::make_shared<Node>()) {
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
  }

  static Var make_op(Tensor<T> value, std::vector<Var> inputs,
                     std::function<void(Node&)> backward) {
    Var out(std::move(value));
    bool needs = false;
    for (const Var& v : inputs) {
      out.n_->parents.push_back(v.n_);
      needs = needs || v.n_->requires_grad;
    }
    out.n_->requires_grad = needs;
    if (needs) out.n_->backward = std::move(backward);
    return out;
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor<T>& value() const { return n_->value; }
  Tensor<T>& value() { return n_->value; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  const Tensor<T>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() {
    if (n_ && n_->grad_alloc) n_->grad.fill(T(0));
  }

  NodePtr node() const { return n_; }

  // Reverse sweep from a scalar output.
  void backward() const {
    if (n_->value.numel() != 1)
      throw invariant_error("backward() root must be scalar");
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({n_.get(), 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node* p = node->parents[idx++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        topo.push_back(node);
        stack.pop_back();
      }
    }
    n_->ensure_grad();
    n_->grad.fill(T(1));
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      Node* node = *it;
      if (node->backward && node->requires_grad) node->backward(*node);
    }
  }

 private:
  NodePtr n_;
};

namespace ops {

template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
  auto an = a.node(), bn = b.node();
  return Var<T>::make_op(std::move(out), {a, b},
                         [an, bn](typename Var<T>::Node& n) {
                           if (an->requires_grad) an->accum_grad(n.grad);
                           if (bn->requires_grad) bn->accum_grad(n.grad);
                         });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= pb[i];
  auto an = a.node(), bn = b.node();
  return Var<T>::make_op(
      std::move(out), {a, b}, [an, bn](typename Var<T>::Node& n) {
        if (an->requires_grad) an->accum_grad(n.grad);
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t i = 0; i < n.grad.numel(); ++i)
            bn->grad[i] -= n.grad[i];
        }
      });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  return Var<T>::make_op(
      std::move(out), {a, b}, [an, bn](typename Var<T>::Node& n) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (int64_t i = 0; i < n.grad.numel(); ++i)
            an->grad[i] += n.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t i = 0; i < n.grad.numel(); ++i)
            bn->grad[i] += n.grad[i] * an->value[i];
        }
      });
}

// y = k*x + m
template <typename T>
Var<T> affine(const Var<T>& a, double k, double m) {
  Tensor<T> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>(k * a.value()[i] + m);
  auto an = a.node();
  return Var<T>::make_op(std::move(out), {a},
                         [an, k](typename Var<T>::Node& n) {
                           an->ensure_grad();
                           for (int64_t i = 0; i < n.grad.numel(); ++i)
                             an->grad[i] += static_cast<T>(k) * n.grad[i];
                         });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return affine(a, -1.0, 0.0);
}

template <typename T, typename FwdF, typename DerivF>
Var<T> unary_op(const Var<T>& a, FwdF f, DerivF dfdx_from_xy) {
  Tensor<T> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(a.value()[i]);
  auto an = a.node();
  Tensor<T> saved = out;
  return Var<T>::make_op(
      std::move(out), {a},
      [an, saved, dfdx_from_xy](typename Var<T>::Node& n) {
        an->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
          an->grad[i] += n.grad[i] * dfdx_from_xy(an->value[i], saved[i]);
      });
}

template <typename T>
Var<T> exp_(const Var<T>& a) {
  return unary_op(
      a, [](T x) { return static_cast<T>(std::exp(x)); },
      [](T, T y) { return y; });
}

template <typename T>
Var<T> log_(const Var<T>& a) {
  return unary_op(
      a, [](T x) { return static_cast<T>(std::log(x)); },
      [](T x, T) { return static_cast<T>(1) / x; });
}

template <typename T>
Var<T> tanh_(const Var<T>& a) {
  return unary_op(
      a, [](T x) { return static_cast<T>(std::tanh(x)); },
      [](T, T y) { return static_cast<T>(1) - y * y; });
}

template <typename T>
Var<T> sigmoid_(const Var<T>& a) {
  return unary_op(
      a,
      [](T x) {
        return static_cast<T>(x >= 0 ? 1.0 / (1.0 + std::exp(-(double)x))
                                     : std::exp((double)x) /
                                           (1.0 + std::exp((double)x)));
      },
      [](T, T y) { return y * (static_cast<T>(1) - y); });
}

template <typename T>
Var<T> softplus_(const Var<T>& a) {
  return unary_op(
      a,
      [](T x) {
        double xd = x;
        return static_cast<T>(xd > 20 ? xd : std::log1p(std::exp(xd)));
      },
      [](T x, T) {
        double xd = x;
        return static_cast<T>(xd >= 0 ? 1.0 / (1.0 + std::exp(-xd))
                                      : std::exp(xd) / (1.0 + std::exp(xd)));
      });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, double slope = 0.2) {
  return unary_op(
      a,
      [slope](T x) { return x >= T(0) ? x : static_cast<T>(slope * x); },
      [slope](T x, T) {
        return x >= T(0) ? T(1) : static_cast<T>(slope);
      });
}

// max(x, bound). Gradient passes when unclamped, or when it would push the
// value back above the bound under a descent update.
template <typename T>
Var<T> lower_bound(const Var<T>& a, double bound) {
  Tensor<T> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = std::max(a.value()[i], static_cast<T>(bound));
  auto an = a.node();
  return Var<T>::make_op(
      std::move(out), {a}, [an, bound](typename Var<T>::Node& n) {
        an->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
          const bool pass =
              an->value[i] >= static_cast<T>(bound) || n.grad[i] < T(0);
          if (pass) an->grad[i] += n.grad[i];
        }
      });
}

// Round half away from zero; gradient is blocked (used outside training).
template <typename T>
Var<T> round_nograd(const Var<T>& a) {
  Tensor<T> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>(std::round((double)a.value()[i]));
  return Var<T>::make_op(std::move(out), {a}, [](typename Var<T>::Node&) {});
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Tensor<T> out({1});
  double acc = 0.0;
  for (int64_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i];
  out[0] = static_cast<T>(acc);
  auto an = a.node();
  return Var<T>::make_op(std::move(out), {a},
                         [an](typename Var<T>::Node& n) {
                           an->ensure_grad();
                           const T g = n.grad[0];
                           for (int64_t i = 0; i < an->grad.numel(); ++i)
                             an->grad[i] += g;
                         });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const double inv = 1.0 / static_cast<double>(a.value().numel());
  return affine(sum(a), inv, 0.0);
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a.value().reshaped(s);
  auto an = a.node();
  return Var<T>::make_op(std::move(out), {a},
                         [an](typename Var<T>::Node& n) {
                           an->ensure_grad();
                           for (int64_t i = 0; i < n.grad.numel(); ++i)
                             an->grad[i] += n.grad[i];
                         });
}

// Select row r of the leading axis: [R, rest...] -> [rest...].
template <typename T>
Var<T> row(const Var<T>& a, int64_t r) {
  const auto& s = a.value().shape();
  if (s.empty() || r < 0 || r >= s[0])
    throw config_error("row: index out of range");
  Shape rest(s.begin() + 1, s.end());
  if (rest.empty()) rest.push_back(1);
  const int64_t stride = shape_numel(rest);
  Tensor<T> out(rest);
  std::copy_n(a.value().data() + r * stride, stride, out.data());
  auto an = a.node();
  return Var<T>::make_op(std::move(out), {a},
                         [an, r, stride](typename Var<T>::Node& n) {
                           an->ensure_grad();
                           T* dst = an->grad.data() + r * stride;
                           for (int64_t i = 0; i < stride; ++i)
                             dst[i] += n.grad[i];
                         });
}

// x: [B,C,H,W] scaled per channel by g: [C].
template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& g) {
  const auto& xs = x.value().shape();
  if (xs.size() != 4 || g.value().numel() != xs[1])
    throw config_error("scale_channels: gain length " +
                       std::to_string(g.value().numel()) +
                       " vs channels " + shape_str(xs));
  const int64_t b = xs[0], c = xs[1], hw = xs[2] * xs[3];
  Tensor<T> out(xs);
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      const T gv = g.value()[ci];
      const T* src = x.value().data() + (bi * c + ci) * hw;
      T* dst = out.data() + (bi * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * gv;
    }
  auto xn = x.node(), gn = g.node();
  return Var<T>::make_op(
      std::move(out), {x, g},
      [xn, gn, b, c, hw](typename Var<T>::Node& n) {
        if (xn->requires_grad) {
          xn->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t ci = 0; ci < c; ++ci) {
              const T gv = gn->value[ci];
              const T* gr = n.grad.data() + (bi * c + ci) * hw;
              T* dst = xn->grad.data() + (bi * c + ci) * hw;
              for (int64_t i = 0; i < hw; ++i) dst[i] += gr[i] * gv;
            }
        }
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t ci = 0; ci < c; ++ci) {
              const T* gr = n.grad.data() + (bi * c + ci) * hw;
              const T* xv = xn->value.data() + (bi * c + ci) * hw;
              double acc = 0.0;
              for (int64_t i = 0; i < hw; ++i) acc += (double)gr[i] * xv[i];
              gn->grad[ci] += static_cast<T>(acc);
            }
        }
      });
}

template <typename T>
Var<T> bias_channels(const Var<T>& x, const Var<T>& bias) {
  const auto& xs = x.value().shape();
  if (xs.size() != 4 || bias.value().numel() != xs[1])
    throw config_error("bias_channels: bias length mismatch");
  const int64_t b = xs[0], c = xs[1], hw = xs[2] * xs[3];
  Tensor<T> out = x.value();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      const T bv = bias.value()[ci];
      T* dst = out.data() + (bi * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] += bv;
    }
  auto xn = x.node(), bn = bias.node();
  return Var<T>::make_op(
      std::move(out), {x, bias},
      [xn, bn, b, c, hw](typename Var<T>::Node& n) {
        if (xn->requires_grad) xn->accum_grad(n.grad);
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t ci = 0; ci < c; ++ci) {
              const T* gr = n.grad.data() + (bi * c + ci) * hw;
              double acc = 0.0;
              for (int64_t i = 0; i < hw; ++i) acc += gr[i];
              bn->grad[ci] += static_cast<T>(acc);
            }
        }
      });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int64_t c0, int64_t c1) {
  const auto& xs = x.value().shape();
  if (xs.size() != 4 || c0 < 0 || c1 > xs[1] || c0 >= c1)
    throw config_error("slice_channels: bad range");
  const int64_t b = xs[0], c = xs[1], hw = xs[2] * xs[3], oc = c1 - c0;
  Tensor<T> out({b, oc, xs[2], xs[3]});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < oc; ++ci)
      std::copy_n(x.value().data() + (bi * c + c0 + ci) * hw, hw,
                  out.data() + (bi * oc + ci) * hw);
  auto xn = x.node();
  return Var<T>::make_op(
      std::move(out), {x},
      [xn, b, c, hw, c0, oc](typename Var<T>::Node& n) {
        xn->ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t ci = 0; ci < oc; ++ci) {
            const T* gr = n.grad.data() + (bi * oc + ci) * hw;
            T* dst = xn->grad.data() + (bi * c + c0 + ci) * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] += gr[i];
          }
      });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              int64_t stride, int64_t pad) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 4 || ws.size() != 4)
    throw config_error("conv2d: expects 4-D input and weight");
  if (xs[1] != ws[1])
    throw config_error("conv2d: channel mismatch, input " +
                       shape_str(xs) + " weight " + shape_str(ws));
  const int64_t B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const int64_t Cout = ws[0], K = ws[2];
  const int64_t OH = kernels::conv_out_size(H, K, stride, pad);
  const int64_t OW = kernels::conv_out_size(W, K, stride, pad);
  const int64_t ckk = Cin * K * K, ohw = OH * OW;

  Tensor<T> out({B, Cout, OH, OW});
  std::vector<T> col(static_cast<size_t>(ckk) * ohw);
  for (int64_t b = 0; b < B; ++b) {
    kernels::im2col(x.value().data() + b * Cin * H * W, Cin, H, W, K, stride,
                    pad, OH, OW, col.data());
    kernels::gemm_ab(w.value().data(), col.data(),
                     out.data() + b * Cout * ohw, Cout, ckk, ohw);
  }
  Var<T> y = Var<T>::make_op(
      std::move(out), {x, w},
      [xn = x.node(), wn = w.node(), B, Cin, H, W, Cout, K, stride, pad, OH,
       OW, ckk, ohw](typename Var<T>::Node& n) {
        std::vector<T> col(static_cast<size_t>(ckk) * ohw);
        std::vector<T> dcol(static_cast<size_t>(ckk) * ohw);
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
          const T* dout = n.grad.data() + b * Cout * ohw;
          if (wn->requires_grad) {
            kernels::im2col(xn->value.data() + b * Cin * H * W, Cin, H, W, K,
                            stride, pad, OH, OW, col.data());
            kernels::gemm_abt(dout, col.data(), wn->grad.data(), Cout, ohw,
                              ckk);
          }
          if (xn->requires_grad) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            kernels::gemm_atb(wn->value.data(), dout, dcol.data(), ckk, Cout,
                              ohw);
            kernels::col2im(dcol.data(), Cin, H, W, K, stride, pad, OH, OW,
                            xn->grad.data() + b * Cin * H * W);
          }
        }
      });
  return bias.defined() ? bias_channels(y, bias) : y;
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                        int64_t stride, int64_t pad, int64_t outpad) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();  // [Cin, Cout, K, K]
  if (xs.size() != 4 || ws.size() != 4)
    throw config_error("conv_transpose2d: expects 4-D input and weight");
  if (xs[1] != ws[0])
    throw config_error("conv_transpose2d: channel mismatch, input " +
                       shape_str(xs) + " weight " + shape_str(ws));
  const int64_t B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const int64_t Cout = ws[1], K = ws[2];
  const int64_t OH = kernels::deconv_out_size(H, K, stride, pad, outpad);
  const int64_t OW = kernels::deconv_out_size(W, K, stride, pad, outpad);
  const int64_t ckk = Cout * K * K, hw = H * W;

  Tensor<T> out({B, Cout, OH, OW});
  std::vector<T> cols(static_cast<size_t>(ckk) * hw);
  for (int64_t b = 0; b < B; ++b) {
    std::fill(cols.begin(), cols.end(), T(0));
    kernels::gemm_atb(w.value().data(), x.value().data() + b * Cin * hw,
                      cols.data(), ckk, Cin, hw);
    kernels::col2im(cols.data(), Cout, OH, OW, K, stride, pad, H, W,
                    out.data() + b * Cout * OH * OW);
  }
  Var<T> y = Var<T>::make_op(
      std::move(out), {x, w},
      [xn = x.node(), wn = w.node(), B, Cin, H, W, Cout, K, stride, pad, OH,
       OW, ckk, hw](typename Var<T>::Node& n) {
        std::vector<T> col(static_cast<size_t>(ckk) * hw);
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
          kernels::im2col(n.grad.data() + b * Cout * OH * OW, Cout, OH, OW, K,
                          stride, pad, H, W, col.data());
          if (xn->requires_grad)
            kernels::gemm_ab(wn->value.data(), col.data(),
                             xn->grad.data() + b * Cin * hw, Cin, ckk, hw);
          if (wn->requires_grad)
            kernels::gemm_abt(xn->value.data() + b * Cin * hw, col.data(),
                              wn->grad.data(), Cin, hw, ckk);
        }
      });
  return bias.defined() ? bias_channels(y, bias) : y;
}

// x:[B,Din] * w:[Dout,Din]^T + b
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
    throw config_error("linear: shape mismatch " + shape_str(xs) + " vs " +
                       shape_str(ws));
  const int64_t B = xs[0], Din = xs[1], Dout = ws[0];
  Tensor<T> out({B, Dout});
  kernels::gemm_abt(x.value().data(), w.value().data(), out.data(), B, Din,
                    Dout);
  if (bias.defined())
    for (int64_t b = 0; b < B; ++b)
      for (int64_t j = 0; j < Dout; ++j) out.at2(b, j) += bias.value()[j];
  std::vector<Var<T>> inputs = {x, w};
  if (bias.defined()) inputs.push_back(bias);
  auto xn = x.node(), wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return Var<T>::make_op(
      std::move(out), std::move(inputs),
      [xn, wn, bn, B, Din, Dout](typename Var<T>::Node& n) {
        if (xn->requires_grad) {
          xn->ensure_grad();
          kernels::gemm_ab(n.grad.data(), wn->value.data(), xn->grad.data(),
                           B, Dout, Din);
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          kernels::gemm_atb(n.grad.data(), xn->value.data(), wn->grad.data(),
                            Dout, B, Din);
        }
        if (bn && bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t b = 0; b < B; ++b)
            for (int64_t j = 0; j < Dout; ++j)
              bn->grad[j] += n.grad.at2(b, j);
        }
      });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& xs = x.value().shape();
  if (xs.size() != 4) throw config_error("global_avg_pool: expects 4-D");
  const int64_t B = xs[0], C = xs[1], hw = xs[2] * xs[3];
  Tensor<T> out({B, C});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const T* src = x.value().data() + (b * C + c) * hw;
      double acc = 0.0;
      for (int64_t i = 0; i < hw; ++i) acc += src[i];
      out.at2(b, c) = static_cast<T>(acc / hw);
    }
  auto xn = x.node();
  return Var<T>::make_op(std::move(out), {x},
                         [xn, B, C, hw](typename Var<T>::Node& n) {
                           xn->ensure_grad();
                           for (int64_t b = 0; b < B; ++b)
                             for (int64_t c = 0; c < C; ++c) {
                               const T g = n.grad.at2(b, c) / hw;
                               T* dst = xn->grad.data() + (b * C + c) * hw;
                               for (int64_t i = 0; i < hw; ++i) dst[i] += g;
                             }
                         });
}

template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x, double eps = 1e-12) {
  const auto& xs = x.value().shape();
  if (xs.size() != 2) throw config_error("l2_normalize_rows: expects 2-D");
  const int64_t B = xs[0], D = xs[1];
  Tensor<T> out(xs);
  std::vector<double> norms(B);
  for (int64_t b = 0; b < B; ++b) {
    double nrm = 0.0;
    const T* src = x.value().data() + b * D;
    for (int64_t i = 0; i < D; ++i) nrm += (double)src[i] * src[i];
    nrm = std::max(std::sqrt(nrm), eps);
    norms[b] = nrm;
    T* dst = out.data() + b * D;
    for (int64_t i = 0; i < D; ++i) dst[i] = static_cast<T>(src[i] / nrm);
  }
  auto xn = x.node();
  Tensor<T> saved = out;
  return Var<T>::make_op(
      std::move(out), {x},
      [xn, saved, norms, B, D](typename Var<T>::Node& n) {
        xn->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
          const T* y = saved.data() + b * D;
          const T* gy = n.grad.data() + b * D;
          double dot = 0.0;
          for (int64_t i = 0; i < D; ++i) dot += (double)gy[i] * y[i];
          T* dst = xn->grad.data() + b * D;
          for (int64_t i = 0; i < D; ++i)
            dst[i] += static_cast<T>((gy[i] - dot * y[i]) / norms[b]);
        }
      });
}

// Interval probability of the scaled symbol under N(mu, sigma^2); all three
// arguments live in the scaled (integer-grid) domain and share a shape.
template <typename T>
Var<T> gaussian_likelihood(const Var<T>& v, const Var<T>& mu,
                           const Var<T>& sigma) {
  check_same_shape(v.value(), mu.value(), "gaussian_likelihood");
  check_same_shape(v.value(), sigma.value(), "gaussian_likelihood");
  const int64_t n = v.value().numel();
  Tensor<T> out(v.value().shape());
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  for (int64_t i = 0; i < n; ++i) {
    const double c = (double)v.value()[i] - (double)mu.value()[i];
    const double s = (double)sigma.value()[i];
    // Reflect so erfc sees nonnegative arguments on the dominant side.
    const double hi = (std::abs(c) - 0.5) / s, lo = (std::abs(c) + 0.5) / s;
    const double p =
        0.5 * (std::erfc(hi * kInvSqrt2) - std::erfc(lo * kInvSqrt2));
    out[i] = static_cast<T>(p);
  }
  auto vn = v.node(), mn = mu.node(), sn = sigma.node();
  return Var<T>::make_op(
      std::move(out), {v, mu, sigma},
      [vn, mn, sn, n](typename Var<T>::Node& node) {
        constexpr double kInvSqrt2Pi = 0.3989422804014326779;
        const bool nv = vn->requires_grad, nm = mn->requires_grad,
                   ns = sn->requires_grad;
        if (nv) vn->ensure_grad();
        if (nm) mn->ensure_grad();
        if (ns) sn->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
          const double g = node.grad[i];
          if (g == 0.0) continue;
          const double c = (double)vn->value[i] - (double)mn->value[i];
          const double s = (double)sn->value[i];
          const double a = (c + 0.5) / s, b = (c - 0.5) / s;
          const double pa = kInvSqrt2Pi * std::exp(-0.5 * a * a);
          const double pb = kInvSqrt2Pi * std::exp(-0.5 * b * b);
          const double dpdc = (pa - pb) / s;
          if (nv) vn->grad[i] += static_cast<T>(g * dpdc);
          if (nm) mn->grad[i] -= static_cast<T>(g * dpdc);
          if (ns) sn->grad[i] -= static_cast<T>(g * (a * pa - b * pb) / s);
        }
      });
}

// Mean squared error between two tensors (scalar output).
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "mse");
  const int64_t n = a.value().numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = (double)a.value()[i] - (double)b.value()[i];
    acc += d * d;
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / n);
  auto an = a.node(), bn = b.node();
  return Var<T>::make_op(
      std::move(out), {a, b}, [an, bn, n](typename Var<T>::Node& node) {
        const double g = 2.0 * node.grad[0] / n;
        if (an->requires_grad) {
          an->ensure_grad();
          for (int64_t i = 0; i < n; ++i)
            an->grad[i] +=
                static_cast<T>(g * ((double)an->value[i] - bn->value[i]));
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t i = 0; i < n; ++i)
            bn->grad[i] -=
                static_cast<T>(g * ((double)an->value[i] - bn->value[i]));
        }
      });
}

// Total coded size in bits: -sum(log2(max(p, floor))).
template <typename T>
Var<T> total_bits(const Var<T>& likelihoods, double floor = 1e-9) {
  constexpr double kInvLn2 = 1.4426950408889634074;
  return affine(sum(log_(lower_bound(likelihoods, floor))), -kInvLn2, 0.0);
}

}  // namespace ops
}  // namespace rdc
