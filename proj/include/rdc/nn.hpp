#pragma once

#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rdc/autograd.hpp"
#include "rdc/random.hpp"

namespace rdc {

// Ordered name -> parameter registry. Layers register themselves at
// construction; the optimizer, checkpoints and freeze logic all work off
// this single table.
template <typename T>
class ParamStore {
 public:
  Var<T>& add(const std::string& name, Tensor<T> init) {
    for (auto& it : items_)
      if (it.first == name)
        throw invariant_error("duplicate parameter name: " + name);
    items_.emplace_back(name, Var<T>(std::move(init), true));
    return items_.back().second;
  }

  Var<T>* find(const std::string& name) {
    for (auto& it : items_)
      if (it.first == name) return &it.second;
    return nullptr;
  }

  std::vector<std::pair<std::string, Var<T>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Var<T>>>& items() const {
    return items_;
  }

  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& it : items_)
      if (it.first.rfind(prefix, 0) == 0)
        it.second.set_requires_grad(trainable);
  }

  int64_t count_params(const std::string& prefix = "") const {
    int64_t n = 0;
    for (const auto& it : items_)
      if (it.first.rfind(prefix, 0) == 0) n += it.second.value().numel();
    return n;
  }

  // FNV-1a over raw parameter bytes, order-sensitive. Used by the
  // freeze-contract checks.
  uint64_t hash(const std::string& prefix = "") const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, size_t n) {
      const unsigned char* b = static_cast<const unsigned char*>(p);
      for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
      }
    };
    for (const auto& it : items_) {
      if (it.first.rfind(prefix, 0) != 0) continue;
      mix(it.first.data(), it.first.size());
      mix(it.second.value().data(),
          sizeof(T) * static_cast<size_t>(it.second.value().numel()));
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
};

namespace init {

template <typename T>
Tensor<T> uniform_fan_in(Shape shape, int64_t fan_in, Rng& rng) {
  Tensor<T> t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace init

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& name, int64_t cin,
         int64_t cout, int64_t k, int64_t stride, int64_t pad, Rng& rng,
         bool zero_init = false, double bias_init = 0.0) {
    stride_ = stride;
    pad_ = pad;
    Tensor<T> w = zero_init
                      ? Tensor<T>::zeros({cout, cin, k, k})
                      : init::uniform_fan_in<T>({cout, cin, k, k},
                                                cin * k * k, rng);
    Tensor<T> b = Tensor<T>::full({cout}, static_cast<T>(bias_init));
    weight_ = ps.add(name + ".weight", std::move(w));
    bias_ = ps.add(name + ".bias", std::move(b));
  }

  Var<T> operator()(const Var<T>& x) const {
    return ops::conv2d(x, weight_, bias_, stride_, pad_);
  }

  Var<T> weight_, bias_;
  int64_t stride_ = 1, pad_ = 0;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore<T>& ps, const std::string& name, int64_t cin,
                  int64_t cout, int64_t k, int64_t stride, int64_t pad,
                  int64_t outpad, Rng& rng, bool zero_init = false,
                  double bias_init = 0.0) {
    stride_ = stride;
    pad_ = pad;
    outpad_ = outpad;
    Tensor<T> w = zero_init
                      ? Tensor<T>::zeros({cin, cout, k, k})
                      : init::uniform_fan_in<T>({cin, cout, k, k},
                                                cin * k * k, rng);
    Tensor<T> b = Tensor<T>::full({cout}, static_cast<T>(bias_init));
    weight_ = ps.add(name + ".weight", std::move(w));
    bias_ = ps.add(name + ".bias", std::move(b));
  }

  Var<T> operator()(const Var<T>& x) const {
    return ops::conv_transpose2d(x, weight_, bias_, stride_, pad_, outpad_);
  }

  Var<T> weight_, bias_;
  int64_t stride_ = 1, pad_ = 0, outpad_ = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, int64_t din,
         int64_t dout, Rng& rng, bool zero_init = false) {
    Tensor<T> w = zero_init ? Tensor<T>::zeros({dout, din})
                            : init::uniform_fan_in<T>({dout, din}, din, rng);
    weight_ = ps.add(name + ".weight", std::move(w));
    bias_ = ps.add(name + ".bias", Tensor<T>::zeros({dout}));
  }

  Var<T> operator()(const Var<T>& x) const {
    return ops::linear(x, weight_, bias_);
  }

  Var<T> weight_, bias_;
};

// First-order adaptive optimizer (Adam, bias-corrected). Only parameters
// with requires_grad participate; frozen parameters keep their slot so a
// freeze/unfreeze round trip is harmless.
template <typename T>
class Adam {
 public:
  explicit Adam(ParamStore<T>& ps, double lr = 1e-4, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : store_(&ps), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void zero_grad() {
    for (auto& it : store_->items()) it.second.zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    size_t idx = 0;
    for (auto& it : store_->items()) {
      if (idx >= m_.size()) {
        m_.push_back(Tensor<double>::zeros(it.second.value().shape()));
        v_.push_back(Tensor<double>::zeros(it.second.value().shape()));
      }
      Var<T>& p = it.second;
      if (p.requires_grad()) {
        Tensor<T>& val = p.value();
        const Tensor<T>& g = p.grad();
        Tensor<double>& m = m_[idx];
        Tensor<double>& v = v_[idx];
        for (int64_t i = 0; i < val.numel(); ++i) {
          const double gi = g[i];
          m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
          v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
          const double mhat = m[i] / c1, vhat = v[i] / c2;
          val[i] = static_cast<T>(val[i] -
                                  lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
      }
      ++idx;
    }
  }

  double lr() const { return lr_; }

 private:
  ParamStore<T>* store_;
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<double>> m_, v_;
};

}  // namespace rdc
