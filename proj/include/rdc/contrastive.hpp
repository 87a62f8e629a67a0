#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rdc/checkpoint.hpp"
#include "rdc/nn.hpp"

namespace rdc {

// InfoNCE over a query batch against one positive per row and a shared
// negative set. Gradient flows into q only; keys are plain tensors.
template <typename T>
Var<T> info_nce(const Var<T>& q, const Tensor<T>& k_plus,
                const Tensor<T>& negatives, double tau) {
  if (tau <= 0)
    throw range_error("info_nce: temperature must be positive, got " +
                      std::to_string(tau));
  const auto& qs = q.value().shape();
  if (qs.size() != 2 || !k_plus.same_shape(q.value()))
    throw config_error("info_nce: q and k_plus must both be [B,D]");
  const int64_t B = qs[0], D = qs[1];
  const int64_t K = negatives.empty() ? 0 : negatives.dim(0);
  if (K > 0 && negatives.dim(1) != D)
    throw config_error("info_nce: negative key dimension mismatch");

  // Row-wise similarity logits: column 0 is the positive.
  Tensor<double> logits({B, K + 1});
  for (int64_t b = 0; b < B; ++b) {
    const T* qr = q.value().data() + b * D;
    const T* kp = k_plus.data() + b * D;
    double dot = 0;
    for (int64_t i = 0; i < D; ++i) dot += (double)qr[i] * kp[i];
    logits.at2(b, 0) = dot / tau;
    for (int64_t j = 0; j < K; ++j) {
      const T* nr = negatives.data() + j * D;
      double d2 = 0;
      for (int64_t i = 0; i < D; ++i) d2 += (double)qr[i] * nr[i];
      logits.at2(b, j + 1) = d2 / tau;
    }
  }
  double loss = 0;
  Tensor<double> softmax({B, K + 1});
  for (int64_t b = 0; b < B; ++b) {
    double mx = logits.at2(b, 0);
    for (int64_t j = 1; j <= K; ++j) mx = std::max(mx, logits.at2(b, j));
    double sum = 0;
    for (int64_t j = 0; j <= K; ++j) {
      softmax.at2(b, j) = std::exp(logits.at2(b, j) - mx);
      sum += softmax.at2(b, j);
    }
    for (int64_t j = 0; j <= K; ++j) softmax.at2(b, j) /= sum;
    loss += mx + std::log(sum) - logits.at2(b, 0);
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(loss / B);

  auto qn = q.node();
  Tensor<T> kp_saved = k_plus;
  Tensor<T> neg_saved = negatives;
  return Var<T>::make_op(
      std::move(out), {q},
      [qn, kp_saved, neg_saved, softmax, B, D, K,
       tau](typename Var<T>::Node& n) {
        qn->ensure_grad();
        const double g = (double)n.grad[0] / (B * tau);
        for (int64_t b = 0; b < B; ++b) {
          T* dq = qn->grad.data() + b * D;
          const T* kp = kp_saved.data() + b * D;
          const double p0 = softmax.at2(b, 0);
          for (int64_t i = 0; i < D; ++i)
            dq[i] += static_cast<T>(g * (p0 - 1.0) * kp[i]);
          for (int64_t j = 0; j < K; ++j) {
            const double pj = softmax.at2(b, j + 1);
            if (pj == 0) continue;
            const T* nr = neg_saved.data() + j * D;
            for (int64_t i = 0; i < D; ++i)
              dq[i] += static_cast<T>(g * pj * nr[i]);
          }
        }
      });
}

// Mean softmax cross entropy over integer labels.
template <typename T>
Var<T> cross_entropy_logits(const Var<T>& logits,
                            const std::vector<int>& labels) {
  const auto& s = logits.value().shape();
  if (s.size() != 2 || static_cast<int64_t>(labels.size()) != s[0])
    throw config_error("cross_entropy: label/logit dimension mismatch");
  const int64_t B = s[0], C = s[1];
  for (int l : labels)
    if (l < 0 || l >= C)
      throw config_error("cross_entropy: label out of range");
  Tensor<double> softmax({B, C});
  double loss = 0;
  for (int64_t b = 0; b < B; ++b) {
    const T* row = logits.value().data() + b * C;
    double mx = row[0];
    for (int64_t c = 1; c < C; ++c) mx = std::max(mx, (double)row[c]);
    double sum = 0;
    for (int64_t c = 0; c < C; ++c) {
      softmax.at2(b, c) = std::exp((double)row[c] - mx);
      sum += softmax.at2(b, c);
    }
    for (int64_t c = 0; c < C; ++c) softmax.at2(b, c) /= sum;
    loss -= std::log(std::max(softmax.at2(b, labels[b]), 1e-300));
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(loss / B);
  auto ln = logits.node();
  return Var<T>::make_op(
      std::move(out), {logits},
      [ln, softmax, labels, B, C](typename Var<T>::Node& n) {
        ln->ensure_grad();
        const double g = (double)n.grad[0] / B;
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c) {
            const double delta = (c == labels[b]) ? 1.0 : 0.0;
            ln->grad[b * C + c] +=
                static_cast<T>(g * (softmax.at2(b, c) - delta));
          }
      });
}

// Fixed-capacity FIFO ring of unit key vectors.
template <typename T>
class NegativeQueue {
 public:
  NegativeQueue(int64_t capacity, int64_t dim)
      : capacity_(capacity), dim_(dim), store_({capacity, dim}) {}

  int64_t capacity() const { return capacity_; }
  int64_t dim() const { return dim_; }
  int64_t size() const { return count_; }
  bool warm() const { return count_ == capacity_; }

  void enqueue_rows(const Tensor<T>& rows) {
    const int64_t n = rows.dim(0);
    for (int64_t i = 0; i < n; ++i) {
      std::copy_n(rows.data() + i * dim_, dim_,
                  store_.data() + cursor_ * dim_);
      cursor_ = (cursor_ + 1) % capacity_;
      count_ = std::min(count_ + 1, capacity_);
    }
  }

  // Current contents, [size, dim]; order is irrelevant to the loss.
  Tensor<T> snapshot() const {
    Tensor<T> out({count_, dim_});
    std::copy_n(store_.data(), count_ * dim_, out.data());
    return out;
  }

  bool contains_row(const Tensor<T>& row, double tol = 0) const {
    for (int64_t i = 0; i < count_; ++i) {
      double diff = 0;
      for (int64_t j = 0; j < dim_; ++j)
        diff = std::max(diff,
                        std::abs((double)store_[i * dim_ + j] - row[j]));
      if (diff <= tol) return true;
    }
    return false;
  }

 private:
  int64_t capacity_, dim_;
  Tensor<T> store_;
  int64_t count_ = 0, cursor_ = 0;
};

struct ProxyConfig {
  int64_t embed_dim = 128;
  int64_t queue = 4096;
  double tau = 0.07;
  double ema = 0.99;
  int64_t classes = 10;
  uint64_t init_seed = 7;
};

inline KvMap proxy_config_to_map(const ProxyConfig& c) {
  KvMap m;
  m["embed_dim"] = std::to_string(c.embed_dim);
  m["queue"] = std::to_string(c.queue);
  m["tau"] = std::to_string(c.tau);
  m["ema"] = std::to_string(c.ema);
  m["classes"] = std::to_string(c.classes);
  m["init_seed"] = std::to_string(c.init_seed);
  return m;
}

inline ProxyConfig proxy_config_from_map(const KvMap& m) {
  ProxyConfig c;
  auto get = [&m](const char* k) {
    auto it = m.find(k);
    if (it == m.end())
      throw version_error(std::string("proxy config missing key: ") + k);
    return it->second;
  };
  c.embed_dim = std::stoll(get("embed_dim"));
  c.queue = std::stoll(get("queue"));
  c.tau = std::stod(get("tau"));
  c.ema = std::stod(get("ema"));
  c.classes = std::stoll(get("classes"));
  c.init_seed = std::stoull(get("init_seed"));
  return c;
}

// Small convolutional contrastive encoder with a momentum copy and a
// projection head emitting unit vectors, plus the linear probe that stands
// in for the downstream task network.
template <typename T>
class CognitionProxy {
 public:
  explicit CognitionProxy(ProxyConfig cfg) : cfg_(cfg) {
    Rng rng(Rng::splitmix(cfg.init_seed * 31 + 5));
    auto build = [&](const char* prefix, Rng& r) {
      std::string p(prefix);
      return std::array<Conv2d<T>, 4>{
          Conv2d<T>(params_, p + ".0", 3, 32, 3, 2, 1, r),
          Conv2d<T>(params_, p + ".1", 32, 64, 3, 2, 1, r),
          Conv2d<T>(params_, p + ".2", 64, 128, 3, 2, 1, r),
          Conv2d<T>(params_, p + ".3", 128, 128, 3, 2, 1, r)};
    };
    enc_ = build("e", rng);
    proj_ = Linear<T>(params_, "e.proj", 128, cfg.embed_dim, rng);
    Rng rng2(Rng::splitmix(cfg.init_seed * 31 + 5));  // same init as e
    enc_m_ = build("em", rng2);
    proj_m_ = Linear<T>(params_, "em.proj", 128, cfg.embed_dim, rng2);
    probe_ = Linear<T>(params_, "probe", cfg.embed_dim, cfg.classes, rng);
  }

  const ProxyConfig& cfg() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Unit-norm embedding rows for a [B,3,H,W] input.
  Var<T> embed(const Var<T>& x, bool momentum = false) const {
    using ops::leaky_relu;
    const auto& stack = momentum ? enc_m_ : enc_;
    Var<T> t = x;
    for (const auto& conv : stack) t = leaky_relu(conv(t));
    t = ops::global_avg_pool(t);
    t = (momentum ? proj_m_ : proj_)(t);
    return ops::l2_normalize_rows(t);
  }

  Tensor<T> embed_plain(const Tensor<T>& x4, bool momentum = false) const {
    return embed(ops::constant(x4), momentum).value();
  }

  Var<T> probe_logits(const Var<T>& emb) const { return probe_(emb); }

  void momentum_update() {
    const double m = cfg_.ema;
    for (auto& [name, var] : params_.items()) {
      if (name.rfind("em", 0) != 0) continue;
      const std::string src = "e" + name.substr(2);
      Var<T>* sv = params_.find(src);
      Tensor<T>& dst = var.value();
      const Tensor<T>& s = sv->value();
      for (int64_t i = 0; i < dst.numel(); ++i)
        dst[i] = static_cast<T>(m * dst[i] + (1.0 - m) * s[i]);
    }
  }

  void freeze_encoder() {
    params_.set_trainable("e", false);  // covers e.* and em.*
    frozen_ = true;
  }
  void set_probe_trainable(bool t) { params_.set_trainable("probe", t); }
  bool frozen() const { return frozen_; }

  uint64_t encoder_hash() const {
    return params_.hash("e.") ^ (params_.hash("em.") * 3);
  }

  void save(const std::string& path) const {
    KvMap m = proxy_config_to_map(cfg_);
    m["frozen"] = frozen_ ? "1" : "0";
    save_checkpoint(path, "proxy", m, params_);
  }

  static CognitionProxy load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "proxy")
      throw version_error("expected a proxy checkpoint, got kind '" +
                          ck.kind + "'");
    CognitionProxy proxy(proxy_config_from_map(ck.config));
    restore_params(ck, proxy.params_);
    auto it = ck.config.find("frozen");
    if (it != ck.config.end() && it->second == "1") proxy.freeze_encoder();
    return proxy;
  }

 private:
  ProxyConfig cfg_;
  ParamStore<T> params_;
  std::array<Conv2d<T>, 4> enc_, enc_m_;
  Linear<T> proj_, proj_m_, probe_;
  bool frozen_ = false;
};

// Top-1 accuracy of logits against labels.
template <typename T>
double top1_accuracy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2 ||
      logits.dim(0) != static_cast<int64_t>(labels.size()))
    throw config_error("accuracy: label/logit dimension mismatch");
  const int64_t B = logits.dim(0), C = logits.dim(1);
  int64_t hits = 0;
  for (int64_t b = 0; b < B; ++b) {
    int64_t best = 0;
    for (int64_t c = 1; c < C; ++c)
      if (logits.at2(b, c) > logits.at2(b, best)) best = c;
    if (best == labels[b]) ++hits;
  }
  return static_cast<double>(hits) / B;
}

}  // namespace rdc
