#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rdc/nn.hpp"
#include "rdc/random.hpp"

namespace rdc {

enum class StreamKind { kMain, kHyper, kAux };

inline const char* stream_name(StreamKind k) {
  switch (k) {
    case StreamKind::kMain: return "y";
    case StreamKind::kHyper: return "z";
    default: return "s";
  }
}

// alpha <-> 16-bit fixed point used in the container header. Encoder and
// decoder both rebuild gains from the fixed-point value so dequantization
// matches bit for bit.
inline uint16_t alpha_to_fx(double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw range_error("alpha must be in [0,1], got " + std::to_string(alpha));
  return static_cast<uint16_t>(std::lround(alpha * 65535.0));
}
inline double alpha_from_fx(uint16_t fx) { return fx / 65535.0; }

struct QualityPoint {
  double alpha = 1.0;    // primary rate knob
  double alpha_s = 1.0;  // auxiliary rate knob
  QualityPoint() = default;
  QualityPoint(double a, double as) : alpha(a), alpha_s(as) {
    if (a < 0 || a > 1 || as < 0 || as > 1)
      throw range_error("quality point outside [0,1]");
  }
};

enum class QuantizeMode { kNoise, kRound };

// Per-channel learned scaling vectors for the three streams, one row per
// rate anchor. Stored as logs so entries stay strictly positive.
template <typename T>
class GainSet {
 public:
  GainSet() = default;
  GainSet(ParamStore<T>& ps, int anchors, int64_t cy, int64_t cz, int64_t cs)
      : anchors_(anchors) {
    gy_.reserve(anchors);
    gz_.reserve(anchors);
    gs_.reserve(anchors);
    for (int n = 0; n < anchors; ++n) {
      const std::string idx = std::to_string(n);
      gy_.push_back(ps.add("gain.y." + idx, Tensor<T>::zeros({cy})));
      gz_.push_back(ps.add("gain.z." + idx, Tensor<T>::zeros({cz})));
      gs_.push_back(ps.add("gain.s." + idx, Tensor<T>::zeros({cs})));
    }
  }

  int anchors() const { return anchors_; }

  // Training path: gain vector of one anchor as a differentiable Var.
  Var<T> anchor_gain(StreamKind k, int n) const {
    return ops::exp_(log_row(k, n));
  }
  Var<T> anchor_inverse_gain(StreamKind k, int n) const {
    return ops::exp_(ops::neg(log_row(k, n)));
  }

  // Inference path: continuous alpha, geometric interpolation between the
  // bracketing anchors. alpha is mapped uniformly over the N-1 intervals.
  Tensor<T> gain_at(StreamKind k, double alpha) const {
    if (alpha < 0.0 || alpha > 1.0)
      throw range_error("alpha must be in [0,1], got " +
                        std::to_string(alpha));
    const double t = alpha * (anchors_ - 1);
    int n = static_cast<int>(std::floor(t));
    double frac = t - n;
    if (n >= anchors_ - 1) {
      n = anchors_ - 1;
      frac = 0.0;
    }
    // Snap to the anchor when alpha lands on it so the vector is exact.
    if (frac < 1e-9) frac = 0.0;
    if (frac > 1.0 - 1e-9) {
      ++n;
      frac = 0.0;
    }
    const Tensor<T>& lo = log_row(k, n).value();
    Tensor<T> out(lo.shape());
    if (frac == 0.0) {
      for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(std::exp((double)lo[i]));
      return out;
    }
    const Tensor<T>& hi = log_row(k, n + 1).value();
    for (int64_t i = 0; i < out.numel(); ++i)
      out[i] = static_cast<T>(
          std::exp((1.0 - frac) * (double)lo[i] + frac * (double)hi[i]));
    return out;
  }

 private:
  const Var<T>& log_row(StreamKind k, int n) const {
    if (n < 0 || n >= anchors_)
      throw range_error("anchor index out of range: " + std::to_string(n));
    switch (k) {
      case StreamKind::kMain: return gy_[n];
      case StreamKind::kHyper: return gz_[n];
      default: return gs_[n];
    }
  }

  int anchors_ = 0;
  std::vector<Var<T>> gy_, gz_, gs_;
};

namespace detail {
template <typename T>
inline void check_gain(const Tensor<T>& gain, const Tensor<T>& v) {
  if (v.ndim() != 4 || gain.numel() != v.dim(1))
    throw invariant_error("quantize: gain length " +
                          std::to_string(gain.numel()) + " vs latent " +
                          shape_str(v.shape()));
  for (int64_t i = 0; i < gain.numel(); ++i)
    if (!(gain[i] > T(0)))
      throw invariant_error("quantize: non-positive gain entry");
}
}  // namespace detail

// v_hat = Q(v*G)/G. Round mode rounds half away from zero; noise mode adds
// U(-1/2,1/2) drawn from the caller's generator.
template <typename T>
Tensor<T> quantize(const Tensor<T>& v, const Tensor<T>& gain,
                   QuantizeMode mode, Rng* rng = nullptr) {
  detail::check_gain(gain, v);
  if (mode == QuantizeMode::kNoise && rng == nullptr)
    throw invariant_error("quantize: noise mode requires a generator");
  const int64_t b = v.dim(0), c = v.dim(1), hw = v.dim(2) * v.dim(3);
  Tensor<T> out(v.shape());
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double g = gain[ci];
      const T* src = v.data() + (bi * c + ci) * hw;
      T* dst = out.data() + (bi * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        const double scaled = (double)src[i] * g;
        const double q = (mode == QuantizeMode::kRound)
                             ? std::round(scaled)
                             : scaled + rng->uniform(-0.5, 0.5);
        dst[i] = static_cast<T>(q / g);
      }
    }
  return out;
}

// Integer symbols k = round(v*G) on the coding grid.
template <typename T>
Tensor<int32_t> quantize_symbols(const Tensor<T>& v, const Tensor<T>& gain) {
  detail::check_gain(gain, v);
  const int64_t b = v.dim(0), c = v.dim(1), hw = v.dim(2) * v.dim(3);
  Tensor<int32_t> out(v.shape());
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double g = gain[ci];
      const T* src = v.data() + (bi * c + ci) * hw;
      int32_t* dst = out.data() + (bi * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i)
        dst[i] = static_cast<int32_t>(std::lround((double)src[i] * g));
    }
  return out;
}

// Dequantize integer symbols back to latent values: v_hat = k / G.
template <typename T>
Tensor<T> dequantize_symbols(const Tensor<int32_t>& k,
                             const Tensor<T>& gain) {
  const int64_t b = k.dim(0), c = k.dim(1), hw = k.dim(2) * k.dim(3);
  if (gain.numel() != c) throw invariant_error("dequantize: gain mismatch");
  Tensor<T> out(k.shape());
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      const double g = gain[ci];
      const int32_t* src = k.data() + (bi * c + ci) * hw;
      T* dst = out.data() + (bi * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i)
        dst[i] = static_cast<T>(src[i] / g);
    }
  return out;
}

}  // namespace rdc
