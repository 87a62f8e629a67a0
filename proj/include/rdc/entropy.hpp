#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rdc/gain.hpp"
#include "rdc/nn.hpp"

namespace rdc {

// Probability floor applied before log2 in rate estimates.
inline constexpr double kLikelihoodFloor = 1e-9;
// 16-bit coding precision shared with the range coder.
inline constexpr int kCdfPrecision = 16;
inline constexpr uint32_t kCdfTotal = 1u << kCdfPrecision;

// ---------------------------------------------------------------------------
// Conditional Gaussian model for the main latent. Stateless; everything is
// driven by the (mu, sigma) planes from the hyper decoder, expressed in the
// scaled (integer-grid) domain.
// ---------------------------------------------------------------------------
struct GaussianConditional {
  static double cdf_std(double t) {  // standard normal CDF
    return 0.5 * std::erfc(-t * 0.7071067811865475244);
  }
  // P(round(v) = k) for v ~ N(mu, sigma^2), interval [k-0.5, k+0.5].
  static double likelihood_plain(double k, double mu, double sigma) {
    const double c = std::abs(k - mu);
    return 0.5 * (std::erfc((c - 0.5) / sigma * 0.7071067811865475244) -
                  std::erfc((c + 0.5) / sigma * 0.7071067811865475244));
  }

  template <typename T>
  static Var<T> total_bits(const Var<T>& v_scaled, const Var<T>& mu_scaled,
                           const Var<T>& sigma_scaled) {
    return ops::total_bits(
        ops::gaussian_likelihood(v_scaled, mu_scaled, sigma_scaled),
        kLikelihoodFloor);
  }
};

// ---------------------------------------------------------------------------
// Learned factorized prior: one small monotone scalar network per channel
// (3 matrix stages of width 3 with tanh gates), CDF(x) = sigmoid(logit(x)).
// Operates directly on scaled-domain values.
// ---------------------------------------------------------------------------
template <typename T>
class FactorizedPrior {
 public:
  static constexpr int kWidth = 3;

  FactorizedPrior() = default;
  FactorizedPrior(ParamStore<T>& ps, const std::string& name,
                  int64_t channels, Rng& rng)
      : channels_(channels) {
    // With gates at zero the stack is linear with slope 9*s^3; s = 1/3
    // gives an initial CDF of sigmoid(x/3).
    const T h0 = static_cast<T>(std::log(std::expm1(1.0 / 3.0)));
    auto jitter = [&rng](Tensor<T>& t, double amp) {
      for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(t[i] + rng.uniform(-amp, amp));
    };
    Tensor<T> h1 = Tensor<T>::full({channels, kWidth}, h0);
    Tensor<T> h2 = Tensor<T>::full({channels, kWidth, kWidth}, h0);
    Tensor<T> h3 = Tensor<T>::full({channels, kWidth}, h0);
    Tensor<T> b1 = Tensor<T>::zeros({channels, kWidth});
    Tensor<T> b2 = Tensor<T>::zeros({channels, kWidth});
    Tensor<T> b3 = Tensor<T>::zeros({channels, 1});
    Tensor<T> a1 = Tensor<T>::zeros({channels, kWidth});
    Tensor<T> a2 = Tensor<T>::zeros({channels, kWidth});
    jitter(b1, 0.5);
    jitter(b2, 0.5);
    jitter(a1, 0.1);
    jitter(a2, 0.1);
    h1_ = ps.add(name + ".h1", std::move(h1));
    h2_ = ps.add(name + ".h2", std::move(h2));
    h3_ = ps.add(name + ".h3", std::move(h3));
    b1_ = ps.add(name + ".b1", std::move(b1));
    b2_ = ps.add(name + ".b2", std::move(b2));
    b3_ = ps.add(name + ".b3", std::move(b3));
    a1_ = ps.add(name + ".a1", std::move(a1));
    a2_ = ps.add(name + ".a2", std::move(a2));
  }

  int64_t channels() const { return channels_; }

  // logit(x) for every element of one channel; x4 is [1,1,M,1].
  Var<T> logit_channel(int64_t c, const Var<T>& x4) const {
    using namespace ops;
    Var<T> w1 = reshape(softplus_(row(h1_, c)), {kWidth, 1, 1, 1});
    Var<T> u = conv2d(x4, w1, row(b1_, c), 1, 0);
    u = add(u, scale_channels(tanh_(u), tanh_(row(a1_, c))));
    Var<T> w2 = reshape(softplus_(row(h2_, c)), {kWidth, kWidth, 1, 1});
    u = conv2d(u, w2, row(b2_, c), 1, 0);
    u = add(u, scale_channels(tanh_(u), tanh_(row(a2_, c))));
    Var<T> w3 = reshape(softplus_(row(h3_, c)), {1, kWidth, 1, 1});
    return conv2d(u, w3, row(b3_, c), 1, 0);
  }

  // Interval likelihood p(x) = CDF(x+1/2) - CDF(x-1/2), differentiable in x
  // and the model parameters. x is [B,C,h,w] in the scaled domain.
  Var<T> total_bits(const Var<T>& x) const {
    using namespace ops;
    const auto& s = x.value().shape();
    if (s.size() != 4 || s[1] != channels_)
      throw config_error("factorized prior: channel mismatch " +
                         shape_str(s));
    const int64_t m = s[0] * s[2] * s[3];
    Var<T> bits;
    for (int64_t c = 0; c < channels_; ++c) {
      Var<T> xc = reshape(slice_channels(x, c, c + 1), {1, 1, m, 1});
      Var<T> p = sub(sigmoid_(logit_channel(c, affine(xc, 1.0, 0.5))),
                     sigmoid_(logit_channel(c, affine(xc, 1.0, -0.5))));
      Var<T> cb = ops::total_bits(p, kLikelihoodFloor);
      bits = bits.defined() ? add(bits, cb) : cb;
    }
    return bits;
  }

  // Plain (graph-free) evaluation used when building coding tables.
  double logit_plain(int64_t c, double x) const {
    double v[kWidth], u[kWidth];
    for (int i = 0; i < kWidth; ++i) {
      const double w = softplus_d(h1_.value().at2(c, i));
      double t = w * x + b1_.value().at2(c, i);
      v[i] = t + std::tanh((double)a1_.value().at2(c, i)) * std::tanh(t);
    }
    for (int i = 0; i < kWidth; ++i) {
      double t = b2_.value().at2(c, i);
      for (int j = 0; j < kWidth; ++j)
        t += softplus_d(h2_.value()[(c * kWidth + i) * kWidth + j]) * v[j];
      u[i] = t + std::tanh((double)a2_.value().at2(c, i)) * std::tanh(t);
    }
    double l = b3_.value().at2(c, 0);
    for (int j = 0; j < kWidth; ++j)
      l += softplus_d(h3_.value().at2(c, j)) * u[j];
    return l;
  }

  double cdf_plain(int64_t c, double x) const {
    const double l = logit_plain(c, x);
    return l >= 0 ? 1.0 / (1.0 + std::exp(-l))
                  : std::exp(l) / (1.0 + std::exp(l));
  }

  double likelihood_plain(int64_t c, double x) const {
    return cdf_plain(c, x + 0.5) - cdf_plain(c, x - 0.5);
  }

 private:
  static double softplus_d(double x) {
    return x > 20 ? x : std::log1p(std::exp(x));
  }

  int64_t channels_ = 0;
  Var<T> h1_, h2_, h3_, b1_, b2_, b3_, a1_, a2_;
};

// ---------------------------------------------------------------------------
// Coding alphabet and quantized CDF tables.
// ---------------------------------------------------------------------------

// Integer range [-lmax, lmax] per stream; values outside are escape-coded.
struct SymbolAlphabet {
  int32_t lmax = 15;
  int32_t nsym() const { return 2 * lmax + 1; }
  bool contains(int32_t k) const { return k >= -lmax && k <= lmax; }
};

// One quantized table: slots [0, nsym) are symbols offset..offset+nsym-1,
// slot nsym is the escape symbol. cdf has nsym+2 entries, cdf.back()=65536.
struct CdfTable {
  std::vector<uint32_t> cdf;
  int32_t offset = 0;
  int32_t nsym = 0;

  uint32_t freq(int32_t slot) const { return cdf[slot + 1] - cdf[slot]; }
  int32_t escape_slot() const { return nsym; }
};

// Quantize a pmf (escape mass in the last slot) to 16-bit counts, each at
// least 1, summing exactly to 2^16.
inline CdfTable quantize_pmf(const std::vector<double>& pmf_with_escape,
                             int32_t offset) {
  const size_t n = pmf_with_escape.size();
  std::vector<int64_t> counts(n);
  int64_t total = 0;
  for (size_t i = 0; i < n; ++i) {
    double p = pmf_with_escape[i];
    if (!(p >= 0)) p = 0;  // guards NaN
    counts[i] = std::max<int64_t>(1, std::llround(p * kCdfTotal));
    total += counts[i];
  }
  while (total != kCdfTotal) {
    // Steal from / give to the largest bucket; lowest index wins ties.
    size_t best = 0;
    for (size_t i = 1; i < n; ++i)
      if (counts[i] > counts[best]) best = i;
    if (total > kCdfTotal) {
      int64_t take = std::min<int64_t>(total - kCdfTotal, counts[best] - 1);
      if (take <= 0)
        throw invariant_error("quantize_pmf: cannot normalize cdf");
      counts[best] -= take;
      total -= take;
    } else {
      counts[best] += kCdfTotal - total;
      total = kCdfTotal;
    }
  }
  CdfTable t;
  t.offset = offset;
  t.nsym = static_cast<int32_t>(n) - 1;
  t.cdf.resize(n + 1);
  t.cdf[0] = 0;
  for (size_t i = 0; i < n; ++i)
    t.cdf[i + 1] = t.cdf[i] + static_cast<uint32_t>(counts[i]);
  return t;
}

// Table for one element under the conditional Gaussian (scaled domain).
inline CdfTable gaussian_cdf_table(double mu, double sigma,
                                   const SymbolAlphabet& alpha) {
  std::vector<double> pmf(alpha.nsym() + 1);
  double mass = 0.0;
  for (int32_t k = -alpha.lmax; k <= alpha.lmax; ++k) {
    const double p = GaussianConditional::likelihood_plain(k, mu, sigma);
    pmf[k + alpha.lmax] = p;
    mass += p;
  }
  pmf.back() = std::max(1.0 - mass, 0.0);
  return quantize_pmf(pmf, -alpha.lmax);
}

// Per-channel table under the factorized prior.
template <typename T>
CdfTable factorized_cdf_table(const FactorizedPrior<T>& fp, int64_t c,
                              const SymbolAlphabet& alpha) {
  std::vector<double> pmf(alpha.nsym() + 1);
  double mass = 0.0;
  for (int32_t k = -alpha.lmax; k <= alpha.lmax; ++k) {
    const double p = fp.likelihood_plain(c, k);
    pmf[k + alpha.lmax] = std::max(p, 0.0);
    mass += pmf[k + alpha.lmax];
  }
  pmf.back() = std::max(1.0 - mass, 0.0);
  return quantize_pmf(pmf, -alpha.lmax);
}

}  // namespace rdc
