#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>
#include <vector>

#include "rdc/container.hpp"
#include "rdc/contrastive.hpp"
#include "rdc/dataset.hpp"
#include "rdc/train.hpp"

namespace rdc {

// --------------------------------------------------------------------------
// Scalar metrics.
// --------------------------------------------------------------------------

inline double bpp(double total_bits, int64_t h, int64_t w) {
  if (total_bits <= 0 || h <= 0 || w <= 0)
    throw range_error("bpp: arguments must be positive");
  return total_bits / (static_cast<double>(h) * w);
}

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& x_hat) {
  check_same_shape(x, x_hat, "psnr");
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double d = (double)x[i] - x_hat[i];
    acc += d * d;
  }
  const double mse = acc / x.numel();
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// --------------------------------------------------------------------------
// Bjontegaard deltas: cubic least-squares fit in the log10-rate domain,
// integrated analytically over the overlapping interval.
// --------------------------------------------------------------------------

struct RateQualityPoint {
  double rate;
  double quality;
};

namespace bd_detail {

// Least-squares cubic through (x,y), x centered for conditioning.
struct Cubic {
  double c0, c1, c2, c3, center;
  double integral(double lo, double hi) const {
    auto anti = [this](double x) {
      const double u = x - center;
      return c0 * u + c1 * u * u / 2 + c2 * u * u * u / 3 +
             c3 * u * u * u * u / 4;
    };
    return anti(hi) - anti(lo);
  }
};

inline Cubic fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() < 4)
    throw range_error("bd_metric: need at least 4 points per curve");
  long double cx = 0;
  for (double x : xs) cx += x;
  cx /= xs.size();
  long double a[4][5] = {};
  for (size_t i = 0; i < xs.size(); ++i) {
    const long double u = xs[i] - cx;
    long double pw[4] = {1, u, u * u, u * u * u};
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) a[r][c] += pw[r] * pw[c];
      a[r][4] += pw[r] * (long double)ys[i];
    }
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs((double)a[r][col]) > std::abs((double)a[piv][col]))
        piv = r;
    for (int c = 0; c < 5; ++c) std::swap(a[col][c], a[piv][c]);
    if (a[col][col] == 0) throw range_error("bd_metric: degenerate fit");
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const long double f = a[r][col] / a[col][col];
      for (int c = col; c < 5; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Cubic out;
  out.c0 = static_cast<double>(a[0][4] / a[0][0]);
  out.c1 = static_cast<double>(a[1][4] / a[1][1]);
  out.c2 = static_cast<double>(a[2][4] / a[2][2]);
  out.c3 = static_cast<double>(a[3][4] / a[3][3]);
  out.center = static_cast<double>(cx);
  return out;
}

inline void split(const std::vector<RateQualityPoint>& curve, bool log_rate_x,
                  std::vector<double>& xs, std::vector<double>& ys) {
  for (const auto& p : curve) {
    if (p.rate <= 0) throw range_error("bd_metric: rates must be positive");
    if (log_rate_x) {
      xs.push_back(std::log10(p.rate));
      ys.push_back(p.quality);
    } else {
      xs.push_back(p.quality);
      ys.push_back(std::log10(p.rate));
    }
  }
}

inline std::pair<double, double> overlap(const std::vector<double>& xa,
                                         const std::vector<double>& xb) {
  const double lo = std::max(*std::min_element(xa.begin(), xa.end()),
                             *std::min_element(xb.begin(), xb.end()));
  const double hi = std::min(*std::max_element(xa.begin(), xa.end()),
                             *std::max_element(xb.begin(), xb.end()));
  if (!(lo < hi))
    throw range_error("bd_metric: curves have no overlapping range");
  return {lo, hi};
}

}  // namespace bd_detail

// Average vertical (quality) gap of curve_b over curve_a.
inline double bd_quality(const std::vector<RateQualityPoint>& curve_a,
                         const std::vector<RateQualityPoint>& curve_b) {
  std::vector<double> xa, ya, xb, yb;
  bd_detail::split(curve_a, true, xa, ya);
  bd_detail::split(curve_b, true, xb, yb);
  auto [lo, hi] = bd_detail::overlap(xa, xb);
  const auto fa = bd_detail::fit(xa, ya);
  const auto fb = bd_detail::fit(xb, yb);
  return (fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
}

// Average horizontal (rate) gap, in percent.
inline double bd_rate_percent(const std::vector<RateQualityPoint>& curve_a,
                              const std::vector<RateQualityPoint>& curve_b) {
  std::vector<double> xa, ya, xb, yb;
  bd_detail::split(curve_a, false, xa, ya);
  bd_detail::split(curve_b, false, xb, yb);
  auto [lo, hi] = bd_detail::overlap(xa, xb);
  const auto fa = bd_detail::fit(xa, ya);
  const auto fb = bd_detail::fit(xb, yb);
  const double delta =
      (fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
  return (std::pow(10.0, delta) - 1.0) * 100.0;
}

// --------------------------------------------------------------------------
// Spectra: radix-2 FFT on the luma plane, high-frequency energy ratio with
// the low band defined as at most 1/4 Nyquist along both axes.
// --------------------------------------------------------------------------

namespace fft_detail {

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2 : -2) * 3.14159265358979323846 / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1);
      for (size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace fft_detail

// |F| of the luma plane, padded up to powers of two.
template <typename T>
Tensor<double> spectrum_magnitude(const Tensor<T>& image) {
  const int64_t h = image.dim(image.ndim() - 2),
                w = image.dim(image.ndim() - 1);
  const int64_t ph = fft_detail::next_pow2(h), pw = fft_detail::next_pow2(w);
  std::vector<std::vector<std::complex<double>>> rows(
      ph, std::vector<std::complex<double>>(pw));
  const bool rgb = image.ndim() == 3;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double v = rgb ? ((double)image.at3(0, y, x) + image.at3(1, y, x) +
                        image.at3(2, y, x)) /
                           3.0
                     : (double)image.at2(y, x);
      rows[y][x] = v;
    }
  for (auto& r : rows) fft_detail::fft_inplace(r, false);
  Tensor<double> mag({ph, pw});
  std::vector<std::complex<double>> col(ph);
  for (int64_t x = 0; x < pw; ++x) {
    for (int64_t y = 0; y < ph; ++y) col[y] = rows[y][x];
    fft_detail::fft_inplace(col, false);
    for (int64_t y = 0; y < ph; ++y) mag.at2(y, x) = std::abs(col[y]);
  }
  return mag;
}

// Fraction of spectral energy above 1/4 Nyquist in either axis.
template <typename T>
double hf_energy_ratio(const Tensor<T>& image) {
  Tensor<double> mag = spectrum_magnitude(image);
  const int64_t h = mag.dim(0), w = mag.dim(1);
  double total = 0, low = 0;
  for (int64_t y = 0; y < h; ++y) {
    const int64_t fy = std::min(y, h - y);
    for (int64_t x = 0; x < w; ++x) {
      const int64_t fx = std::min(x, w - x);
      const double e = mag.at2(y, x) * mag.at2(y, x);
      total += e;
      if (fy <= h / 8 && fx <= w / 8) low += e;
    }
  }
  return total > 0 ? 1.0 - low / total : 0.0;
}

// fftshifted log-magnitude as an 8-bit plane for report images.
inline std::vector<uint8_t> spectrum_to_gray(const Tensor<double>& mag) {
  const int64_t h = mag.dim(0), w = mag.dim(1);
  std::vector<uint8_t> out(static_cast<size_t>(h) * w);
  double mx = 0;
  for (int64_t i = 0; i < mag.numel(); ++i)
    mx = std::max(mx, std::log1p(mag[i]));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const int64_t sy = (y + h / 2) % h, sx = (x + w / 2) % w;
      const double v = std::log1p(mag.at2(sy, sx)) / (mx > 0 ? mx : 1.0);
      out[y * w + x] = static_cast<uint8_t>(std::lround(255.0 * v));
    }
  return out;
}

// --------------------------------------------------------------------------
// Trade-off surface.
// --------------------------------------------------------------------------

struct RDCPoint {
  double alpha = 0, beta = 0, alpha_s = 0;
  double bpp = 0, psnr_db = 0, probe_acc = 0;
  std::string error;  // empty on success
};

struct TradeoffSurface {
  std::vector<RDCPoint> points;

  std::string csv() const {
    std::ostringstream out;
    out << "alpha,beta,alpha_s,bpp,psnr_db,probe_acc,error\n";
    out << std::setprecision(10);
    for (const auto& p : points)
      out << p.alpha << "," << p.beta << "," << p.alpha_s << "," << p.bpp
          << "," << p.psnr_db << "," << p.probe_acc << "," << p.error
          << "\n";
    return out.str();
  }

  const RDCPoint* at(double alpha, double beta) const {
    for (const auto& p : points)
      if (std::abs(p.alpha - alpha) < 1e-12 &&
          std::abs(p.beta - beta) < 1e-12)
        return &p;
    return nullptr;
  }
  bool complete() const {
    for (const auto& p : points)
      if (!p.error.empty()) return false;
    return true;
  }
};

struct SweepOptions {
  std::vector<double> alphas = {0.0, 0.5, 1.0};
  std::vector<double> betas = {0.0, 0.5, 1.0};
  double alpha_s = 1.0;
  int jobs = 1;
};

// Full alpha x beta grid on real coded containers. One stream per alpha is
// reused across the beta column (beta is decoder-side only).
template <typename T>
TradeoffSurface sweep_surface(const CodecModel<T>& model,
                              const CognitionProxy<T>& proxy,
                              const Dataset<T>& ds,
                              const SweepOptions& opt) {
  const bool aux = model.cfg().aux_mode == AuxMode::kScalable;
  TradeoffSurface surf;
  surf.points.resize(opt.alphas.size() * opt.betas.size());

  std::atomic<size_t> next{0};
  auto run_alpha = [&](size_t ai) {
    const double alpha = opt.alphas[ai];
    try {
      std::vector<std::vector<uint8_t>> streams(ds.size());
      double mean_bpp = 0;
      for (size_t i = 0; i < ds.size(); ++i) {
        auto comp =
            aux ? compress(model, ds.image(i), alpha, opt.alpha_s)
                : compress(model, ds.image(i), alpha);
        mean_bpp += comp.bpp();
        streams[i] = std::move(comp.bytes);
      }
      mean_bpp /= ds.size();
      for (size_t bi = 0; bi < opt.betas.size(); ++bi) {
        const double beta = opt.betas[bi];
        RDCPoint& pt = surf.points[ai * opt.betas.size() + bi];
        pt.alpha = alpha;
        pt.beta = beta;
        pt.alpha_s = aux ? opt.alpha_s : 0.0;
        pt.bpp = mean_bpp;
        double mean_psnr = 0;
        std::vector<Tensor<T>> recon;
        std::vector<int> labels;
        recon.reserve(ds.size());
        for (size_t i = 0; i < ds.size(); ++i) {
          auto dec = decompress(model, streams[i], beta);
          const double p = psnr(ds.image(i), dec.image);
          mean_psnr += std::isinf(p) ? 99.0 : p;
          recon.push_back(std::move(dec.image));
          labels.push_back(ds.label(i));
        }
        pt.psnr_db = mean_psnr / ds.size();
        pt.probe_acc = probe_accuracy(proxy, recon, labels);
      }
    } catch (const std::exception& e) {
      for (size_t bi = 0; bi < opt.betas.size(); ++bi) {
        RDCPoint& pt = surf.points[ai * opt.betas.size() + bi];
        pt.alpha = alpha;
        pt.beta = opt.betas[bi];
        pt.error = e.what();
      }
    }
  };

  if (opt.jobs <= 1) {
    for (size_t ai = 0; ai < opt.alphas.size(); ++ai) run_alpha(ai);
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < opt.jobs; ++j)
      pool.emplace_back([&] {
        for (;;) {
          const size_t ai = next.fetch_add(1);
          if (ai >= opt.alphas.size()) return;
          run_alpha(ai);
        }
      });
    for (auto& th : pool) th.join();
  }
  return surf;
}

// --------------------------------------------------------------------------
// Paper-style diagnostics for one image: pixel histograms (pre-clip),
// spectra with HF ratios, per-channel |d x_hat / d y_hat| and latent
// energies.
// --------------------------------------------------------------------------

struct DiagnosticsReport {
  double hist_lo = -4.0, hist_hi = 6.0;
  int bins = 200;
  std::vector<int64_t> hist_x, hist_x1, hist_x2;
  double oor_frac_x1 = 0;  // fraction of x1 pixels outside [-0.05, 1.05]
  double hf_ratio_x = 0, hf_ratio_x1 = 0, hf_ratio_x2 = 0;
  std::vector<double> grad_x1, grad_x2;      // per channel of y_hat
  std::vector<double> energy_y, energy_y2;   // per channel mean square
  Tensor<double> spec_x, spec_x1, spec_x2;
};

template <typename T>
std::vector<int64_t> histogram(const Tensor<T>& t, double lo, double hi,
                               int bins) {
  std::vector<int64_t> h(bins, 0);
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double v = t[i];
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++h[b];
  }
  return h;
}

template <typename T>
DiagnosticsReport diagnostics(const CodecModel<T>& model, const Tensor<T>& x,
                              const std::vector<uint8_t>& stream) {
  DiagnosticsReport rep;
  auto d0 = decompress(model, stream, 0.0);  // distortion endpoint
  auto d1 = decompress(model, stream, 1.0);  // cognition endpoint
  const Tensor<T>& x1 = d1.xbar_preclip;
  const Tensor<T>& x2 = d0.xbar_preclip;

  rep.hist_x = histogram(x, rep.hist_lo, rep.hist_hi, rep.bins);
  rep.hist_x1 = histogram(x1, rep.hist_lo, rep.hist_hi, rep.bins);
  rep.hist_x2 = histogram(x2, rep.hist_lo, rep.hist_hi, rep.bins);
  int64_t oor = 0;
  for (int64_t i = 0; i < x1.numel(); ++i)
    if (x1[i] < T(-0.05) || x1[i] > T(1.05)) ++oor;
  rep.oor_frac_x1 = static_cast<double>(oor) / x1.numel();

  rep.spec_x = spectrum_magnitude(x);
  rep.spec_x1 = spectrum_magnitude(x1);
  rep.spec_x2 = spectrum_magnitude(x2);
  rep.hf_ratio_x = hf_energy_ratio(x);
  rep.hf_ratio_x1 = hf_energy_ratio(x1);
  rep.hf_ratio_x2 = hf_energy_ratio(x2);

  // Mean |gradient| of the reconstruction means w.r.t. y_hat channels.
  const Tensor<T>& yhat = d0.y_hat;
  const int64_t cy = yhat.dim(1), hw = yhat.dim(2) * yhat.dim(3);
  {
    Var<T> leaf(yhat, /*requires_grad=*/true);
    auto synth = model.run_gs(leaf);
    ops::mean(synth.x_hat).backward();
    rep.grad_x1.resize(cy);
    for (int64_t c = 0; c < cy; ++c) {
      double acc = 0;
      for (int64_t i = 0; i < hw; ++i)
        acc += std::abs((double)leaf.grad().data()[c * hw + i]);
      rep.grad_x1[c] = acc / hw;
    }
  }
  {
    Var<T> leaf(yhat, /*requires_grad=*/true);
    auto synth = model.run_gs(leaf);
    Var<T> y2 = leaf;
    if (!d0.s_hat.empty()) {
      Tensor<T> err_hat = model.run_sd(ops::constant(d0.s_hat)).value();
      y2 = ops::add(leaf, ops::constant(std::move(err_hat)));
    }
    Var<T> r = model.run_rn(y2, synth.prior);
    Var<T> x2v = ops::add(synth.x_hat, r);
    ops::mean(x2v).backward();
    rep.grad_x2.resize(cy);
    for (int64_t c = 0; c < cy; ++c) {
      double acc = 0;
      for (int64_t i = 0; i < hw; ++i)
        acc += std::abs((double)leaf.grad().data()[c * hw + i]);
      rep.grad_x2[c] = acc / hw;
    }
  }

  rep.energy_y.resize(cy);
  rep.energy_y2.resize(cy);
  Tensor<T> y2_hat = yhat;
  if (!d0.s_hat.empty()) {
    Tensor<T> err_hat = model.run_sd(ops::constant(d0.s_hat)).value();
    for (int64_t i = 0; i < y2_hat.numel(); ++i) y2_hat[i] += err_hat[i];
  }
  for (int64_t c = 0; c < cy; ++c) {
    double ey = 0, ey2 = 0;
    for (int64_t i = 0; i < hw; ++i) {
      ey += (double)yhat.data()[c * hw + i] * yhat.data()[c * hw + i];
      ey2 += (double)y2_hat.data()[c * hw + i] * y2_hat.data()[c * hw + i];
    }
    rep.energy_y[c] = ey / hw;
    rep.energy_y2[c] = ey2 / hw;
  }
  return rep;
}

inline void write_diagnostics(const std::string& dir,
                              const DiagnosticsReport& rep) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream f(fs::path(dir) / "histograms.csv");
    f << "bin_lo,bin_hi,count_x,count_x1,count_x2\n";
    const double step = (rep.hist_hi - rep.hist_lo) / rep.bins;
    for (int b = 0; b < rep.bins; ++b)
      f << rep.hist_lo + b * step << "," << rep.hist_lo + (b + 1) * step
        << "," << rep.hist_x[b] << "," << rep.hist_x1[b] << ","
        << rep.hist_x2[b] << "\n";
  }
  {
    std::ofstream f(fs::path(dir) / "channels.csv");
    f << "channel,grad_x1,grad_x2,energy_y,energy_y2\n";
    for (size_t c = 0; c < rep.grad_x1.size(); ++c)
      f << c << "," << rep.grad_x1[c] << "," << rep.grad_x2[c] << ","
        << rep.energy_y[c] << "," << rep.energy_y2[c] << "\n";
  }
  {
    std::ofstream f(fs::path(dir) / "summary.csv");
    f << "metric,value\n";
    f << "hf_ratio_x," << rep.hf_ratio_x << "\n";
    f << "hf_ratio_x1," << rep.hf_ratio_x1 << "\n";
    f << "hf_ratio_x2," << rep.hf_ratio_x2 << "\n";
    f << "oor_frac_x1," << rep.oor_frac_x1 << "\n";
  }
  auto dump_spec = [&dir](const char* name, const Tensor<double>& mag) {
    write_pgm((fs::path(dir) / name).string(), spectrum_to_gray(mag),
              mag.dim(0), mag.dim(1));
  };
  dump_spec("spectrum_x.pgm", rep.spec_x);
  dump_spec("spectrum_x1.pgm", rep.spec_x1);
  dump_spec("spectrum_x2.pgm", rep.spec_x2);
}

}  // namespace rdc
