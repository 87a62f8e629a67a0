#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>

#include "rdc/entropy.hpp"
#include "rdc/gain.hpp"
#include "rdc/image.hpp"
#include "rdc/nn.hpp"

namespace rdc {

// How the auxiliary branch was trained / how the decoder derives r:
//   scalable - residual net consumes y_hat + decoded error stream
//   direct   - residual net consumes y_hat alone (ablation, no extra bits)
//   none     - no auxiliary branch (stage-I-only model), r = 0
enum class AuxMode { kScalable, kDirect, kNone };

inline const char* aux_mode_name(AuxMode m) {
  switch (m) {
    case AuxMode::kScalable: return "scalable";
    case AuxMode::kDirect: return "direct";
    default: return "none";
  }
}
inline AuxMode aux_mode_from(const std::string& s) {
  if (s == "scalable") return AuxMode::kScalable;
  if (s == "direct") return AuxMode::kDirect;
  if (s == "none") return AuxMode::kNone;
  throw config_error("unknown aux mode: " + s);
}

struct CodecConfig {
  int64_t cy = 96;      // main latent channels
  int64_t cz = 48;      // hyper latent channels
  int64_t cs = 64;      // auxiliary latent channels
  int64_t hidden = 64;  // backbone width
  int anchors = 6;
  double sigma_min = kSigmaMin;
  std::vector<double> stage1_lambdas = {0.0625, 0.125, 0.25, 0.5, 1.0, 2.0};
  std::vector<double> stage2_lambdas = {0.00018, 0.00036, 0.00072,
                                        0.001,   0.0015,  0.002};
  uint64_t init_seed = 42;
  AuxMode aux_mode = AuxMode::kNone;
  // Coding alphabet bounds, re-estimated from latent statistics after
  // training (tail quantile + margin); escape coding covers the rest.
  int32_t lmax_y = 31, lmax_z = 31, lmax_s = 31;
};

template <typename T>
class CodecModel {
 public:
  explicit CodecModel(CodecConfig cfg) : cfg_(cfg) {
    Rng rng(Rng::splitmix(cfg.init_seed));
    const int64_t h = cfg.hidden;
    ga0_ = Conv2d<T>(params_, "g_a.0", 3, h, 5, 2, 2, rng);
    ga1_ = Conv2d<T>(params_, "g_a.1", h, h, 5, 2, 2, rng);
    ga2_ = Conv2d<T>(params_, "g_a.2", h, h, 5, 2, 2, rng);
    ga3_ = Conv2d<T>(params_, "g_a.3", h, cfg.cy, 5, 2, 2, rng);
    gs0_ = ConvTranspose2d<T>(params_, "g_s.0", cfg.cy, h, 5, 2, 2, 1, rng);
    gs1_ = ConvTranspose2d<T>(params_, "g_s.1", h, h, 5, 2, 2, 1, rng);
    gs2_ = ConvTranspose2d<T>(params_, "g_s.2", h, h, 5, 2, 2, 1, rng);
    // Zero-initialized image head: the initial reconstruction is the bias
    // plane, mid-gray.
    gs3_ = ConvTranspose2d<T>(params_, "g_s.3", h, 3, 5, 2, 2, 1, rng,
                              /*zero_init=*/true, /*bias_init=*/0.5);
    ha0_ = Conv2d<T>(params_, "h_a.0", cfg.cy, h, 5, 2, 2, rng);
    ha1_ = Conv2d<T>(params_, "h_a.1", h, cfg.cz, 5, 2, 2, rng);
    hs0_ = ConvTranspose2d<T>(params_, "h_s.0", cfg.cz, h, 5, 2, 2, 1, rng);
    hs1_ = ConvTranspose2d<T>(params_, "h_s.1", h, 2 * cfg.cy, 5, 2, 2, 1,
                              rng);
    // Start the raw sigma half near 1 so initial likelihoods are sane.
    {
      Tensor<T>& b = params_.find("h_s.1.bias")->value();
      for (int64_t i = cfg.cy; i < 2 * cfg.cy; ++i) b[i] = T(1);
    }
    fp_z_ = FactorizedPrior<T>(params_, "fp_z", cfg.cz, rng);

    se0_ = Conv2d<T>(params_, "aux.se.0", cfg.cy, 32, 1, 1, 0, rng);
    se1_ = Conv2d<T>(params_, "aux.se.1", 32, 32, 3, 1, 1, rng);
    se2_ = Conv2d<T>(params_, "aux.se.2", 32, cfg.cs, 1, 1, 0, rng);
    sd0_ = Conv2d<T>(params_, "aux.sd.0", cfg.cs, 32, 1, 1, 0, rng);
    sd1_ = Conv2d<T>(params_, "aux.sd.1", 32, 32, 3, 1, 1, rng);
    sd2_ = Conv2d<T>(params_, "aux.sd.2", 32, cfg.cy, 1, 1, 0, rng,
                     /*zero_init=*/true);
    rn_in_ = Conv2d<T>(params_, "aux.rn.in", cfg.cy, 24, 1, 1, 0, rng);
    rn_d1_ = ConvTranspose2d<T>(params_, "aux.rn.d1", 24, 24, 5, 2, 2, 1,
                                rng);
    rn_p1_ = Conv2d<T>(params_, "aux.rn.p1", h, 24, 1, 1, 0, rng);
    rn_d2_ = ConvTranspose2d<T>(params_, "aux.rn.d2", 24, 20, 5, 2, 2, 1,
                                rng);
    rn_p2_ = Conv2d<T>(params_, "aux.rn.p2", h, 20, 1, 1, 0, rng);
    rn_d3_ = ConvTranspose2d<T>(params_, "aux.rn.d3", 20, 16, 5, 2, 2, 1,
                                rng);
    rn_p3_ = Conv2d<T>(params_, "aux.rn.p3", h, 16, 1, 1, 0, rng);
    rn_d4_ = ConvTranspose2d<T>(params_, "aux.rn.d4", 16, 12, 5, 2, 2, 1,
                                rng);
    rn_out_ = Conv2d<T>(params_, "aux.rn.out", 12, 3, 3, 1, 1, rng,
                        /*zero_init=*/true);
    fp_s_ = FactorizedPrior<T>(params_, "aux.fp_s", cfg.cs, rng);

    gains_ = GainSet<T>(params_, cfg.anchors, cfg.cy, cfg.cz, cfg.cs);
  }

  const CodecConfig& cfg() const { return cfg_; }
  CodecConfig& cfg() { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const GainSet<T>& gains() const { return gains_; }
  const FactorizedPrior<T>& fp_z() const { return fp_z_; }
  const FactorizedPrior<T>& fp_s() const { return fp_s_; }

  // ---- differentiable passes (inputs/outputs are [B,C,H,W] Vars) ----

  Var<T> run_ga(const Var<T>& x) const {
    using ops::leaky_relu;
    Var<T> t = leaky_relu(ga0_(x));
    t = leaky_relu(ga1_(t));
    t = leaky_relu(ga2_(t));
    return ga3_(t);
  }

  struct SynthesisOut {
    Var<T> x_hat;                 // NOT clipped
    std::array<Var<T>, 3> prior;  // f1 (H/8), f2 (H/4), f3 (H/2)
  };

  SynthesisOut run_gs(const Var<T>& y_hat) const {
    using ops::leaky_relu;
    SynthesisOut out;
    Var<T> f1 = leaky_relu(gs0_(y_hat));
    Var<T> f2 = leaky_relu(gs1_(f1));
    Var<T> f3 = leaky_relu(gs2_(f2));
    out.x_hat = gs3_(f3);
    out.prior = {f1, f2, f3};
    return out;
  }

  Var<T> run_ha(const Var<T>& y_scaled) const {
    return ha1_(ops::leaky_relu(ha0_(y_scaled)));
  }

  std::pair<Var<T>, Var<T>> run_hs(const Var<T>& z_hat) const {
    Var<T> t = hs1_(ops::leaky_relu(hs0_(z_hat)));
    Var<T> mu = ops::slice_channels(t, 0, cfg_.cy);
    Var<T> sigma = ops::lower_bound(
        ops::slice_channels(t, cfg_.cy, 2 * cfg_.cy), cfg_.sigma_min);
    return {mu, sigma};
  }

  Var<T> run_se(const Var<T>& err) const {
    using ops::leaky_relu;
    return se2_(leaky_relu(se1_(leaky_relu(se0_(err)))));
  }

  Var<T> run_sd(const Var<T>& s_hat) const {
    using ops::leaky_relu;
    return sd2_(leaky_relu(sd1_(leaky_relu(sd0_(s_hat)))));
  }

  Var<T> run_rn(const Var<T>& y2_hat,
                const std::array<Var<T>, 3>& prior) const {
    using ops::add;
    using ops::leaky_relu;
    for (int i = 0; i < 3; ++i) {
      const auto& ps = prior[i].value().shape();
      const auto& ys = y2_hat.value().shape();
      if (ps[2] != ys[2] << (i + 1) || ps[3] != ys[3] << (i + 1))
        throw config_error("reconstruct_residual: prior f" +
                           std::to_string(i + 1) + " spatial " +
                           shape_str(ps) + " does not match latent " +
                           shape_str(ys));
    }
    Var<T> t = rn_in_(y2_hat);
    t = leaky_relu(add(rn_d1_(t), rn_p1_(prior[0])));
    t = leaky_relu(add(rn_d2_(t), rn_p2_(prior[1])));
    t = leaky_relu(add(rn_d3_(t), rn_p3_(prior[2])));
    t = leaky_relu(rn_d4_(t));
    return rn_out_(t);
  }

  // ---- plain-tensor operation surface ----

  void check_spatial(int64_t h, int64_t w) const {
    if (h % kSpatialMultiple != 0 || w % kSpatialMultiple != 0)
      throw padding_required_error(
          "input " + std::to_string(h) + "x" + std::to_string(w) +
          " not divisible by " + std::to_string(kSpatialMultiple) +
          "; reflect-pad to the next multiple of " +
          std::to_string(kSpatialMultiple));
  }

  // y = g_a(x); z = h_a(y*G_y) when a gain level is bound, else h_a(y).
  std::pair<Tensor<T>, Tensor<T>> analyze(
      const Tensor<T>& x, std::optional<double> alpha = {}) const {
    if (x.ndim() != 3 || x.dim(0) != 3)
      throw config_error("analyze: expected [3,H,W] image");
    check_spatial(x.dim(1), x.dim(2));
    Var<T> xb = ops::constant(to_batch(x));
    Var<T> y = run_ga(xb);
    Var<T> ys = y;
    if (alpha) {
      Tensor<T> g = gains_.gain_at(StreamKind::kMain, *alpha);
      ys = ops::scale_channels(y, ops::constant(std::move(g)));
    }
    Var<T> z = run_ha(ys);
    return {y.value().reshaped({cfg_.cy, x.dim(1) / 16, x.dim(2) / 16}),
            z.value().reshaped({cfg_.cz, x.dim(1) / 64, x.dim(2) / 64})};
  }

  struct Synthesis3 {
    Tensor<T> x_hat;  // [3,16h,16w], not clipped
    std::array<Tensor<T>, 3> prior;
  };

  Synthesis3 synthesize(const Tensor<T>& y_hat) const {
    if (y_hat.ndim() != 3)
      throw config_error("synthesize: expected [C,h,w] latent");
    SynthesisOut out = run_gs(ops::constant(
        y_hat.reshaped({1, y_hat.dim(0), y_hat.dim(1), y_hat.dim(2)})));
    Synthesis3 r;
    r.x_hat = from_batch(out.x_hat.value());
    for (int i = 0; i < 3; ++i) r.prior[i] = from_batch(out.prior[i].value());
    return r;
  }

  std::pair<Tensor<T>, Tensor<T>> hyper_decode(const Tensor<T>& z_hat) const {
    if (z_hat.ndim() != 3)
      throw config_error("hyper_decode: expected [C,h,w] latent");
    auto [mu, sigma] = run_hs(ops::constant(
        z_hat.reshaped({1, z_hat.dim(0), z_hat.dim(1), z_hat.dim(2)})));
    return {from_batch(mu.value()), from_batch(sigma.value())};
  }

  Tensor<T> scalable_encode(const Tensor<T>& err) const {
    if (err.ndim() != 3)
      throw config_error("scalable_encode: expected [C,h,w]");
    return from_batch(
        run_se(ops::constant(
                   err.reshaped({1, err.dim(0), err.dim(1), err.dim(2)})))
            .value());
  }

  Tensor<T> scalable_decode(const Tensor<T>& s_hat) const {
    if (s_hat.ndim() != 3)
      throw config_error("scalable_decode: expected [C,h,w]");
    return from_batch(
        run_sd(ops::constant(s_hat.reshaped(
                   {1, s_hat.dim(0), s_hat.dim(1), s_hat.dim(2)})))
            .value());
  }

  Tensor<T> reconstruct_residual(const Tensor<T>& y2_hat,
                                 const std::array<Tensor<T>, 3>& prior) const {
    std::array<Var<T>, 3> pv;
    for (int i = 0; i < 3; ++i)
      pv[i] = ops::constant(prior[i].reshaped({1, prior[i].dim(0),
                                               prior[i].dim(1),
                                               prior[i].dim(2)}));
    Var<T> y2 = ops::constant(y2_hat.reshaped(
        {1, y2_hat.dim(0), y2_hat.dim(1), y2_hat.dim(2)}));
    return from_batch(run_rn(y2, pv).value());
  }

  // Parameter budget per the module split (entropy models and gain vectors
  // are counted in neither stack).
  int64_t transform_stack_params() const {
    return params_.count_params("g_a.") + params_.count_params("g_s.") +
           params_.count_params("h_a.") + params_.count_params("h_s.");
  }
  int64_t auxiliary_stack_params() const {
    return params_.count_params("aux.se.") + params_.count_params("aux.sd.") +
           params_.count_params("aux.rn.");
  }

  // Stage-II freeze: everything except the auxiliary branch and its gains.
  void freeze_primary() {
    params_.set_trainable("", false);
    params_.set_trainable("aux.", true);
    params_.set_trainable("gain.s.", true);
  }
  uint64_t primary_hash() const {
    uint64_t h = params_.hash("g_a.") ^ (params_.hash("g_s.") * 3) ^
                 (params_.hash("h_a.") * 5) ^ (params_.hash("h_s.") * 7) ^
                 (params_.hash("fp_z.") * 11) ^ (params_.hash("gain.y.") * 13) ^
                 (params_.hash("gain.z.") * 17);
    return h;
  }

 private:
  CodecConfig cfg_;
  ParamStore<T> params_;
  Conv2d<T> ga0_, ga1_, ga2_, ga3_;
  ConvTranspose2d<T> gs0_, gs1_, gs2_, gs3_;
  Conv2d<T> ha0_, ha1_;
  ConvTranspose2d<T> hs0_, hs1_;
  Conv2d<T> se0_, se1_, se2_, sd0_, sd1_, sd2_;
  Conv2d<T> rn_in_, rn_p1_, rn_p2_, rn_p3_, rn_out_;
  ConvTranspose2d<T> rn_d1_, rn_d2_, rn_d3_, rn_d4_;
  FactorizedPrior<T> fp_z_, fp_s_;
  GainSet<T> gains_;
};

}  // namespace rdc
