#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rdc/container.hpp"
#include "rdc/contrastive.hpp"
#include "rdc/dataset.hpp"
#include "rdc/train_ops.hpp"

namespace rdc {

// --------------------------------------------------------------------------
// Configs. Distortion terms follow the 8-bit convention (pixels scaled by
// 255 before squaring) so the published lambda ranges are on their native
// scale; lambda_local stays at its fixed value.
// --------------------------------------------------------------------------

struct StageIConfig {
  std::vector<double> lambdas;  // defaults to the model's anchor set
  double lambda_local = 1e-5;
  double contrast_scale = 1.0;  // calibration knob for the toy backbone
  int64_t steps = 700;
  int64_t batch = 4;
  double lr = 1e-4;
  uint64_t seed = 1;
};

struct StageIIConfig {
  std::vector<double> lambdas;
  int64_t steps = 500;
  int64_t batch = 4;
  double lr = 1e-4;
  uint64_t seed = 1;
  bool scalable_stream = true;  // false: ablation, residual net on y_hat only
};

// Aborts when the loss stays above 1e3x the initial value for 100
// consecutive steps.
class DivergenceDetector {
 public:
  void observe(double loss, const char* stage) {
    if (!std::isfinite(loss))
      throw divergence_error(std::string(stage) + ": non-finite loss");
    if (first_) {
      initial_ = std::abs(loss) + 1e-12;
      first_ = false;
      return;
    }
    if (loss > 1e3 * initial_) {
      if (++streak_ >= 100)
        throw divergence_error(std::string(stage) +
                               ": loss exceeded 1000x initial for 100 steps");
    } else {
      streak_ = 0;
    }
  }

 private:
  bool first_ = true;
  double initial_ = 0;
  int streak_ = 0;
};

namespace train_detail {

template <typename T>
Tensor<T> uniform_noise_like(const Shape& shape, Rng& rng) {
  Tensor<T> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.uniform(-0.5, 0.5));
  return t;
}

inline void check_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw divergence_error(std::string("NaN/inf in loss term: ") + term);
}

}  // namespace train_detail

// --------------------------------------------------------------------------
// Stage I: rates + lambda_n * InfoNCE + lambda_local * out-of-range MSE.
// --------------------------------------------------------------------------

template <typename T>
struct Stage1Terms {
  Var<T> total;
  double rate_y = 0, rate_z = 0;  // bpp
  double contrast = 0, local = 0;
  Tensor<T> keys;  // momentum keys, enqueued by the caller after the step
};

template <typename T>
Stage1Terms<T> stage1_loss(const CodecModel<T>& model,
                           const CognitionProxy<T>& proxy,
                           const NegativeQueue<T>& queue,
                           const Tensor<T>& x4, const Tensor<T>& keys_aug,
                           int anchor, double lambda_n,
                           const StageIConfig& cfg, Rng& noise_rng) {
  using namespace ops;
  using train_detail::uniform_noise_like;
  const int64_t npix = x4.dim(0) * x4.dim(2) * x4.dim(3);

  Var<T> x = constant(x4);
  Var<T> y = model.run_ga(x);
  Var<T> gy = model.gains().anchor_gain(StreamKind::kMain, anchor);
  Var<T> gy_inv = model.gains().anchor_inverse_gain(StreamKind::kMain, anchor);
  Var<T> ys = scale_channels(y, gy);
  Var<T> z = model.run_ha(ys);
  Var<T> gz = model.gains().anchor_gain(StreamKind::kHyper, anchor);
  Var<T> gz_inv =
      model.gains().anchor_inverse_gain(StreamKind::kHyper, anchor);
  Var<T> zs = scale_channels(z, gz);
  Var<T> zs_hat = add(
      zs, constant(uniform_noise_like<T>(zs.value().shape(), noise_rng)));
  Var<T> bits_z = model.fp_z().total_bits(zs_hat);
  Var<T> z_hat = scale_channels(zs_hat, gz_inv);
  auto [mu, sigma] = model.run_hs(z_hat);
  Var<T> ys_hat = add(
      ys, constant(uniform_noise_like<T>(ys.value().shape(), noise_rng)));
  Var<T> bits_y = GaussianConditional::total_bits(
      ys_hat, scale_channels(mu, gy), scale_channels(sigma, gy));
  Var<T> y_hat = scale_channels(ys_hat, gy_inv);
  auto synth = model.run_gs(y_hat);

  Var<T> q = proxy.embed(synth.x_hat);
  Tensor<T> keys = proxy.embed_plain(keys_aug, /*momentum=*/true);
  Var<T> contrast = info_nce(q, keys, queue.snapshot(), proxy.cfg().tau);
  Var<T> local = local_mse_term(synth.x_hat, x);

  Stage1Terms<T> t;
  t.rate_y = bits_y.value()[0] / npix;
  t.rate_z = bits_z.value()[0] / npix;
  t.contrast = contrast.value()[0];
  t.local = local.value()[0];
  train_detail::check_finite(t.rate_y, "R(y_hat)");
  train_detail::check_finite(t.rate_z, "R(z_hat)");
  train_detail::check_finite(t.contrast, "contrastive");
  train_detail::check_finite(t.local, "local_mse");

  Var<T> rate = affine(add(bits_y, bits_z), 1.0 / npix, 0.0);
  Var<T> cog = affine(contrast, lambda_n * cfg.contrast_scale, 0.0);
  Var<T> pen = affine(local, cfg.lambda_local * kPixelScale * kPixelScale,
                      0.0);
  t.total = add(add(rate, cog), pen);
  t.keys = std::move(keys);
  return t;
}

template <typename T>
struct TrainResult {
  double final_loss = 0;
  std::vector<double> anchor_rate_bpp;  // estimated bpp per anchor (last log)
};

// One optimization step per call; (lambda_n, gain anchor n) are drawn
// jointly. Keys enter the negative queue after the loss step.
template <typename T>
TrainResult<T> train_stage1(CodecModel<T>& model, CognitionProxy<T>& proxy,
                            const Dataset<T>& train, const StageIConfig& cfg,
                            const std::string& log_path = {},
                            std::function<void(int64_t, double)> progress = {}) {
  if (!proxy.frozen())
    throw invariant_error("stage I requires a frozen cognition encoder");
  std::vector<double> lambdas =
      cfg.lambdas.empty() ? model.cfg().stage1_lambdas : cfg.lambdas;
  const uint64_t h0 = proxy.encoder_hash();

  Rng order_rng(Rng::splitmix(cfg.seed * 11 + 1));
  Rng aug_rng(Rng::splitmix(cfg.seed * 11 + 2));
  Rng noise_rng(Rng::splitmix(cfg.seed * 11 + 3));
  Rng anchor_rng(Rng::splitmix(cfg.seed * 11 + 4));
  Rng prefill_rng(Rng::splitmix(cfg.seed * 11 + 5));

  NegativeQueue<T> queue(proxy.cfg().queue, proxy.cfg().embed_dim);
  // Warm the queue with momentum keys of augmented training images so the
  // contrastive term starts at its full scale.
  while (!queue.warm()) {
    const int64_t pb =
        std::min<int64_t>(64, queue.capacity() - queue.size());
    const auto idx = train.sample_indices(pb, prefill_rng);
    Tensor<T> xb({pb, 3, train.image(idx[0]).dim(1),
                  train.image(idx[0]).dim(2)});
    for (int64_t b = 0; b < pb; ++b) {
      Tensor<T> a = augment(train.image(idx[b]), prefill_rng);
      std::copy_n(a.data(), a.numel(), xb.data() + b * a.numel());
    }
    queue.enqueue_rows(proxy.embed_plain(xb, /*momentum=*/true));
  }
  Adam<T> opt(model.params(), cfg.lr);
  DivergenceDetector div;
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    log << "step,lambda_n,anchor,loss,rate_y_bpp,rate_z_bpp,contrast,local_"
           "mse\n";
  }

  TrainResult<T> result;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const auto idx = train.sample_indices(cfg.batch, order_rng);
    Tensor<T> x4 = train.batch(idx);
    Tensor<T> keys_aug(x4.shape());
    for (size_t b = 0; b < idx.size(); ++b) {
      Tensor<T> a = augment(train.image(idx[b]), aug_rng);
      std::copy_n(a.data(), a.numel(), keys_aug.data() + b * a.numel());
    }
    const int anchor =
        static_cast<int>(anchor_rng.uniform_int(0, lambdas.size() - 1));
    Stage1Terms<T> terms = stage1_loss(model, proxy, queue, x4, keys_aug,
                                       anchor, lambdas[anchor], cfg,
                                       noise_rng);
    opt.zero_grad();
    terms.total.backward();
    opt.step();
    queue.enqueue_rows(terms.keys);

    const double loss = terms.total.value()[0];
    div.observe(loss, "stage I");
    result.final_loss = loss;
    if (log.is_open())
      log << step << "," << lambdas[anchor] << "," << anchor << "," << loss
          << "," << terms.rate_y << "," << terms.rate_z << ","
          << terms.contrast << "," << terms.local << "\n";
    if (progress) progress(step, loss);
  }
  if (proxy.encoder_hash() != h0)
    throw invariant_error("cognition encoder changed during stage I");
  return result;
}

// --------------------------------------------------------------------------
// Stage II: R(s_hat) + lambda_m * MSE(x, x2). Primary branch runs in round
// mode and stays frozen; only the auxiliary branch and its gains update.
// --------------------------------------------------------------------------

template <typename T>
struct Stage2Terms {
  Var<T> total;
  double rate_s = 0;    // bpp
  double mse255 = 0;    // distortion on the 8-bit scale
  double psnr_db = 0;
};

template <typename T>
Stage2Terms<T> stage2_loss(const CodecModel<T>& model, const Tensor<T>& x4,
                           int primary_anchor, int aux_anchor,
                           double lambda_m, bool scalable_stream,
                           Rng& noise_rng) {
  using namespace ops;
  using train_detail::uniform_noise_like;
  const int64_t npix = x4.dim(0) * x4.dim(2) * x4.dim(3);

  // Frozen primary pass, round-mode quantization (plain tensors).
  Tensor<T> y =
      model.run_ga(constant(x4)).value();
  Tensor<T> gy = model.gains().gain_at(
      StreamKind::kMain,
      model.cfg().anchors > 1
          ? static_cast<double>(primary_anchor) / (model.cfg().anchors - 1)
          : 0.0);
  Tensor<T> y_hat = quantize(y, gy, QuantizeMode::kRound);
  auto synth = model.run_gs(constant(y_hat));

  Var<T> x2;
  Stage2Terms<T> t;
  Var<T> bits_s;
  if (scalable_stream) {
    Tensor<T> err(y.shape());
    for (int64_t i = 0; i < err.numel(); ++i) err[i] = y[i] - y_hat[i];
    Var<T> s = model.run_se(constant(err));
    Var<T> gs = model.gains().anchor_gain(StreamKind::kAux, aux_anchor);
    Var<T> gs_inv =
        model.gains().anchor_inverse_gain(StreamKind::kAux, aux_anchor);
    Var<T> ss = scale_channels(s, gs);
    Var<T> ss_hat = add(
        ss, constant(uniform_noise_like<T>(ss.value().shape(), noise_rng)));
    bits_s = model.fp_s().total_bits(ss_hat);
    Var<T> s_hat = scale_channels(ss_hat, gs_inv);
    Var<T> err_hat = model.run_sd(s_hat);
    Var<T> y2 = add(constant(y_hat), err_hat);
    Var<T> r = model.run_rn(y2, synth.prior);
    x2 = add(synth.x_hat, r);
  } else {
    Var<T> r = model.run_rn(constant(y_hat), synth.prior);
    x2 = add(synth.x_hat, r);
  }

  Var<T> dist255 = affine(mse(x2, constant(x4)),
                          kPixelScale * kPixelScale, 0.0);
  t.mse255 = dist255.value()[0];
  const double mse01 = t.mse255 / (kPixelScale * kPixelScale);
  t.psnr_db = mse01 > 0 ? 10.0 * std::log10(1.0 / mse01) : 1e9;
  train_detail::check_finite(t.mse255, "D(x,x2)");
  if (scalable_stream) {
    t.rate_s = bits_s.value()[0] / npix;
    train_detail::check_finite(t.rate_s, "R(s_hat)");
    t.total = add(affine(bits_s, 1.0 / npix, 0.0),
                  affine(dist255, lambda_m, 0.0));
  } else {
    t.total = affine(dist255, lambda_m, 0.0);
  }
  return t;
}

template <typename T>
TrainResult<T> train_stage2(CodecModel<T>& model, const Dataset<T>& train,
                            const StageIIConfig& cfg,
                            const std::string& log_path = {},
                            std::function<void(int64_t, double)> progress = {}) {
  std::vector<double> lambdas =
      cfg.lambdas.empty() ? model.cfg().stage2_lambdas : cfg.lambdas;
  model.freeze_primary();
  model.cfg().aux_mode =
      cfg.scalable_stream ? AuxMode::kScalable : AuxMode::kDirect;
  const uint64_t h0 = model.primary_hash();

  Rng order_rng(Rng::splitmix(cfg.seed * 13 + 1));
  Rng noise_rng(Rng::splitmix(cfg.seed * 13 + 2));
  Rng anchor_rng(Rng::splitmix(cfg.seed * 13 + 3));

  Adam<T> opt(model.params(), cfg.lr);
  DivergenceDetector div;
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    log << "step,lambda_m,aux_anchor,primary_anchor,loss,rate_s_bpp,mse255,"
           "psnr_db\n";
  }

  TrainResult<T> result;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const auto idx = train.sample_indices(cfg.batch, order_rng);
    Tensor<T> x4 = train.batch(idx);
    const int pa =
        static_cast<int>(anchor_rng.uniform_int(0, model.cfg().anchors - 1));
    const int ma =
        static_cast<int>(anchor_rng.uniform_int(0, lambdas.size() - 1));
    Stage2Terms<T> terms = stage2_loss(model, x4, pa, ma, lambdas[ma],
                                       cfg.scalable_stream, noise_rng);
    opt.zero_grad();
    terms.total.backward();
    // Freeze contract: no gradient may reach a frozen parameter.
    for (const auto& [name, var] : model.params().items()) {
      if (var.requires_grad()) continue;
      if (var.node()->grad_alloc)
        for (int64_t i = 0; i < var.grad().numel(); ++i)
          if (var.grad()[i] != T(0))
            throw invariant_error("gradient reached frozen parameter " +
                                  name);
    }
    opt.step();

    const double loss = terms.total.value()[0];
    div.observe(loss, "stage II");
    result.final_loss = loss;
    if (log.is_open())
      log << step << "," << lambdas[ma] << "," << ma << "," << pa << ","
          << loss << "," << terms.rate_s << "," << terms.mse255 << ","
          << terms.psnr_db << "\n";
    if (progress) progress(step, loss);
  }
  if (model.primary_hash() != h0)
    throw invariant_error("frozen primary branch changed during stage II");
  return result;
}

// --------------------------------------------------------------------------
// Proxy pretraining (MoCo-style) and the linear probe.
// --------------------------------------------------------------------------

struct ProxyTrainConfig {
  int64_t steps = 500;
  int64_t batch = 16;
  double lr = 1e-3;
  uint64_t seed = 1;
};

template <typename T>
void train_proxy(CognitionProxy<T>& proxy, const Dataset<T>& train,
                 const ProxyTrainConfig& cfg,
                 const std::string& log_path = {}) {
  proxy.params().set_trainable("em", false);
  proxy.set_probe_trainable(false);
  Rng order_rng(Rng::splitmix(cfg.seed * 17 + 1));
  Rng aug_rng(Rng::splitmix(cfg.seed * 17 + 2));
  NegativeQueue<T> queue(proxy.cfg().queue, proxy.cfg().embed_dim);
  Adam<T> opt(proxy.params(), cfg.lr);
  DivergenceDetector div;
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    log << "step,loss,queue_size\n";
  }
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const auto idx = train.sample_indices(cfg.batch, order_rng);
    Tensor<T> xa({cfg.batch, 3, kToyImageSize, kToyImageSize});
    Tensor<T> xb(xa.shape());
    for (int64_t b = 0; b < cfg.batch; ++b) {
      Tensor<T> a1 = augment(train.image(idx[b]), aug_rng);
      Tensor<T> a2 = augment(train.image(idx[b]), aug_rng);
      std::copy_n(a1.data(), a1.numel(), xa.data() + b * a1.numel());
      std::copy_n(a2.data(), a2.numel(), xb.data() + b * a2.numel());
    }
    Var<T> q = proxy.embed(ops::constant(xa));
    Tensor<T> keys = proxy.embed_plain(xb, /*momentum=*/true);
    Var<T> loss = info_nce(q, keys, queue.snapshot(), proxy.cfg().tau);
    opt.zero_grad();
    loss.backward();
    opt.step();
    proxy.momentum_update();
    queue.enqueue_rows(keys);
    div.observe(loss.value()[0], "proxy");
    if (log.is_open())
      log << step << "," << loss.value()[0] << "," << queue.size() << "\n";
  }
  proxy.set_probe_trainable(true);
}

// Embeddings for a list of [3,H,W] images, batched.
template <typename T>
Tensor<T> embed_images(const CognitionProxy<T>& proxy,
                       const std::vector<Tensor<T>>& images,
                       int64_t batch = 32) {
  const int64_t n = static_cast<int64_t>(images.size());
  Tensor<T> out({n, proxy.cfg().embed_dim});
  for (int64_t at = 0; at < n; at += batch) {
    const int64_t bs = std::min(batch, n - at);
    Tensor<T> x({bs, 3, images[0].dim(1), images[0].dim(2)});
    for (int64_t b = 0; b < bs; ++b)
      std::copy_n(images[at + b].data(), images[at + b].numel(),
                  x.data() + b * images[at + b].numel());
    Tensor<T> emb = proxy.embed_plain(x);
    std::copy_n(emb.data(), emb.numel(),
                out.data() + at * proxy.cfg().embed_dim);
  }
  return out;
}

template <typename T>
Tensor<T> embed_dataset(const CognitionProxy<T>& proxy, const Dataset<T>& ds,
                        std::vector<int>* labels_out = nullptr) {
  std::vector<Tensor<T>> imgs;
  imgs.reserve(ds.size());
  std::vector<int> labels;
  for (size_t i = 0; i < ds.size(); ++i) {
    imgs.push_back(ds.image(i));
    labels.push_back(ds.label(i));
  }
  if (labels_out) *labels_out = std::move(labels);
  return embed_images(proxy, imgs);
}

struct ProbeTrainConfig {
  int64_t steps = 400;
  int64_t batch = 64;
  double lr = 0.05;
  uint64_t seed = 1;
};

// Trains the linear probe on frozen embeddings; the encoder is untouched.
template <typename T>
void train_probe(CognitionProxy<T>& proxy, const Tensor<T>& embeddings,
                 const std::vector<int>& labels,
                 const ProbeTrainConfig& cfg) {
  if (!proxy.frozen())
    throw invariant_error("probe training requires a frozen encoder");
  const uint64_t h0 = proxy.encoder_hash();
  proxy.set_probe_trainable(true);
  Adam<T> opt(proxy.params(), cfg.lr);
  Rng rng(Rng::splitmix(cfg.seed * 19 + 1));
  const int64_t n = embeddings.dim(0), d = embeddings.dim(1);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const int64_t bs = std::min(cfg.batch, n);
    Tensor<T> x({bs, d});
    std::vector<int> lab(bs);
    for (int64_t b = 0; b < bs; ++b) {
      const int64_t i = rng.uniform_int(0, n - 1);
      std::copy_n(embeddings.data() + i * d, d, x.data() + b * d);
      lab[b] = labels[i];
    }
    Var<T> logits = proxy.probe_logits(Var<T>(std::move(x), false));
    Var<T> loss = cross_entropy_logits(logits, lab);
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  if (proxy.encoder_hash() != h0)
    throw invariant_error("probe training mutated the encoder");
}

template <typename T>
double probe_accuracy(const CognitionProxy<T>& proxy,
                      const std::vector<Tensor<T>>& images,
                      const std::vector<int>& labels) {
  Tensor<T> emb = embed_images(proxy, images);
  Tensor<T> logits = proxy.probe_logits(ops::constant(emb)).value();
  return top1_accuracy(logits, labels);
}

// beta=1 downstream protocol: refit the probe on cognition-oriented
// reconstructions at the given alpha (codec weights stay frozen).
template <typename T>
void finetune_probe_beta1(CognitionProxy<T>& proxy,
                          const CodecModel<T>& model, const Dataset<T>& ds,
                          double alpha, const ProbeTrainConfig& cfg) {
  std::vector<Tensor<T>> recon;
  std::vector<int> labels;
  for (size_t i = 0; i < ds.size(); ++i) {
    auto comp = compress(model, ds.image(i), alpha);
    recon.push_back(decompress(model, comp.bytes, 1.0).image);
    labels.push_back(ds.label(i));
  }
  Tensor<T> emb = embed_images(proxy, recon);
  train_probe(proxy, emb, labels, cfg);
}

// --------------------------------------------------------------------------
// Coding-alphabet calibration from latent statistics (tail quantile of the
// scaled symbols plus a margin; escape handles anything beyond).
// --------------------------------------------------------------------------

template <typename T>
void calibrate_alphabet(CodecModel<T>& model, const Dataset<T>& ds,
                        int max_images = 16) {
  std::vector<int32_t> ay, az, as;
  const int n = std::min<int>(max_images, static_cast<int>(ds.size()));
  const int anchors = model.cfg().anchors;
  for (int i = 0; i < n; ++i) {
    const Tensor<T>& img = ds.image(i);
    Tensor<T> y = model
                      .run_ga(ops::constant(to_batch(img)))
                      .value();
    for (int a = 0; a < anchors; ++a) {
      const double alpha = anchors > 1 ? (double)a / (anchors - 1) : 0.0;
      Tensor<T> gy = model.gains().gain_at(StreamKind::kMain, alpha);
      Tensor<T> gz = model.gains().gain_at(StreamKind::kHyper, alpha);
      Tensor<T> ys = container_detail::mul_channels(y, gy);
      Tensor<T> z = model.run_ha(ops::constant(ys)).value();
      Tensor<int32_t> ky =
          quantize_symbols(ys, Tensor<T>::full({ys.dim(1)}, T(1)));
      Tensor<int32_t> kz = quantize_symbols(z, gz);
      for (int64_t j = 0; j < ky.numel(); ++j) ay.push_back(std::abs(ky[j]));
      for (int64_t j = 0; j < kz.numel(); ++j) az.push_back(std::abs(kz[j]));
      if (model.cfg().aux_mode == AuxMode::kScalable) {
        Tensor<T> y_hat = dequantize_symbols(ky, gy);
        Tensor<T> err(y.shape());
        for (int64_t j = 0; j < err.numel(); ++j) err[j] = y[j] - y_hat[j];
        Tensor<T> s = model.run_se(ops::constant(err)).value();
        Tensor<T> gs = model.gains().gain_at(StreamKind::kAux, alpha);
        Tensor<int32_t> ks = quantize_symbols(s, gs);
        for (int64_t j = 0; j < ks.numel(); ++j)
          as.push_back(std::abs(ks[j]));
      }
    }
  }
  auto bound = [](std::vector<int32_t>& v, int32_t fallback) {
    if (v.empty()) return fallback;
    const size_t q = static_cast<size_t>(
        std::floor((1.0 - 1e-6) * (v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + q, v.end());
    const int32_t tail = v[q];
    return std::clamp(tail + 8, 15, 4096);
  };
  model.cfg().lmax_y = bound(ay, model.cfg().lmax_y);
  model.cfg().lmax_z = bound(az, model.cfg().lmax_z);
  if (model.cfg().aux_mode == AuxMode::kScalable)
    model.cfg().lmax_s = bound(as, model.cfg().lmax_s);
}

}  // namespace rdc
