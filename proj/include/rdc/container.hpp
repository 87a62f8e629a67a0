#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <vector>

#include "rdc/codec.hpp"
#include "rdc/rans.hpp"

// The .rdc container: 26-byte header, then the range-coded hyper, main and
// optional auxiliary substreams. beta is NOT in the stream; mixing the two
// reconstructions is a pure decoder-side choice, so one file serves every
// distortion-cognition point.

namespace rdc {

struct StreamHeader {
  static constexpr size_t kWireBytes = 26;
  static constexpr uint8_t kAuxFlag = 0x01;

  uint8_t version = kFormatVersion;
  uint8_t flags = 0;
  uint16_t orig_w = 0, orig_h = 0;
  // Derived (not serialized): padding always rounds up to the next
  // multiple of kSpatialMultiple.
  uint16_t padded_w = 0, padded_h = 0;
  uint16_t alpha_fx = 0, alpha_s_fx = 0;
  uint32_t len_z = 0, len_y = 0, len_s = 0;

  bool has_aux() const { return flags & kAuxFlag; }

  void derive_padding() {
    padded_w = static_cast<uint16_t>(pad_to_multiple(orig_w, kSpatialMultiple));
    padded_h = static_cast<uint16_t>(pad_to_multiple(orig_h, kSpatialMultiple));
  }

  void write(std::vector<uint8_t>& out) const {
    auto put16 = [&out](uint16_t v) {
      out.push_back(static_cast<uint8_t>(v));
      out.push_back(static_cast<uint8_t>(v >> 8));
    };
    auto put32 = [&out](uint32_t v) {
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    };
    out.push_back('R');
    out.push_back('D');
    out.push_back('C');
    out.push_back('1');
    out.push_back(version);
    out.push_back(flags);
    put16(orig_w);
    put16(orig_h);
    put16(alpha_fx);
    put16(alpha_s_fx);
    put32(len_z);
    put32(len_y);
    put32(len_s);
  }

  static StreamHeader parse(const uint8_t* data, size_t size) {
    if (size < kWireBytes)
      throw stream_error("container shorter than header", size);
    if (std::memcmp(data, "RDC1", 4) != 0)
      throw stream_error("bad magic, not an .rdc container", 0);
    StreamHeader h;
    h.version = data[4];
    if (h.version != kFormatVersion)
      throw version_error("unsupported container version " +
                          std::to_string(h.version));
    h.flags = data[5];
    auto get16 = [data](size_t off) {
      return static_cast<uint16_t>(data[off] | (data[off + 1] << 8));
    };
    auto get32 = [data](size_t off) {
      uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[off + i]) << (8 * i);
      return v;
    };
    h.orig_w = get16(6);
    h.orig_h = get16(8);
    h.alpha_fx = get16(10);
    h.alpha_s_fx = get16(12);
    h.len_z = get32(14);
    h.len_y = get32(18);
    h.len_s = get32(22);
    h.derive_padding();
    if (h.has_aux() != (h.len_s != 0))
      throw stream_error("aux flag inconsistent with len_s", 5);
    const uint64_t want = kWireBytes + (uint64_t)h.len_z + h.len_y + h.len_s;
    if (want != size)
      throw stream_error("container length mismatch, expected " +
                             std::to_string(want) + " bytes",
                         size);
    return h;
  }
};

template <typename T>
struct CompressResult {
  std::vector<uint8_t> bytes;
  StreamHeader header;
  Tensor<int32_t> ky, kz, ks;        // coded symbols (ks empty when no aux)
  Tensor<T> y_hat, z_hat, s_hat;     // dequantized latents
  double est_bits_z = 0, est_bits_y = 0, est_bits_s = 0;

  double est_bits() const { return est_bits_z + est_bits_y + est_bits_s; }
  double actual_bits() const { return 8.0 * static_cast<double>(bytes.size()); }
  double bpp() const {
    return actual_bits() / (static_cast<double>(header.orig_w) * header.orig_h);
  }
};

namespace container_detail {

template <typename T>
Tensor<T> mul_channels(const Tensor<T>& x, const Tensor<T>& g) {
  Tensor<T> out(x.shape());
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      const T gv = g[ci];
      const T* src = x.data() + (bi * c + ci) * hw;
      T* dst = out.data() + (bi * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * gv;
    }
  return out;
}

// Encode / rate-estimate one factorized substream (symbols in c,h,w order).
template <typename T>
std::vector<uint8_t> code_factorized(const Tensor<int32_t>& k,
                                     const FactorizedPrior<T>& fp,
                                     const SymbolAlphabet& alpha,
                                     double* est_bits) {
  const int64_t c = k.dim(1), hw = k.dim(2) * k.dim(3);
  std::vector<CdfTable> tables(c);
  for (int64_t ci = 0; ci < c; ++ci)
    tables[ci] = factorized_cdf_table(fp, ci, alpha);
  RansEncoder enc;
  double bits = 0;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t i = 0; i < hw; ++i) {
      const int32_t sym = k.data()[ci * hw + i];
      enc.put(tables[ci], sym);
      bits -= std::log2(
          std::max(fp.likelihood_plain(ci, sym), kLikelihoodFloor));
    }
  if (est_bits) *est_bits = bits;
  return enc.flush();
}

template <typename T>
Tensor<int32_t> decode_factorized(const uint8_t* data, size_t size,
                                  const FactorizedPrior<T>& fp,
                                  const SymbolAlphabet& alpha, int64_t c,
                                  int64_t h, int64_t w) {
  std::vector<CdfTable> tables(c);
  for (int64_t ci = 0; ci < c; ++ci)
    tables[ci] = factorized_cdf_table(fp, ci, alpha);
  RansDecoder dec(data, size);
  Tensor<int32_t> k({1, c, h, w});
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t i = 0; i < h * w; ++i)
      k.data()[ci * h * w + i] = dec.get(tables[ci]);
  return k;
}

// Conditional-Gaussian main stream; mu/sigma are in the scaled domain and
// one table is built per element on both sides.
template <typename T>
std::vector<uint8_t> code_gaussian(const Tensor<int32_t>& k,
                                   const Tensor<T>& mu_s,
                                   const Tensor<T>& sigma_s,
                                   const SymbolAlphabet& alpha,
                                   double* est_bits) {
  RansEncoder enc;
  double bits = 0;
  for (int64_t i = 0; i < k.numel(); ++i) {
    const CdfTable t = gaussian_cdf_table(mu_s[i], sigma_s[i], alpha);
    enc.put(t, k[i]);
    bits -= std::log2(std::max(
        GaussianConditional::likelihood_plain(k[i], mu_s[i], sigma_s[i]),
        kLikelihoodFloor));
  }
  if (est_bits) *est_bits = bits;
  return enc.flush();
}

template <typename T>
Tensor<int32_t> decode_gaussian(const uint8_t* data, size_t size,
                                const Tensor<T>& mu_s,
                                const Tensor<T>& sigma_s,
                                const SymbolAlphabet& alpha) {
  RansDecoder dec(data, size);
  Tensor<int32_t> k(mu_s.shape());
  for (int64_t i = 0; i < k.numel(); ++i) {
    const CdfTable t = gaussian_cdf_table(mu_s[i], sigma_s[i], alpha);
    k[i] = dec.get(t);
  }
  return k;
}

}  // namespace container_detail

template <typename T>
CompressResult<T> compress(const CodecModel<T>& model, const Tensor<T>& image,
                           double alpha,
                           std::optional<double> alpha_s = {}) {
  using namespace container_detail;
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw config_error("compress: expected [3,H,W] image");
  const bool aux = alpha_s.has_value();
  if (aux && model.cfg().aux_mode != AuxMode::kScalable)
    throw config_error(
        "compress: auxiliary stream requested but the model has no "
        "scalable branch");

  CompressResult<T> res;
  StreamHeader& h = res.header;
  h.orig_h = static_cast<uint16_t>(image.dim(1));
  h.orig_w = static_cast<uint16_t>(image.dim(2));
  h.derive_padding();
  h.alpha_fx = alpha_to_fx(alpha);
  h.alpha_s_fx = aux ? alpha_to_fx(*alpha_s) : 0;
  if (aux) h.flags |= StreamHeader::kAuxFlag;
  const double a = alpha_from_fx(h.alpha_fx);
  const double as = alpha_from_fx(h.alpha_s_fx);

  Tensor<T> xp = reflect_pad(image, h.padded_h, h.padded_w);
  Var<T> x4 = ops::constant(to_batch(xp));
  const Tensor<T> y = model.run_ga(x4).value();
  const Tensor<T> gy = model.gains().gain_at(StreamKind::kMain, a);
  const Tensor<T> gz = model.gains().gain_at(StreamKind::kHyper, a);
  const Tensor<T> ys = mul_channels(y, gy);
  const Tensor<T> z = model.run_ha(ops::constant(ys)).value();

  res.kz = quantize_symbols(z, gz);
  res.z_hat = dequantize_symbols(res.kz, gz);
  auto [mu, sigma] = model.run_hs(ops::constant(res.z_hat));
  const Tensor<T> mu_s = mul_channels(mu.value(), gy);
  const Tensor<T> sigma_s = mul_channels(sigma.value(), gy);

  Tensor<T> unit_gain = Tensor<T>::full({y.dim(1)}, T(1));
  res.ky = quantize_symbols(ys, unit_gain);  // ys already scaled
  res.y_hat = dequantize_symbols(res.ky, gy);

  const SymbolAlphabet alpha_y{model.cfg().lmax_y};
  const SymbolAlphabet alpha_z{model.cfg().lmax_z};
  std::vector<uint8_t> zbytes =
      code_factorized(res.kz, model.fp_z(), alpha_z, &res.est_bits_z);
  std::vector<uint8_t> ybytes =
      code_gaussian(res.ky, mu_s, sigma_s, alpha_y, &res.est_bits_y);
  std::vector<uint8_t> sbytes;
  if (aux) {
    Tensor<T> err(y.shape());
    for (int64_t i = 0; i < err.numel(); ++i)
      err[i] = y[i] - res.y_hat[i];
    const Tensor<T> s = model.run_se(ops::constant(err)).value();
    const Tensor<T> gs = model.gains().gain_at(StreamKind::kAux, as);
    res.ks = quantize_symbols(s, gs);
    res.s_hat = dequantize_symbols(res.ks, gs);
    const SymbolAlphabet alpha_sa{model.cfg().lmax_s};
    sbytes = code_factorized(res.ks, model.fp_s(), alpha_sa, &res.est_bits_s);
  }

  h.len_z = static_cast<uint32_t>(zbytes.size());
  h.len_y = static_cast<uint32_t>(ybytes.size());
  h.len_s = static_cast<uint32_t>(sbytes.size());
  res.bytes.reserve(StreamHeader::kWireBytes + zbytes.size() + ybytes.size() +
                    sbytes.size());
  h.write(res.bytes);
  res.bytes.insert(res.bytes.end(), zbytes.begin(), zbytes.end());
  res.bytes.insert(res.bytes.end(), ybytes.begin(), ybytes.end());
  res.bytes.insert(res.bytes.end(), sbytes.begin(), sbytes.end());
  return res;
}

template <typename T>
struct DecompressResult {
  Tensor<T> image;          // clip([0,1]), cropped to original size
  Tensor<T> xbar_preclip;   // cropped, before clipping
  Tensor<T> x1_preclip;     // cognition-oriented reconstruction (cropped)
  Tensor<T> residual;       // r (cropped); zero when absent
  Tensor<T> y_hat, z_hat, s_hat;
  Tensor<int32_t> ky, kz, ks;
  StreamHeader header;
};

template <typename T>
DecompressResult<T> decompress(const CodecModel<T>& model,
                               const std::vector<uint8_t>& bytes,
                               double beta) {
  using namespace container_detail;
  if (beta < 0.0 || beta > 1.0)
    throw range_error("beta must be in [0,1], got " + std::to_string(beta));
  DecompressResult<T> res;
  StreamHeader& h = res.header;
  h = StreamHeader::parse(bytes.data(), bytes.size());
  const double a = alpha_from_fx(h.alpha_fx);
  const double as = alpha_from_fx(h.alpha_s_fx);
  const int64_t yh = h.padded_h / 16, yw = h.padded_w / 16;
  const int64_t zh = h.padded_h / 64, zw = h.padded_w / 64;

  const Tensor<T> gy = model.gains().gain_at(StreamKind::kMain, a);
  const Tensor<T> gz = model.gains().gain_at(StreamKind::kHyper, a);
  const SymbolAlphabet alpha_y{model.cfg().lmax_y};
  const SymbolAlphabet alpha_z{model.cfg().lmax_z};

  size_t off = StreamHeader::kWireBytes;
  auto sub = [&bytes](size_t off, size_t len, const char* what) {
    if (off + len > bytes.size())
      throw stream_error(std::string("truncated ") + what + " substream",
                         bytes.size());
    return bytes.data() + off;
  };
  try {
    res.kz = decode_factorized(sub(off, h.len_z, "hyper"), h.len_z,
                               model.fp_z(), alpha_z, model.cfg().cz, zh, zw);
  } catch (const stream_error& e) {
    throw stream_error("hyper substream: " + std::string(e.what()),
                       off + e.byte_offset);
  }
  res.z_hat = dequantize_symbols(res.kz, gz);
  auto [mu, sigma] = model.run_hs(ops::constant(res.z_hat));
  const Tensor<T> mu_s = mul_channels(mu.value(), gy);
  const Tensor<T> sigma_s = mul_channels(sigma.value(), gy);
  off += h.len_z;
  try {
    res.ky = decode_gaussian(sub(off, h.len_y, "main"), h.len_y, mu_s,
                             sigma_s, alpha_y);
  } catch (const stream_error& e) {
    throw stream_error("main substream: " + std::string(e.what()),
                       off + e.byte_offset);
  }
  res.y_hat = dequantize_symbols(res.ky, gy);
  off += h.len_y;

  auto synth = model.run_gs(ops::constant(res.y_hat));
  const Tensor<T>& x1 = synth.x_hat.value();

  Tensor<T> r;
  if (model.cfg().aux_mode == AuxMode::kScalable && h.has_aux()) {
    const SymbolAlphabet alpha_sa{model.cfg().lmax_s};
    const Tensor<T> gs = model.gains().gain_at(StreamKind::kAux, as);
    try {
      res.ks = decode_factorized(sub(off, h.len_s, "aux"), h.len_s,
                                 model.fp_s(), alpha_sa, model.cfg().cs, yh,
                                 yw);
    } catch (const stream_error& e) {
      throw stream_error("aux substream: " + std::string(e.what()),
                         off + e.byte_offset);
    }
    res.s_hat = dequantize_symbols(res.ks, gs);
    Var<T> err_hat = model.run_sd(ops::constant(res.s_hat));
    Var<T> y2 = ops::add(ops::constant(res.y_hat), err_hat);
    r = model.run_rn(y2, synth.prior).value();
  } else if (model.cfg().aux_mode == AuxMode::kDirect) {
    // Ablation variant: residual reconstruction straight from y_hat.
    r = model.run_rn(ops::constant(res.y_hat), synth.prior).value();
  } else {
    // No auxiliary information: r = 0, output degrades to x1.
    r = Tensor<T>::zeros(x1.shape());
  }

  // x_bar = x1 + (1-beta)*r; beta=1 and beta=0 reproduce the endpoints
  // exactly.
  Tensor<T> xbar(x1.shape());
  const T w = static_cast<T>(1.0 - beta);
  for (int64_t i = 0; i < xbar.numel(); ++i) xbar[i] = x1[i] + w * r[i];

  res.x1_preclip = crop(from_batch(x1), h.orig_h, h.orig_w);
  res.residual = crop(from_batch(r), h.orig_h, h.orig_w);
  res.xbar_preclip = crop(from_batch(xbar), h.orig_h, h.orig_w);
  res.image = clip01(res.xbar_preclip);
  return res;
}

template <typename T>
void write_container(const std::string& path, const CompressResult<T>& res) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(res.bytes.data()), res.bytes.size());
  if (!f) throw io_error("short write: " + path);
}

inline std::vector<uint8_t> read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace rdc
