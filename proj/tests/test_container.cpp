#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "rdc/container.hpp"

using namespace rdc;

namespace {

Tensor<float> random_image(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> img({3, h, w});
  for (int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(rng.uniform());
  return img;
}

// Untrained weights produce sub-half-unit latents; anchor gains are set
// high enough that the coded symbols are non-trivial, as they would be
// after training.
CodecModel<float> make_model(bool aux) {
  CodecConfig cfg;
  cfg.init_seed = 4242;
  cfg.aux_mode = aux ? AuxMode::kScalable : AuxMode::kNone;
  CodecModel<float> model(cfg);
  for (int n = 0; n < cfg.anchors; ++n) {
    const float g = std::log(4.0f + 4.0f * n);
    model.params().find("gain.y." + std::to_string(n))->value().fill(g);
    model.params().find("gain.z." + std::to_string(n))->value().fill(
        std::log(4.0f));
    model.params().find("gain.s." + std::to_string(n))->value().fill(
        std::log(6.0f));
  }
  return model;
}

}  // namespace

TEST_CASE("header wire format is exactly 26 bytes") {
  StreamHeader h;
  h.orig_w = 640;
  h.orig_h = 480;
  h.alpha_fx = 12345;
  h.len_z = 10;
  h.len_y = 20;
  h.len_s = 0;
  std::vector<uint8_t> bytes;
  h.write(bytes);
  REQUIRE(bytes.size() == StreamHeader::kWireBytes);
  REQUIRE(bytes.size() == 26);
  REQUIRE(bytes[0] == 'R');
  REQUIRE(bytes[3] == '1');
}

TEST_CASE("header parse round trip and derived padding") {
  StreamHeader h;
  h.flags = StreamHeader::kAuxFlag;
  h.orig_w = 70;
  h.orig_h = 130;
  h.alpha_fx = 65535;
  h.alpha_s_fx = 32768;
  h.len_z = 8;
  h.len_y = 16;
  h.len_s = 24;
  std::vector<uint8_t> bytes;
  h.write(bytes);
  bytes.resize(26 + 8 + 16 + 24, 0);
  StreamHeader p = StreamHeader::parse(bytes.data(), bytes.size());
  REQUIRE(p.orig_w == 70);
  REQUIRE(p.orig_h == 130);
  REQUIRE(p.padded_w == 128);
  REQUIRE(p.padded_h == 192);
  REQUIRE(p.padded_w % kSpatialMultiple == 0);
  REQUIRE(p.padded_h % kSpatialMultiple == 0);
  REQUIRE(p.has_aux());
  REQUIRE(p.alpha_fx == 65535);
}

TEST_CASE("compress/decompress: decoder latents bitwise equal encoder's") {
  auto model = make_model(true);
  Tensor<float> x = random_image(64, 64, 1);
  for (double alpha : {0.0, 0.5, 1.0}) {
    auto comp = compress(model, x, alpha, 0.7);
    REQUIRE(comp.bytes.size() ==
            StreamHeader::kWireBytes + comp.header.len_z +
                comp.header.len_y + comp.header.len_s);
    auto dec = decompress(model, comp.bytes, 0.0);
    REQUIRE(dec.y_hat.bitwise_equal(comp.y_hat));
    REQUIRE(dec.z_hat.bitwise_equal(comp.z_hat));
    REQUIRE(dec.s_hat.bitwise_equal(comp.s_hat));
    REQUIRE(dec.ky.bitwise_equal(comp.ky));
    REQUIRE(dec.kz.bitwise_equal(comp.kz));
    REQUIRE(dec.ks.bitwise_equal(comp.ks));
  }
}

TEST_CASE("aux flag semantics: omitted stream means len_s = 0") {
  auto model = make_model(true);
  Tensor<float> x = random_image(64, 64, 2);
  auto with_aux = compress(model, x, 0.5, 0.5);
  REQUIRE(with_aux.header.has_aux());
  REQUIRE(with_aux.header.len_s > 0);
  auto no_aux = compress(model, x, 0.5);
  REQUIRE_FALSE(no_aux.header.has_aux());
  REQUIRE(no_aux.header.len_s == 0);
  REQUIRE(no_aux.header.alpha_s_fx == 0);
}

TEST_CASE("compression is deterministic in round mode") {
  auto model = make_model(true);
  Tensor<float> x = random_image(64, 64, 3);
  auto a = compress(model, x, 0.3, 0.9);
  auto b = compress(model, x, 0.3, 0.9);
  REQUIRE(a.bytes == b.bytes);
}

TEST_CASE("beta endpoints are exact; beta=0.5 is the pre-clip midpoint") {
  auto model = make_model(true);
  // Give the residual path signal: un-zero the head layers.
  Rng rng(99);
  for (const char* p : {"aux.sd.2.weight", "aux.rn.out.weight"}) {
    Tensor<float>& w = model.params().find(p)->value();
    for (int64_t i = 0; i < w.numel(); ++i)
      w[i] = static_cast<float>(rng.normal() * 0.05);
  }
  Tensor<float> x = random_image(64, 64, 4);
  auto comp = compress(model, x, 1.0, 1.0);

  auto d0 = decompress(model, comp.bytes, 0.0);
  auto d1 = decompress(model, comp.bytes, 1.0);
  auto dh = decompress(model, comp.bytes, 0.5);

  // Residual must be non-trivial for this test to mean anything.
  double rmax = 0;
  for (int64_t i = 0; i < d0.residual.numel(); ++i)
    rmax = std::max(rmax, std::abs((double)d0.residual[i]));
  REQUIRE(rmax > 1e-4);

  // beta=1 -> clip(x1) exactly.
  REQUIRE(d1.image.bitwise_equal(clip01(d1.x1_preclip)));
  for (int64_t i = 0; i < d1.xbar_preclip.numel(); ++i)
    REQUIRE(d1.xbar_preclip[i] == d1.x1_preclip[i]);
  // beta=0 -> clip(x1 + r) exactly.
  for (int64_t i = 0; i < d0.xbar_preclip.numel(); ++i)
    REQUIRE(d0.xbar_preclip[i] == d0.x1_preclip[i] + d0.residual[i]);
  // beta=0.5 -> pixelwise midpoint of the endpoints before clipping.
  for (int64_t i = 0; i < dh.xbar_preclip.numel(); ++i) {
    const double mid = 0.5 * ((double)d0.xbar_preclip[i] +
                              (double)d1.xbar_preclip[i]);
    REQUIRE(std::abs((double)dh.xbar_preclip[i] - mid) < 1e-6);
  }
  // Output always clipped to [0,1] and original shape.
  REQUIRE(dh.image.shape() == Shape{3, 64, 64});
  REQUIRE(dh.image.min() >= 0.0f);
  REQUIRE(dh.image.max() <= 1.0f);
}

TEST_CASE("stream without aux degrades gracefully for any beta") {
  auto model = make_model(true);
  Tensor<float> x = random_image(64, 64, 5);
  auto comp = compress(model, x, 0.5);  // no aux substream
  auto b0 = decompress(model, comp.bytes, 0.0);
  auto b1 = decompress(model, comp.bytes, 1.0);
  REQUIRE(b0.image.bitwise_equal(b1.image));  // r = 0 path
  for (int64_t i = 0; i < b0.residual.numel(); ++i)
    REQUIRE(b0.residual[i] == 0.0f);
}

TEST_CASE("padding round trip: 70x70 codes and crops back") {
  auto model = make_model(true);
  Tensor<float> x = random_image(70, 70, 6);
  auto comp = compress(model, x, 1.0, 1.0);
  REQUIRE(comp.header.orig_w == 70);
  REQUIRE(comp.header.padded_w == 128);
  auto dec = decompress(model, comp.bytes, 0.5);
  REQUIRE(dec.image.shape() == Shape{3, 70, 70});
  REQUIRE(dec.image.min() >= 0.0f);
  REQUIRE(dec.image.max() <= 1.0f);
  // bpp uses the original pixel count.
  REQUIRE(comp.bpp() ==
          Catch::Approx(8.0 * comp.bytes.size() / (70.0 * 70.0)));
}

TEST_CASE("rate estimate tracks the actual file size") {
  auto model = make_model(true);
  for (uint64_t s = 10; s < 14; ++s) {
    Tensor<float> x = random_image(64, 64, s);
    auto comp = compress(model, x, 1.0, 1.0);
    const double est = comp.est_bits();
    const double actual = comp.actual_bits();
    REQUIRE(std::abs(actual - est) <= 0.01 * est + 64 * 8);
  }
}

TEST_CASE("container error paths") {
  auto model = make_model(true);
  Tensor<float> x = random_image(64, 64, 7);
  auto comp = compress(model, x, 0.5, 0.5);
  auto bytes = comp.bytes;

  SECTION("bad magic") {
    bytes[0] = 'X';
    try {
      decompress(model, bytes, 0.0);
      FAIL("expected stream_error");
    } catch (const stream_error& e) {
      REQUIRE(e.byte_offset == 0);
    }
  }
  SECTION("unsupported version") {
    bytes[4] = 99;
    REQUIRE_THROWS_AS(decompress(model, bytes, 0.0), version_error);
  }
  SECTION("truncated container") {
    bytes.resize(bytes.size() - 3);
    REQUIRE_THROWS_AS(decompress(model, bytes, 0.0), stream_error);
  }
  SECTION("truncated main substream reports an offset past the hyper one") {
    // Rewrite the header with len_y = 4 and drop everything after the
    // first 4 main-stream bytes (and the aux stream entirely).
    StreamHeader h = comp.header;
    const size_t zlen = h.len_z;
    h.len_y = 4;
    h.len_s = 0;
    h.flags = 0;
    std::vector<uint8_t> cut;
    h.write(cut);
    cut.insert(cut.end(), bytes.begin() + 26, bytes.begin() + 26 + zlen + 4);
    try {
      decompress(model, cut, 0.0);
      FAIL("expected stream_error");
    } catch (const stream_error& e) {
      REQUIRE(e.byte_offset >= 26 + zlen);
      REQUIRE(std::string(e.what()).find("main") != std::string::npos);
    }
  }
  SECTION("beta outside [0,1]") {
    REQUIRE_THROWS_AS(decompress(model, bytes, 1.5), range_error);
    REQUIRE_THROWS_AS(decompress(model, bytes, -0.1), range_error);
  }
  SECTION("aux requested on a model without the scalable branch") {
    auto plain = make_model(false);
    REQUIRE_THROWS_AS(compress(plain, x, 0.5, 0.5), config_error);
  }
}

TEST_CASE("containers survive a disk round trip") {
  namespace fs = std::filesystem;
  auto model = make_model(true);
  Tensor<float> x = random_image(64, 64, 8);
  auto comp = compress(model, x, 0.25, 0.75);
  const std::string path =
      (fs::temp_directory_path() / "rdc_test.rdc").string();
  write_container(path, comp);
  auto bytes = read_container(path);
  REQUIRE(bytes == comp.bytes);
  fs::remove(path);
}
