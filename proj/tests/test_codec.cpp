#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "rdc/checkpoint.hpp"
#include "rdc/codec.hpp"

using namespace rdc;

namespace {

Tensor<float> random_image(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> img({3, h, w});
  for (int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(rng.uniform());
  return img;
}

CodecModel<float> make_model(uint64_t seed = 42) {
  CodecConfig cfg;
  cfg.init_seed = seed;
  return CodecModel<float>(cfg);
}

}  // namespace

TEST_CASE("analyze shape arithmetic: 3x64x64 -> y 96x4x4, z 48x1x1") {
  auto model = make_model();
  auto [y, z] = model.analyze(random_image(64, 64, 1));
  REQUIRE(y.shape() == Shape{96, 4, 4});
  REQUIRE(z.shape() == Shape{48, 1, 1});
  auto [y2, z2] = model.analyze(random_image(128, 192, 2));
  REQUIRE(y2.shape() == Shape{96, 8, 12});
  REQUIRE(z2.shape() == Shape{48, 2, 3});
}

TEST_CASE("analyze is deterministic") {
  auto model = make_model();
  Tensor<float> x = random_image(64, 64, 3);
  auto [y1, z1] = model.analyze(x);
  auto [y2, z2] = model.analyze(x);
  REQUIRE(y1.bitwise_equal(y2));
  REQUIRE(z1.bitwise_equal(z2));
}

TEST_CASE("non-divisible input raises a padding-required error naming 64") {
  auto model = make_model();
  try {
    model.analyze(random_image(70, 70, 4));
    FAIL("expected padding_required_error");
  } catch (const padding_required_error& e) {
    REQUIRE(std::string(e.what()).find("64") != std::string::npos);
    REQUIRE(std::string(e.what()).find("70x70") != std::string::npos);
  }
}

TEST_CASE("gain-bound analyze feeds y*G into the hyper encoder") {
  auto model = make_model();
  // At initialization all gains are 1, so both paths agree.
  Tensor<float> x = random_image(64, 64, 5);
  auto [y0, z0] = model.analyze(x);
  auto [y1, z1] = model.analyze(x, 0.0);
  REQUIRE(z0.bitwise_equal(z1));
  // Make the alpha=0 anchor non-trivial: the hyper latent must change.
  model.params().find("gain.y.0")->value().fill(std::log(2.0f));
  auto [y2, z2] = model.analyze(x, 0.0);
  REQUIRE(y2.bitwise_equal(y0));  // y itself is pre-gain
  REQUIRE_FALSE(z2.bitwise_equal(z0));
}

TEST_CASE("synthesize shapes and decoder priors") {
  auto model = make_model();
  Rng rng(6);
  Tensor<float> yhat({96, 4, 4});
  for (int64_t i = 0; i < yhat.numel(); ++i)
    yhat[i] = static_cast<float>(rng.normal());
  auto out = model.synthesize(yhat);
  REQUIRE(out.x_hat.shape() == Shape{3, 64, 64});
  REQUIRE(out.prior[0].shape() == Shape{64, 8, 8});
  REQUIRE(out.prior[1].shape() == Shape{64, 16, 16});
  REQUIRE(out.prior[2].shape() == Shape{64, 32, 32});

  auto out2 = model.synthesize(yhat);
  REQUIRE(out.x_hat.bitwise_equal(out2.x_hat));

  Tensor<float> bad({17, 4, 4});
  REQUIRE_THROWS_AS(model.synthesize(bad), config_error);
}

TEST_CASE("zero-initialized image head: x_hat is the bias plane at init") {
  auto model = make_model();
  Rng rng(7);
  Tensor<float> yhat({96, 4, 4});
  for (int64_t i = 0; i < yhat.numel(); ++i)
    yhat[i] = static_cast<float>(rng.normal() * 3);
  auto out = model.synthesize(yhat);
  for (int64_t i = 0; i < out.x_hat.numel(); ++i)
    REQUIRE(out.x_hat[i] == 0.5f);
}

TEST_CASE("hyper_decode: spatial x4, sigma clamped at 0.11") {
  auto model = make_model();
  Rng rng(8);
  Tensor<float> zhat({48, 1, 1});
  for (int64_t i = 0; i < zhat.numel(); ++i)
    zhat[i] = static_cast<float>(rng.normal() * 5);
  auto [mu, sigma] = model.hyper_decode(zhat);
  REQUIRE(mu.shape() == Shape{96, 4, 4});
  REQUIRE(sigma.shape() == Shape{96, 4, 4});
  REQUIRE(sigma.min() >= 0.11f);
  auto [mu2, sigma2] = model.hyper_decode(zhat);
  REQUIRE(mu.bitwise_equal(mu2));
  REQUIRE(sigma.bitwise_equal(sigma2));
}

TEST_CASE("scalable encoder/decoder shapes and zero-init contract") {
  auto model = make_model();
  Tensor<float> err({96, 4, 4});
  Rng rng(9);
  for (int64_t i = 0; i < err.numel(); ++i)
    err[i] = static_cast<float>(rng.normal() * 0.2);
  Tensor<float> s = model.scalable_encode(err);
  REQUIRE(s.shape() == Shape{64, 4, 4});

  // err = 0 everywhere: a constant map, identical across calls.
  Tensor<float> zero({96, 4, 4});
  Tensor<float> s0a = model.scalable_encode(zero);
  Tensor<float> s0b = model.scalable_encode(zero);
  REQUIRE(s0a.bitwise_equal(s0b));

  // Zero-initialized final decoder layer: err_hat = 0, y2 = y_hat.
  Tensor<float> shat({64, 4, 4});
  for (int64_t i = 0; i < shat.numel(); ++i)
    shat[i] = static_cast<float>(rng.normal());
  Tensor<float> err_hat = model.scalable_decode(shat);
  REQUIRE(err_hat.shape() == Shape{96, 4, 4});
  for (int64_t i = 0; i < err_hat.numel(); ++i)
    REQUIRE(err_hat[i] == 0.0f);
}

TEST_CASE("residual reconstruction: shapes, zero init, prior mismatch") {
  auto model = make_model();
  Rng rng(10);
  Tensor<float> y2({96, 4, 4});
  for (int64_t i = 0; i < y2.numel(); ++i)
    y2[i] = static_cast<float>(rng.normal());
  auto synth = model.synthesize(y2);
  Tensor<float> r = model.reconstruct_residual(y2, synth.prior);
  REQUIRE(r.shape() == Shape{3, 64, 64});
  for (int64_t i = 0; i < r.numel(); ++i) REQUIRE(r[i] == 0.0f);

  auto bad = synth.prior;
  bad[1] = Tensor<float>({64, 8, 8});  // wrong spatial size for f2
  REQUIRE_THROWS_AS(model.reconstruct_residual(y2, bad), config_error);
}

TEST_CASE("auxiliary stack stays under 10% of the transform stack") {
  auto model = make_model();
  const double ratio =
      static_cast<double>(model.auxiliary_stack_params()) /
      static_cast<double>(model.transform_stack_params());
  INFO("aux " << model.auxiliary_stack_params() << " / transform "
              << model.transform_stack_params() << " = " << ratio);
  REQUIRE(ratio < 0.10);
}

TEST_CASE("shape round trip through quantized latents") {
  auto model = make_model();
  for (int64_t hw : {64, 128}) {
    Tensor<float> x = random_image(hw, hw, 11 + hw);
    auto [y, z] = model.analyze(x);
    Tensor<float> g = Tensor<float>::full({96}, 1.0f);
    Tensor<float> yhat =
        quantize(y.reshaped({1, 96, hw / 16, hw / 16}), g,
                 QuantizeMode::kRound)
            .reshaped({96, hw / 16, hw / 16});
    auto out = model.synthesize(yhat);
    REQUIRE(out.x_hat.shape() == x.shape());
  }
}

TEST_CASE("checkpoint round trip preserves parameters bitwise") {
  namespace fs = std::filesystem;
  auto model = make_model(77);
  model.cfg().aux_mode = AuxMode::kScalable;
  model.cfg().lmax_y = 123;
  const std::string path =
      (fs::temp_directory_path() / "rdc_test_ckpt.rdck").string();
  save_codec(path, model);
  auto loaded = load_codec<float>(path);
  REQUIRE(loaded.cfg().aux_mode == AuxMode::kScalable);
  REQUIRE(loaded.cfg().lmax_y == 123);
  REQUIRE(loaded.cfg().cy == model.cfg().cy);
  REQUIRE(loaded.params().items().size() == model.params().items().size());
  for (size_t i = 0; i < model.params().items().size(); ++i) {
    const auto& [name, var] = model.params().items()[i];
    const auto& [name2, var2] = loaded.params().items()[i];
    REQUIRE(name == name2);
    REQUIRE(var.value().bitwise_equal(var2.value()));
  }
  REQUIRE(loaded.params().hash() == model.params().hash());
  fs::remove(path);
}

TEST_CASE("checkpoint kind and file errors") {
  namespace fs = std::filesystem;
  REQUIRE_THROWS_AS(load_codec<float>("/nonexistent/x.rdck"), io_error);
  // A proxy checkpoint is not a codec checkpoint.
  const std::string path =
      (fs::temp_directory_path() / "rdc_test_kind.rdck").string();
  ParamStore<float> ps;
  ps.add("w", Tensor<float>({2}, {1.f, 2.f}));
  save_checkpoint(path, "proxy", {{"embed_dim", "8"}}, ps);
  REQUIRE_THROWS_AS(load_codec<float>(path), version_error);
  fs::remove(path);
}
