#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "rdc/autograd.hpp"
#include "rdc/contrastive.hpp"
#include "rdc/random.hpp"
#include "rdc/train_ops.hpp"

using namespace rdc;
using V = Var<double>;

namespace {

Tensor<double> randn(Shape s, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
  return t;
}

// Central finite differences against the analytic gradient, every element
// of every leaf.
void check_grads(const std::vector<V*>& leaves,
                 const std::function<V()>& build, double tol = 2e-5,
                 double eps = 1e-6) {
  V loss = build();
  REQUIRE(loss.value().numel() == 1);
  for (V* leaf : leaves) leaf->zero_grad();
  loss.backward();
  std::vector<Tensor<double>> analytic;
  for (V* leaf : leaves) analytic.push_back(leaf->grad());
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double>& val = leaves[li]->value();
    for (int64_t i = 0; i < val.numel(); ++i) {
      const double orig = val[i];
      val[i] = orig + eps;
      const double lp = build().value()[0];
      val[i] = orig - eps;
      const double lm = build().value()[0];
      val[i] = orig;
      const double fd = (lp - lm) / (2 * eps);
      const double an = analytic[li][i];
      const double denom = std::max({1e-7, std::abs(fd), std::abs(an)});
      INFO("leaf " << li << " index " << i << " analytic " << an << " fd "
                   << fd);
      REQUIRE(std::abs(an - fd) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("elementwise op gradients") {
  Rng rng(101);
  V a(randn({2, 5}, rng), true), b(randn({2, 5}, rng), true);

  check_grads({&a, &b}, [&] { return ops::mean(ops::mul(ops::add(a, b), b)); });
  check_grads({&a, &b}, [&] { return ops::sum(ops::mul(ops::sub(a, b), a)); });
  check_grads({&a}, [&] { return ops::mean(ops::affine(a, 2.5, -1.0)); });
  check_grads({&a}, [&] { return ops::mean(ops::exp_(ops::affine(a, 0.3, 0.0))); });
  check_grads({&a}, [&] {
    return ops::mean(ops::log_(ops::affine(ops::mul(a, a), 1.0, 1.0)));
  });
  check_grads({&a}, [&] { return ops::mean(ops::tanh_(a)); });
  check_grads({&a}, [&] { return ops::mean(ops::sigmoid_(a)); });
  check_grads({&a}, [&] { return ops::mean(ops::softplus_(a)); });
  check_grads({&a, &b}, [&] { return ops::mse(a, b); });
}

TEST_CASE("kinked op gradients away from the kink") {
  Rng rng(102);
  Tensor<double> t = randn({3, 7}, rng);
  for (int64_t i = 0; i < t.numel(); ++i)
    if (std::abs(t[i]) < 1e-3) t[i] = 0.1;  // keep clear of the origin
  V a(t, true);
  check_grads({&a}, [&] { return ops::mean(ops::leaky_relu(a, 0.2)); });
}

TEST_CASE("lower_bound gradient semantics") {
  // Above the bound: plain pass-through (FD-checkable).
  V a(Tensor<double>({3}, {0.5, 1.0, 2.0}), true);
  check_grads({&a}, [&] {
    return ops::mean(ops::mul(ops::lower_bound(a, 0.1),
                              ops::lower_bound(a, 0.1)));
  });
  // Below the bound the incoming gradient is blocked when it would push
  // the value further down, and passed when a descent step would lift the
  // value back above the bound.
  V c(Tensor<double>({2}, {-1.0, -1.0}), true);
  V y = ops::lower_bound(c, 0.0);
  // loss = y[0] - y[1]: dL/dy = (+1, -1); only the negative one passes.
  V loss = ops::sum(ops::mul(
      y, ops::constant(Tensor<double>({2}, {1.0, -1.0}))));
  loss.backward();
  REQUIRE(c.grad()[0] == 0.0);
  REQUIRE(c.grad()[1] == -1.0);
}

TEST_CASE("reductions, reshape, row and slice gradients") {
  Rng rng(103);
  V a(randn({2, 3, 4, 2}, rng), true);
  check_grads({&a}, [&] { return ops::mean(a); });
  check_grads({&a}, [&] {
    return ops::sum(ops::mul(ops::reshape(a, {4, 12}), ops::reshape(a, {4, 12})));
  });
  check_grads({&a}, [&] {
    return ops::mean(ops::slice_channels(a, 1, 3));
  });
  V m(randn({4, 3}, rng), true);
  check_grads({&m}, [&] {
    return ops::mean(ops::mul(ops::row(m, 2), ops::row(m, 2)));
  });
}

TEST_CASE("channel scale/bias gradients") {
  Rng rng(104);
  V x(randn({2, 3, 2, 2}, rng), true);
  V g(randn({3}, rng, 0.3), true);
  V b(randn({3}, rng), true);
  check_grads({&x, &g}, [&] {
    return ops::mean(ops::mul(ops::scale_channels(x, g), x));
  });
  check_grads({&x, &b}, [&] {
    return ops::mean(ops::mul(ops::bias_channels(x, b), x));
  });
}

TEST_CASE("conv2d gradients (stride 2, padding)") {
  Rng rng(105);
  V x(randn({2, 3, 8, 8}, rng, 0.5), true);
  V w(randn({4, 3, 5, 5}, rng, 0.2), true);
  V b(randn({4}, rng), true);
  check_grads({&x, &w, &b}, [&] {
    auto y = ops::conv2d(x, w, b, 2, 2);
    return ops::mean(ops::mul(y, y));
  });
}

TEST_CASE("conv_transpose2d gradients (exact x2 upsample)") {
  Rng rng(106);
  V x(randn({2, 4, 3, 3}, rng, 0.5), true);
  V w(randn({4, 3, 5, 5}, rng, 0.2), true);
  V b(randn({3}, rng), true);
  check_grads({&x, &w, &b}, [&] {
    auto y = ops::conv_transpose2d(x, w, b, 2, 2, 1);
    return ops::mean(ops::mul(y, y));
  });
}

TEST_CASE("linear / matmul-path gradients") {
  Rng rng(107);
  V x(randn({5, 4}, rng), true);
  V w(randn({3, 4}, rng), true);
  V b(randn({3}, rng), true);
  check_grads({&x, &w, &b}, [&] {
    auto y = ops::linear(x, w, b);
    return ops::mean(ops::mul(y, y));
  });
}

TEST_CASE("global average pool and row normalization gradients") {
  Rng rng(108);
  V x(randn({2, 3, 4, 4}, rng), true);
  check_grads({&x}, [&] {
    auto y = ops::global_avg_pool(x);
    return ops::mean(ops::mul(y, y));
  });
  V q(randn({3, 6}, rng), true);
  V tgt(randn({3, 6}, rng), false);
  check_grads({&q}, [&] {
    return ops::mse(ops::l2_normalize_rows(q), tgt);
  });
}

TEST_CASE("discretized Gaussian likelihood gradients") {
  Rng rng(109);
  V v(randn({2, 8}, rng, 2.0), true);
  V mu(randn({2, 8}, rng, 2.0), true);
  Tensor<double> st = randn({2, 8}, rng, 0.3);
  for (int64_t i = 0; i < st.numel(); ++i) st[i] = 0.5 + std::abs(st[i]);
  V sigma(st, true);
  check_grads(
      {&v, &mu, &sigma},
      [&] { return ops::mean(ops::gaussian_likelihood(v, mu, sigma)); },
      1e-4);
  // Through the rate path (log2 + floor), as used by estimate_rate.
  check_grads(
      {&v, &mu, &sigma},
      [&] {
        return ops::total_bits(ops::gaussian_likelihood(v, mu, sigma));
      },
      1e-4);
}

TEST_CASE("round blocks gradients, noise passes them through") {
  Rng rng(110);
  V a(randn({3, 3}, rng), true);
  V r = ops::round_nograd(a);
  V loss = ops::mean(ops::mul(r, r));
  loss.backward();
  for (int64_t i = 0; i < a.value().numel(); ++i)
    REQUIRE(a.grad()[i] == 0.0);

  // Additive constant noise: d/dx (x + u) = 1.
  a.zero_grad();
  Tensor<double> noise = randn({3, 3}, rng, 0.1);
  V sum = ops::sum(ops::add(a, ops::constant(noise)));
  sum.backward();
  for (int64_t i = 0; i < a.value().numel(); ++i)
    REQUIRE(a.grad()[i] == 1.0);
}

TEST_CASE("local out-of-range MSE gradients") {
  // Values placed clearly inside and outside [0,1], away from the edges.
  Tensor<double> xh({6}, {1.5, 0.5, -0.2, 0.8, 1.2, -0.7});
  Tensor<double> xt({6}, {1.0, 0.5, 0.0, 0.8, 0.9, 0.1});
  V a(xh, true), x(xt, true);
  check_grads({&a, &x}, [&] { return local_mse_term(a, x); });
}

TEST_CASE("InfoNCE gradient w.r.t. the query") {
  Rng rng(111);
  const int64_t B = 3, D = 8, K = 5;
  V q(randn({B, D}, rng, 0.5), true);
  Tensor<double> kp = randn({B, D}, rng, 0.5);
  Tensor<double> neg = randn({K, D}, rng, 0.5);
  check_grads({&q}, [&] { return info_nce(q, kp, neg, 0.2); }, 5e-5);
}

TEST_CASE("cross entropy gradient") {
  Rng rng(112);
  V logits(randn({4, 5}, rng), true);
  std::vector<int> labels = {1, 0, 4, 2};
  check_grads({&logits}, [&] { return cross_entropy_logits(logits, labels); });
}

TEST_CASE("backward requires a scalar root") {
  Rng rng(113);
  V a(randn({2, 2}, rng), true);
  REQUIRE_THROWS_AS(ops::mul(a, a).backward(), invariant_error);
}

TEST_CASE("gradient accumulates across multiple backward passes") {
  V a(Tensor<double>({1}, {3.0}), true);
  V l1 = ops::mean(ops::mul(a, a));
  l1.backward();
  const double g1 = a.grad()[0];
  V l2 = ops::mean(ops::mul(a, a));
  l2.backward();
  REQUIRE(a.grad()[0] == Catch::Approx(2 * g1));
}
