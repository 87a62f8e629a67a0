#pragma once

#include "rdc/autograd.hpp"

namespace rdc {

// Out-of-range penalty: (1/M) * sum_i I(x_hat_i < 0 or x_hat_i > 1) *
// (x_hat_i - x_i)^2 over all elements. The indicator uses strict
// inequalities, so values exactly at 0 or 1 contribute nothing.
template <typename T>
Var<T> local_mse_term(const Var<T>& x_hat, const Var<T>& x) {
  check_same_shape(x_hat.value(), x.value(), "local_mse");
  const int64_t m = x_hat.value().numel();
  double acc = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    const double v = x_hat.value()[i];
    if (v < 0.0 || v > 1.0) {
      const double d = v - (double)x.value()[i];
      acc += d * d;
    }
  }
  Tensor<T> out({1});
  out[0] = static_cast<T>(acc / m);
  auto hn = x_hat.node(), xn = x.node();
  return Var<T>::make_op(
      std::move(out), {x_hat, x}, [hn, xn, m](typename Var<T>::Node& n) {
        const double g = 2.0 * (double)n.grad[0] / m;
        const bool nh = hn->requires_grad, nx = xn->requires_grad;
        if (nh) hn->ensure_grad();
        if (nx) xn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          const double v = hn->value[i];
          if (v < 0.0 || v > 1.0) {
            const double d = g * (v - (double)xn->value[i]);
            if (nh) hn->grad[i] += static_cast<T>(d);
            if (nx) xn->grad[i] -= static_cast<T>(d);
          }
        }
      });
}

// Spec-facing scalar form, target first.
template <typename T>
double local_mse(const Tensor<T>& x, const Tensor<T>& x_hat) {
  return local_mse_term(ops::constant(x_hat), ops::constant(x)).value()[0];
}

}  // namespace rdc
