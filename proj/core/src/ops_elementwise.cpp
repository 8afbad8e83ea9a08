#include <cmath>

#include "xdistill/ops.hpp"

namespace xd::ops {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}

}  // namespace

Tensor add(Tape& tp, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad() || b.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  const real* pb = b.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  tp.record({a, b}, out, [a, b, out]() {
    const real* g = out.grad_data();
    const size_t m = out.numel();
    if (a.requires_grad()) {
      real* ga = a.grad();
      for (size_t i = 0; i < m; ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      real* gb = b.grad();
      for (size_t i = 0; i < m; ++i) gb[i] += g[i];
    }
  });
  return out;
}

Tensor add(Tape& tp, const Tensor& a, real b) {
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] + b;
  tp.record({a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    real* ga = a.grad();
    const size_t m = out.numel();
    for (size_t i = 0; i < m; ++i) ga[i] += g[i];
  });
  return out;
}

Tensor sub(Tape& tp, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad() || b.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  const real* pb = b.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  tp.record({a, b}, out, [a, b, out]() {
    const real* g = out.grad_data();
    const size_t m = out.numel();
    if (a.requires_grad()) {
      real* ga = a.grad();
      for (size_t i = 0; i < m; ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      real* gb = b.grad();
      for (size_t i = 0; i < m; ++i) gb[i] -= g[i];
    }
  });
  return out;
}

Tensor sub(Tape& tp, const Tensor& a, real b) { return add(tp, a, -b); }

Tensor mul(Tape& tp, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad() || b.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  const real* pb = b.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  tp.record({a, b}, out, [a, b, out]() {
    const real* g = out.grad_data();
    const real* pa2 = a.data();
    const real* pb2 = b.data();
    const size_t m = out.numel();
    if (a.requires_grad()) {
      real* ga = a.grad();
      for (size_t i = 0; i < m; ++i) ga[i] += g[i] * pb2[i];
    }
    if (b.requires_grad()) {
      real* gb = b.grad();
      for (size_t i = 0; i < m; ++i) gb[i] += g[i] * pa2[i];
    }
  });
  return out;
}

Tensor scale(Tape& tp, const Tensor& a, real s) {
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] * s;
  tp.record({a}, out, [a, out, s]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    real* ga = a.grad();
    const size_t m = out.numel();
    for (size_t i = 0; i < m; ++i) ga[i] += g[i] * s;
  });
  return out;
}

Tensor div(Tape& tp, const Tensor& a, const Tensor& b, real eps) {
  check_same_shape(a, b, "div");
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad() || b.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  const real* pb = b.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] / (pb[i] + eps);
  tp.record({a, b}, out, [a, b, out, eps]() {
    const real* g = out.grad_data();
    const real* pa2 = a.data();
    const real* pb2 = b.data();
    const size_t m = out.numel();
    if (a.requires_grad()) {
      real* ga = a.grad();
      for (size_t i = 0; i < m; ++i) ga[i] += g[i] / (pb2[i] + eps);
    }
    if (b.requires_grad()) {
      real* gb = b.grad();
      for (size_t i = 0; i < m; ++i) {
        const real d = pb2[i] + eps;
        gb[i] -= g[i] * pa2[i] / (d * d);
      }
    }
  });
  return out;
}

Tensor abs(Tape& tp, const Tensor& a) {
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = std::abs(pa[i]);
  // subgradient 0 at x == 0
  tp.record({a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    const real* pa2 = a.data();
    real* ga = a.grad();
    const size_t m = out.numel();
    for (size_t i = 0; i < m; ++i) {
      if (pa2[i] > 0)
        ga[i] += g[i];
      else if (pa2[i] < 0)
        ga[i] -= g[i];
    }
  });
  return out;
}

Tensor pow(Tape& tp, const Tensor& a, real exponent) {
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = std::pow(pa[i], exponent);
  tp.record({a}, out, [a, out, exponent]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    const real* pa2 = a.data();
    real* ga = a.grad();
    const size_t m = out.numel();
    for (size_t i = 0; i < m; ++i) ga[i] += g[i] * exponent * std::pow(pa2[i], exponent - 1);
  });
  return out;
}

Tensor exp(Tape& tp, const Tensor& a) {
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = std::exp(pa[i]);
  tp.record({a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    const real* po2 = out.data();
    real* ga = a.grad();
    const size_t m = out.numel();
    for (size_t i = 0; i < m; ++i) ga[i] += g[i] * po2[i];
  });
  return out;
}

Tensor log(Tape& tp, const Tensor& a, bool guarded) {
  const real eps = guarded ? kLogEps : real(0);
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = std::log(pa[i] + eps);
  tp.record({a}, out, [a, out, eps]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    const real* pa2 = a.data();
    real* ga = a.grad();
    const size_t m = out.numel();
    for (size_t i = 0; i < m; ++i) ga[i] += g[i] / (pa2[i] + eps);
  });
  return out;
}

Tensor relu(Tape& tp, const Tensor& a) {
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] > 0 ? pa[i] : 0;
  tp.record({a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    const real* pa2 = a.data();
    real* ga = a.grad();
    const size_t m = out.numel();
    for (size_t i = 0; i < m; ++i)
      if (pa2[i] > 0) ga[i] += g[i];
  });
  return out;
}

Tensor sigmoid(Tape& tp, const Tensor& a) {
  Tensor out = Tensor::uninit(a.shape(), a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real* po = out.data();
  for (size_t i = 0; i < n; ++i) po[i] = real(1) / (real(1) + std::exp(-pa[i]));
  tp.record({a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    const real* po2 = out.data();
    real* ga = a.grad();
    const size_t m = out.numel();
    for (size_t i = 0; i < m; ++i) ga[i] += g[i] * po2[i] * (real(1) - po2[i]);
  });
  return out;
}

}  // namespace xd::ops
