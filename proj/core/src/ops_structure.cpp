#include <cstring>

#include "xdistill/ops.hpp"

namespace xd::ops {

namespace {

void block_extents(const Shape& shape, int axis, size_t& outer, size_t& inner) {
  outer = 1;
  inner = 1;
  for (int ax = 0; ax < axis; ++ax) outer *= size_t(shape[ax]);
  for (size_t ax = size_t(axis) + 1; ax < shape.size(); ++ax) inner *= size_t(shape[ax]);
}

}  // namespace

Tensor concat(Tape& tp, const std::vector<Tensor>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const Shape first = parts[0].shape();
  check(axis >= 0 && axis < int(first.size()), "concat: axis out of range");
  int total = 0;
  bool needs_grad = false;
  for (const Tensor& p : parts) {
    const Shape s = p.shape();
    check(s.size() == first.size(), "concat: rank mismatch");
    for (size_t ax = 0; ax < s.size(); ++ax)
      check(int(ax) == axis || s[ax] == first[ax],
            "concat: shape mismatch on non-concat axis " + std::to_string(ax));
    total += s[size_t(axis)];
    needs_grad = needs_grad || p.requires_grad();
  }
  Shape out_shape = first;
  out_shape[size_t(axis)] = total;
  Tensor out = Tensor::uninit(out_shape, needs_grad);

  size_t outer, inner;
  block_extents(out_shape, axis, outer, inner);
  real* po = out.data();
  size_t offset = 0;  // running position along the concat axis
  for (const Tensor& p : parts) {
    const size_t dim = size_t(p.shape()[size_t(axis)]);
    const real* pp = p.data();
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(po + (o * size_t(total) + offset) * inner, pp + o * dim * inner,
                  dim * inner * sizeof(real));
    offset += dim;
  }
  tp.record(parts, out, [parts, out, axis, total, outer, inner]() {
    const real* g = out.grad_data();
    size_t off = 0;
    for (const Tensor& p : parts) {
      const size_t dim = size_t(p.shape()[size_t(axis)]);
      if (p.requires_grad()) {
        real* gp = p.grad();
        for (size_t o = 0; o < outer; ++o) {
          const real* src = g + (o * size_t(total) + off) * inner;
          real* dst = gp + o * dim * inner;
          for (size_t i = 0; i < dim * inner; ++i) dst[i] += src[i];
        }
      }
      off += dim;
    }
  });
  return out;
}

Tensor slice_axis(Tape& tp, const Tensor& a, int axis, int begin, int end) {
  const Shape shape = a.shape();
  check(axis >= 0 && axis < int(shape.size()), "slice_axis: axis out of range");
  check(begin >= 0 && end <= shape[size_t(axis)] && begin < end,
        "slice_axis: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
            ") for axis extent " + std::to_string(shape[size_t(axis)]));
  Shape out_shape = shape;
  out_shape[size_t(axis)] = end - begin;
  Tensor out = Tensor::uninit(out_shape, a.requires_grad());

  size_t outer, inner;
  block_extents(shape, axis, outer, inner);
  const size_t dim = size_t(shape[size_t(axis)]);
  const size_t odim = size_t(end - begin);
  const real* pa = a.data();
  real* po = out.data();
  for (size_t o = 0; o < outer; ++o)
    std::memcpy(po + o * odim * inner, pa + (o * dim + size_t(begin)) * inner,
                odim * inner * sizeof(real));
  tp.record({a}, out, [a, out, outer, inner, dim, odim, begin]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    real* ga = a.grad();
    for (size_t o = 0; o < outer; ++o) {
      const real* src = g + o * odim * inner;
      real* dst = ga + (o * dim + size_t(begin)) * inner;
      for (size_t i = 0; i < odim * inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

Tensor reshape(Tape& tp, const Tensor& a, Shape shape) {
  check(shape_numel(shape) == a.numel(),
        "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  Tensor out = Tensor::uninit(shape, a.requires_grad());
  std::memcpy(out.data(), a.data(), a.numel() * sizeof(real));
  tp.record({a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    real* ga = a.grad();
    const size_t m = a.numel();
    for (size_t i = 0; i < m; ++i) ga[i] += g[i];
  });
  return out;
}

Tensor upsample_nearest2x(Tape& tp, const Tensor& a) {
  const Shape shape = a.shape();
  check(shape.size() == 4, "upsample_nearest2x: expected NCHW, got " + shape_str(shape));
  const size_t N = size_t(shape[0]), C = size_t(shape[1]), H = size_t(shape[2]),
               W = size_t(shape[3]);
  Tensor out = Tensor::uninit({int(N), int(C), int(2 * H), int(2 * W)}, a.requires_grad());
  const real* pa = a.data();
  real* po = out.data();
  for (size_t nc = 0; nc < N * C; ++nc)
    for (size_t y = 0; y < 2 * H; ++y) {
      const real* row = pa + (nc * H + y / 2) * W;
      real* orow = po + (nc * 2 * H + y) * 2 * W;
      for (size_t x = 0; x < 2 * W; ++x) orow[x] = row[x / 2];
    }
  tp.record({a}, out, [a, out, N, C, H, W]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    real* ga = a.grad();
    for (size_t nc = 0; nc < N * C; ++nc)
      for (size_t y = 0; y < 2 * H; ++y) {
        const real* grow = g + (nc * 2 * H + y) * 2 * W;
        real* garow = ga + (nc * H + y / 2) * W;
        for (size_t x = 0; x < 2 * W; ++x) garow[x / 2] += grow[x];
      }
  });
  return out;
}

}  // namespace xd::ops
