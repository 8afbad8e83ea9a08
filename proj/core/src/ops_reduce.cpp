#include <algorithm>
#include <limits>

#include "xdistill/ops.hpp"

namespace xd::ops {

namespace {

// Walks the input linearly while tracking the output index incrementally
// (odometer with per-axis output strides), handling the innermost run of
// same-status axes as one contiguous block so the hot loop vectorizes.
// apply(o_idx, i_base, len, reduced_block) is called once per block.
template <class F>
void for_each_block(const Shape& shape, const std::vector<char>& is_reduced, F&& apply) {
  const int nd = int(shape.size());
  size_t n = 1;
  for (int ax = 0; ax < nd; ++ax) n *= size_t(shape[ax]);
  if (n == 0) return;

  // innermost run of axes sharing reduced/kept status
  int run_start = nd;
  const char tail_status = nd > 0 ? is_reduced[size_t(nd - 1)] : 0;
  while (run_start > 0 && is_reduced[size_t(run_start - 1)] == tail_status) --run_start;
  size_t block = 1;
  for (int ax = run_start; ax < nd; ++ax) block *= size_t(shape[ax]);

  std::vector<size_t> ostride(size_t(run_start), 0);
  size_t mul = tail_status ? 1 : block;  // kept tail occupies `block` output slots
  for (int ax = run_start - 1; ax >= 0; --ax) {
    if (!is_reduced[size_t(ax)]) {
      ostride[size_t(ax)] = mul;
      mul *= size_t(shape[ax]);
    }
  }

  std::vector<size_t> coord(size_t(run_start), 0);
  size_t oidx = 0;
  for (size_t i = 0; i < n; i += block) {
    apply(oidx, i, block, tail_status != 0);
    // odometer increment over the outer axes
    for (int ax = run_start - 1; ax >= 0; --ax) {
      ++coord[size_t(ax)];
      oidx += ostride[size_t(ax)];
      if (coord[size_t(ax)] < size_t(shape[size_t(ax)])) break;
      oidx -= ostride[size_t(ax)] * coord[size_t(ax)];
      coord[size_t(ax)] = 0;
    }
  }
}

Shape reduced_shape(const Shape& shape, const std::vector<char>& is_reduced, bool keepdim) {
  Shape out;
  for (size_t ax = 0; ax < shape.size(); ++ax) {
    if (!is_reduced[ax])
      out.push_back(shape[ax]);
    else if (keepdim)
      out.push_back(1);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

std::vector<char> axis_mask(const Shape& shape, const std::vector<int>& axes, const char* op) {
  std::vector<char> mask(shape.size(), 0);
  for (int ax : axes) {
    check(ax >= 0 && ax < int(shape.size()), std::string(op) + ": axis out of range");
    mask[size_t(ax)] = 1;
  }
  return mask;
}

}  // namespace

Tensor sum(Tape& tp, const Tensor& a) {
  Tensor out = Tensor::zeros({1}, a.requires_grad());
  const size_t n = a.numel();
  const real* pa = a.data();
  real acc = 0;
  for (size_t i = 0; i < n; ++i) acc += pa[i];
  out.data()[0] = acc;
  tp.record({a}, out, [a, out]() {
    if (!a.requires_grad()) return;
    const real g = out.grad_data()[0];
    real* ga = a.grad();
    const size_t m = a.numel();
    for (size_t i = 0; i < m; ++i) ga[i] += g;
  });
  return out;
}

Tensor mean(Tape& tp, const Tensor& a) {
  const size_t n = a.numel();
  check(n > 0, "mean: empty tensor");
  Tensor s = sum(tp, a);
  return scale(tp, s, real(1) / real(n));
}

Tensor sum(Tape& tp, const Tensor& a, const std::vector<int>& axes, bool keepdim) {
  const auto mask = axis_mask(a.shape(), axes, "sum");
  Tensor out = Tensor::zeros(reduced_shape(a.shape(), mask, keepdim), a.requires_grad());
  const real* pa = a.data();
  real* po = out.data();
  const Shape shape = a.shape();
  for_each_block(shape, mask, [&](size_t oidx, size_t i, size_t len, bool reduced) {
    if (reduced) {
      real acc = 0;
      for (size_t j = 0; j < len; ++j) acc += pa[i + j];
      po[oidx] += acc;
    } else {
      for (size_t j = 0; j < len; ++j) po[oidx + j] += pa[i + j];
    }
  });
  tp.record({a}, out, [a, out, shape, mask]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    real* ga = a.grad();
    for_each_block(shape, mask, [&](size_t oidx, size_t i, size_t len, bool reduced) {
      if (reduced) {
        const real gv = g[oidx];
        for (size_t j = 0; j < len; ++j) ga[i + j] += gv;
      } else {
        for (size_t j = 0; j < len; ++j) ga[i + j] += g[oidx + j];
      }
    });
  });
  return out;
}

Tensor mean(Tape& tp, const Tensor& a, const std::vector<int>& axes, bool keepdim) {
  const auto mask = axis_mask(a.shape(), axes, "mean");
  size_t count = 1;
  for (size_t ax = 0; ax < mask.size(); ++ax)
    if (mask[ax]) count *= size_t(a.shape()[ax]);
  check(count > 0, "mean: empty reduction");
  Tensor s = sum(tp, a, axes, keepdim);
  return scale(tp, s, real(1) / real(count));
}

Tensor reduce_min(Tape& tp, const Tensor& a, int axis, bool keepdim) {
  const Shape shape = a.shape();
  check(axis >= 0 && axis < int(shape.size()), "reduce_min: axis out of range");
  size_t outer = 1, inner = 1;
  for (int ax = 0; ax < axis; ++ax) outer *= size_t(shape[ax]);
  for (size_t ax = size_t(axis) + 1; ax < shape.size(); ++ax) inner *= size_t(shape[ax]);
  const size_t dim = size_t(shape[size_t(axis)]);
  check(dim > 0, "reduce_min: empty axis");

  std::vector<char> mask(shape.size(), 0);
  mask[size_t(axis)] = 1;
  Tensor out = Tensor::uninit(reduced_shape(shape, mask, keepdim), a.requires_grad());

  // first index wins on ties
  auto argmin = std::make_shared<std::vector<uint32_t>>(outer * inner);
  const real* pa = a.data();
  real* po = out.data();
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      real best = std::numeric_limits<real>::infinity();
      uint32_t best_k = 0;
      for (size_t k = 0; k < dim; ++k) {
        const real v = pa[(o * dim + k) * inner + in];
        if (v < best) {
          best = v;
          best_k = uint32_t(k);
        }
      }
      po[o * inner + in] = best;
      (*argmin)[o * inner + in] = best_k;
    }
  }
  tp.record({a}, out, [a, out, argmin, outer, inner, dim]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    real* ga = a.grad();
    for (size_t o = 0; o < outer; ++o)
      for (size_t in = 0; in < inner; ++in) {
        const size_t k = (*argmin)[o * inner + in];
        ga[(o * dim + k) * inner + in] += g[o * inner + in];
      }
  });
  return out;
}

}  // namespace xd::ops
