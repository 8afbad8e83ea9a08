#include <cmath>
#include <memory>

#include "xdistill/ops.hpp"

namespace xd::ops {

namespace {

// reflect-101: -1 -> 1, H -> H-2 (only ever one step out for a 3x3 window)
inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace

Tensor box_filter3(Tape& tp, const Tensor& a) {
  const Shape shape = a.shape();
  check(shape.size() == 4, "box_filter3: input must be NCHW");
  const int N = shape[0], C = shape[1], H = shape[2], W = shape[3];
  check(H >= 2 && W >= 2, "box_filter3: spatial dims must be at least 2");
  const size_t HW = size_t(H) * W;
  Tensor out = Tensor::uninit(shape, a.requires_grad());
  const real ninth = real(1) / real(9);

  const real* pa = a.data();
  real* po = out.data();
  const bool small = H < 4 || W < 4;
  std::vector<real> scratch(small ? 0 : HW);
  for (int nc = 0; nc < N * C; ++nc) {
    const real* xc = pa + size_t(nc) * HW;
    real* oc = po + size_t(nc) * HW;
    if (small) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          real acc = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            const real* row = xc + size_t(reflect(y + dy, H)) * W;
            for (int dx = -1; dx <= 1; ++dx) acc += row[reflect(x + dx, W)];
          }
          oc[size_t(y) * W + x] = acc * ninth;
        }
      continue;
    }
    // separable: horizontal 3-tap into scratch, then vertical 3-tap;
    // reflect-101 appears only in the border columns/rows
    for (int y = 0; y < H; ++y) {
      const real* r = xc + size_t(y) * W;
      real* t = scratch.data() + size_t(y) * W;
      t[0] = r[0] + 2 * r[1];
      for (int x = 1; x < W - 1; ++x) t[x] = r[x - 1] + r[x] + r[x + 1];
      t[W - 1] = r[W - 1] + 2 * r[W - 2];
    }
    for (int y = 0; y < H; ++y) {
      const real* t0 = scratch.data() + size_t(reflect(y - 1, H)) * W;
      const real* t1 = scratch.data() + size_t(y) * W;
      const real* t2 = scratch.data() + size_t(reflect(y + 1, H)) * W;
      real* o = oc + size_t(y) * W;
      for (int x = 0; x < W; ++x) o[x] = (t0[x] + t1[x] + t2[x]) * ninth;
    }
  }
  tp.record({a}, out, [a, out, N, C, H, W, HW, ninth, small]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    real* ga = a.grad();
    if (small) {
      for (int nc = 0; nc < N * C; ++nc) {
        const real* gc = g + size_t(nc) * HW;
        real* gac = ga + size_t(nc) * HW;
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const real go = gc[size_t(y) * W + x] * ninth;
            for (int dy = -1; dy <= 1; ++dy) {
              real* row = gac + size_t(reflect(y + dy, H)) * W;
              for (int dx = -1; dx <= 1; ++dx) row[reflect(x + dx, W)] += go;
            }
          }
      }
      return;
    }
    // adjoint of the separable pair: vertical adjoint rowwise into scratch,
    // then horizontal adjoint per row. 1D adjoint of (reflect-101 3-tap sum):
    //   a[0]   = g[0] + g[1]
    //   a[1]   = 2 g[0] + g[1] + g[2]
    //   a[i]   = g[i-1] + g[i] + g[i+1]        (2 <= i <= n-3)
    //   a[n-2] = g[n-3] + g[n-2] + 2 g[n-1]
    //   a[n-1] = g[n-2] + g[n-1]
    std::vector<real> scratch(HW);
    for (int nc = 0; nc < N * C; ++nc) {
      const real* gc = g + size_t(nc) * HW;
      real* gac = ga + size_t(nc) * HW;
      auto row = [&](int y) { return gc + size_t(y) * W; };
      auto srow = [&](int y) { return scratch.data() + size_t(y) * W; };
      for (int x = 0; x < W; ++x) {
        srow(0)[x] = row(0)[x] + row(1)[x];
        srow(1)[x] = 2 * row(0)[x] + row(1)[x] + row(2)[x];
        srow(H - 2)[x] = row(H - 3)[x] + row(H - 2)[x] + 2 * row(H - 1)[x];
        srow(H - 1)[x] = row(H - 2)[x] + row(H - 1)[x];
      }
      for (int y = 2; y < H - 2; ++y) {
        const real* g0 = row(y - 1);
        const real* g1 = row(y);
        const real* g2 = row(y + 1);
        real* s = srow(y);
        for (int x = 0; x < W; ++x) s[x] = g0[x] + g1[x] + g2[x];
      }
      for (int y = 0; y < H; ++y) {
        const real* s = srow(y);
        real* dst = gac + size_t(y) * W;
        dst[0] += (s[0] + s[1]) * ninth;
        dst[1] += (2 * s[0] + s[1] + s[2]) * ninth;
        for (int x = 2; x < W - 2; ++x) dst[x] += (s[x - 1] + s[x] + s[x + 1]) * ninth;
        dst[W - 2] += (s[W - 3] + s[W - 2] + 2 * s[W - 1]) * ninth;
        dst[W - 1] += (s[W - 2] + s[W - 1]) * ninth;
      }
    }
  });
  return out;
}

Tensor normalize_spatial_mean(Tape& tp, const Tensor& a, real eps) {
  const Shape shape = a.shape();
  check(shape.size() == 4, "normalize_spatial_mean: input must be NCHW");
  const int N = shape[0], C = shape[1];
  const size_t HW = size_t(shape[2]) * size_t(shape[3]);
  check(HW > 0, "normalize_spatial_mean: empty spatial extent");
  Tensor out = Tensor::uninit(shape, a.requires_grad());

  auto denom = std::make_shared<std::vector<real>>(size_t(N) * C);
  const real* pa = a.data();
  real* po = out.data();
  for (int nc = 0; nc < N * C; ++nc) {
    const real* xc = pa + size_t(nc) * HW;
    real s = 0;
    for (size_t i = 0; i < HW; ++i) s += xc[i];
    const real d = s / real(HW) + eps;
    (*denom)[size_t(nc)] = d;
    real* oc = po + size_t(nc) * HW;
    for (size_t i = 0; i < HW; ++i) oc[i] = xc[i] / d;
  }
  tp.record({a}, out, [a, out, denom, N, C, HW]() {
    if (!a.requires_grad()) return;
    const real* g = out.grad_data();
    const real* pa2 = a.data();
    real* ga = a.grad();
    for (int nc = 0; nc < N * C; ++nc) {
      const real* gc = g + size_t(nc) * HW;
      const real* xc = pa2 + size_t(nc) * HW;
      real* gac = ga + size_t(nc) * HW;
      const real d = (*denom)[size_t(nc)];
      // y = x/d with d depending on mean(x): gx = g/d - sum(g*x)/d^2 / HW
      real gdot = 0;
      for (size_t i = 0; i < HW; ++i) gdot += gc[i] * xc[i];
      const real corr = gdot / (d * d) / real(HW);
      for (size_t i = 0; i < HW; ++i) gac[i] += gc[i] / d - corr;
    }
  });
  return out;
}

Tensor edge_aware_smoothness(Tape& tp, const Tensor& d, const Tensor& image) {
  const Shape ds = d.shape();
  const Shape is = image.shape();
  check(ds.size() == 4 && ds[1] == 1, "edge_aware_smoothness: d must be N x 1 x H x W");
  check(is.size() == 4 && is[0] == ds[0] && is[2] == ds[2] && is[3] == ds[3],
        "edge_aware_smoothness: image spatial size must match d");
  const int N = ds[0], C = is[1], H = ds[2], W = ds[3];
  const size_t HW = size_t(H) * W;
  Tensor out = Tensor::zeros({1}, d.requires_grad());

  // per-pixel weights e^{-|grad I|} with channel-mean image gradients; the
  // image is treated as a constant (no gradient path into it)
  auto wx = std::make_shared<std::vector<real>>(size_t(N) * HW, real(0));
  auto wy = std::make_shared<std::vector<real>>(size_t(N) * HW, real(0));
  const real* pi = image.data();
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const size_t p = size_t(y) * W + x;
        real gx = 0, gy = 0;
        for (int c = 0; c < C; ++c) {
          const real* img = pi + (size_t(n) * C + c) * HW;
          if (x + 1 < W) gx += std::abs(img[p + 1] - img[p]);
          if (y + 1 < H) gy += std::abs(img[p + W] - img[p]);
        }
        (*wx)[size_t(n) * HW + p] = std::exp(-gx / real(C));
        (*wy)[size_t(n) * HW + p] = std::exp(-gy / real(C));
      }

  // forward differences vanish on the last column/row; single mean over N*H*W
  const real* pd = d.data();
  real acc = 0;
  for (int n = 0; n < N; ++n) {
    const real* dn = pd + size_t(n) * HW;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const size_t p = size_t(y) * W + x;
        if (x + 1 < W) acc += std::abs(dn[p + 1] - dn[p]) * (*wx)[size_t(n) * HW + p];
        if (y + 1 < H) acc += std::abs(dn[p + W] - dn[p]) * (*wy)[size_t(n) * HW + p];
      }
  }
  const real inv_cnt = real(1) / real(size_t(N) * HW);
  out.data()[0] = acc * inv_cnt;

  tp.record({d}, out, [d, out, wx, wy, N, H, W, HW, inv_cnt]() {
    if (!d.requires_grad()) return;
    const real g = out.grad_data()[0] * inv_cnt;
    const real* pd2 = d.data();
    real* gd = d.grad();
    for (int n = 0; n < N; ++n) {
      const real* dn = pd2 + size_t(n) * HW;
      real* gn = gd + size_t(n) * HW;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const size_t p = size_t(y) * W + x;
          if (x + 1 < W) {
            const real diff = dn[p + 1] - dn[p];
            const real s = diff > 0 ? real(1) : (diff < 0 ? real(-1) : real(0));
            const real gw = g * (*wx)[size_t(n) * HW + p] * s;
            gn[p + 1] += gw;
            gn[p] -= gw;
          }
          if (y + 1 < H) {
            const real diff = dn[p + W] - dn[p];
            const real s = diff > 0 ? real(1) : (diff < 0 ? real(-1) : real(0));
            const real gw = g * (*wy)[size_t(n) * HW + p] * s;
            gn[p + W] += gw;
            gn[p] -= gw;
          }
        }
    }
  });
  return out;
}

Tensor softmax_cross_entropy(Tape& tp, const Tensor& logits, const std::vector<uint8_t>& labels,
                             int ignore_id) {
  const Shape shape = logits.shape();
  check(shape.size() == 4, "softmax_cross_entropy: logits must be N x C x H x W");
  const int N = shape[0], C = shape[1], H = shape[2], W = shape[3];
  const size_t HW = size_t(H) * W;
  check(labels.size() == size_t(N) * HW,
        "softmax_cross_entropy: label count " + std::to_string(labels.size()) +
            " != N*H*W = " + std::to_string(size_t(N) * HW));

  auto lab = std::make_shared<std::vector<uint8_t>>(labels);
  size_t count = 0;
  const real* pl = logits.data();
  real acc = 0;
  for (int n = 0; n < N; ++n)
    for (size_t p = 0; p < HW; ++p) {
      const int label = (*lab)[size_t(n) * HW + p];
      if (label == ignore_id) continue;
      check(label < C, "softmax_cross_entropy: label " + std::to_string(label) +
                           " out of range for C=" + std::to_string(C));
      ++count;
      const real* lp = pl + size_t(n) * C * HW + p;
      real m = lp[0];
      for (int c = 1; c < C; ++c) m = std::max(m, lp[size_t(c) * HW]);
      real se = 0;
      for (int c = 0; c < C; ++c) se += std::exp(lp[size_t(c) * HW] - m);
      acc += m + std::log(se) - lp[size_t(label) * HW];
    }

  Tensor out = Tensor::zeros({1}, logits.requires_grad() && count > 0);
  out.data()[0] = count > 0 ? acc / real(count) : real(0);
  if (count == 0) return out;

  tp.record({logits}, out, [logits, out, lab, ignore_id, N, C, HW, count]() {
    if (!logits.requires_grad()) return;
    const real g = out.grad_data()[0] / real(count);
    const real* pl2 = logits.data();
    real* gl = logits.grad();
    for (int n = 0; n < N; ++n)
      for (size_t p = 0; p < HW; ++p) {
        const int label = (*lab)[size_t(n) * HW + p];
        if (label == ignore_id) continue;
        const real* lp = pl2 + size_t(n) * C * HW + p;
        real* gp = gl + size_t(n) * C * HW + p;
        real m = lp[0];
        for (int c = 1; c < C; ++c) m = std::max(m, lp[size_t(c) * HW]);
        real se = 0;
        for (int c = 0; c < C; ++c) se += std::exp(lp[size_t(c) * HW] - m);
        for (int c = 0; c < C; ++c) {
          const real soft = std::exp(lp[size_t(c) * HW] - m) / se;
          gp[size_t(c) * HW] += g * (soft - (c == label ? real(1) : real(0)));
        }
      }
  });
  return out;
}

}  // namespace xd::ops
