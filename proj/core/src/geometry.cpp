#include "xdistill/geometry.hpp"

#include <cmath>
#include <map>

namespace xd {

PoseRT PoseRT::from_axis_angle(const std::array<double, 3>& aa,
                               const std::array<double, 3>& trans) {
  const double x = aa[0], y = aa[1], z = aa[2];
  const double th = std::sqrt(x * x + y * y + z * z);
  double a, b;
  if (th < 1e-8) {
    a = 1.0 - th * th / 6.0;
    b = 0.5 - th * th / 24.0;
  } else {
    // 1 - cos th = 2 sin^2(th/2): no cancellation at small angles
    const double q = std::sin(th / 2) / (th / 2);
    a = std::sin(th) / th;
    b = 0.5 * q * q;
  }
  const double K[9] = {0, -z, y, z, 0, -x, -y, x, 0};
  PoseRT p;
  p.t = trans;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double k2 = 0;
      for (int m = 0; m < 3; ++m) k2 += K[r * 3 + m] * K[m * 3 + c];
      p.R[size_t(r * 3 + c)] = (r == c ? 1.0 : 0.0) + a * K[r * 3 + c] + b * k2;
    }
  return p;
}

PoseRT PoseRT::inverse() const {
  PoseRT inv;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) inv.R[size_t(r * 3 + c)] = R[size_t(c * 3 + r)];
  for (int r = 0; r < 3; ++r) {
    double acc = 0;
    for (int c = 0; c < 3; ++c) acc += inv.R[size_t(r * 3 + c)] * t[size_t(c)];
    inv.t[size_t(r)] = -acc;
  }
  return inv;
}

PoseRT PoseRT::compose(const PoseRT& other) const {
  PoseRT out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int m = 0; m < 3; ++m) acc += R[size_t(r * 3 + m)] * other.R[size_t(m * 3 + c)];
      out.R[size_t(r * 3 + c)] = acc;
    }
  for (int r = 0; r < 3; ++r) {
    double acc = t[size_t(r)];
    for (int c = 0; c < 3; ++c) acc += R[size_t(r * 3 + c)] * other.t[size_t(c)];
    out.t[size_t(r)] = acc;
  }
  return out;
}

std::array<double, 3> PoseRT::apply(const std::array<double, 3>& p) const {
  std::array<double, 3> out;
  for (int r = 0; r < 3; ++r)
    out[size_t(r)] = R[size_t(r * 3)] * p[0] + R[size_t(r * 3 + 1)] * p[1] +
                     R[size_t(r * 3 + 2)] * p[2] + t[size_t(r)];
  return out;
}

namespace geo {

Tensor make_pixel_grid(int H, int W) {
  check(H >= 1 && W >= 1, "make_pixel_grid: H, W must be positive");
  static std::map<std::pair<int, int>, Tensor> cache;
  auto it = cache.find({H, W});
  if (it != cache.end()) return it->second;
  Tensor grid = Tensor::zeros({3, H, W}, false);
  real* p = grid.data();
  const size_t HW = size_t(H) * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      p[size_t(y) * W + x] = real(x);
      p[HW + size_t(y) * W + x] = real(y);
      p[2 * HW + size_t(y) * W + x] = real(1);
    }
  cache.emplace(std::make_pair(H, W), grid);
  return grid;
}

namespace {

// skew(v): K*p = v x p
inline void skew(const real v[3], real K[9]) {
  K[0] = 0;
  K[1] = -v[2];
  K[2] = v[1];
  K[3] = v[2];
  K[4] = 0;
  K[5] = -v[0];
  K[6] = -v[1];
  K[7] = v[0];
  K[8] = 0;
}

// Below this angle the Rodrigues coefficients come from series. The bound is
// generous on purpose: the closed forms for the derivative terms subtract
// nearly equal quantities and shed all their significant bits at small theta,
// while the series is already at full precision well before 0.25.
constexpr real kThetaSeries = real(0.25);

// a = sin(th)/th, b = (1-cos th)/th^2 without cancellation
inline void rodrigues_ab(real th, real th2, real& a, real& b) {
  if (th < real(1e-6)) {
    a = real(1) - th2 / real(6);
    b = real(0.5) - th2 / real(24);
  } else {
    const real q = std::sin(th / 2) / (th / 2);
    a = std::sin(th) / th;
    b = real(0.5) * q * q;
  }
}

}  // namespace

Tensor axis_angle_to_rotation(Tape& tp, const Tensor& aa) {
  const Shape shape = aa.shape();
  check(shape.size() == 2 && shape[1] == 3, "axis_angle_to_rotation: expected N x 3, got " +
                                                shape_str(shape));
  const int N = shape[0];
  Tensor R = Tensor::zeros({N, 3, 3}, aa.requires_grad());
  const real* pa = aa.data();
  real* pr = R.data();
  for (int n = 0; n < N; ++n) {
    const real* v = pa + size_t(n) * 3;
    const real th2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    const real th = std::sqrt(th2);
    real a, b;
    rodrigues_ab(th, th2, a, b);
    real K[9], K2[9];
    skew(v, K);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        real acc = 0;
        for (int m = 0; m < 3; ++m) acc += K[r * 3 + m] * K[m * 3 + c];
        K2[r * 3 + c] = acc;
      }
    real* Rn = pr + size_t(n) * 9;
    for (int i = 0; i < 9; ++i) Rn[i] = a * K[i] + b * K2[i];
    Rn[0] += 1;
    Rn[4] += 1;
    Rn[8] += 1;
  }

  tp.record({aa}, R, [aa, R, N]() {
    if (!aa.requires_grad()) return;
    const real* g = R.grad_data();
    const real* pa2 = aa.data();
    real* ga = aa.grad();
    for (int n = 0; n < N; ++n) {
      const real* v = pa2 + size_t(n) * 3;
      const real* gR = g + size_t(n) * 9;
      const real th2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
      const real th = std::sqrt(th2);
      // c1 = a'/theta, c2 = b'/theta; closed forms cancel catastrophically for
      // small theta, so the series branch carries three terms
      real a, b, c1, c2;
      rodrigues_ab(th, th2, a, b);
      if (th < kThetaSeries) {
        const real th4 = th2 * th2;
        c1 = real(-1) / real(3) + th2 / real(30) - th4 / real(840);
        c2 = real(-1) / real(12) + th2 / real(180) - th4 / real(6720);
      } else {
        const real s = std::sin(th), c = std::cos(th);
        const real one_minus_c = th2 * b;
        c1 = (th * c - s) / (th2 * th);
        c2 = (th * s - real(2) * one_minus_c) / (th2 * th2);
      }
      real K[9], K2[9];
      skew(v, K);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          real acc = 0;
          for (int m = 0; m < 3; ++m) acc += K[r * 3 + m] * K[m * 3 + c];
          K2[r * 3 + c] = acc;
        }
      for (int i = 0; i < 3; ++i) {
        real e[3] = {0, 0, 0};
        e[i] = 1;
        real Ei[9];
        skew(e, Ei);
        // dR/dv_i = c1 v_i K + a E_i + c2 v_i K^2 + b (E_i K + K E_i)
        real acc = 0;
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) {
            real eik = 0, kei = 0;
            for (int m = 0; m < 3; ++m) {
              eik += Ei[r * 3 + m] * K[m * 3 + c];
              kei += K[r * 3 + m] * Ei[m * 3 + c];
            }
            const real d = c1 * v[i] * K[r * 3 + c] + a * Ei[r * 3 + c] +
                           c2 * v[i] * K2[r * 3 + c] + b * (eik + kei);
            acc += gR[r * 3 + c] * d;
          }
        ga[size_t(n) * 3 + i] += acc;
      }
    }
  });
  return R;
}

std::pair<Tensor, Tensor> warp_coordinates(Tape& tp, const Tensor& depth, const Intrinsics& K,
                                           const Tensor& R, const Tensor& t) {
  const Shape ds = depth.shape();
  check(ds.size() == 4 && ds[1] == 1, "warp_coordinates: depth must be N x 1 x H x W");
  const int N = ds[0], H = ds[2], W = ds[3];
  check(R.shape() == Shape{N, 3, 3}, "warp_coordinates: R must be N x 3 x 3");
  check(t.shape() == Shape{N, 3}, "warp_coordinates: t must be N x 3");
  check(K.fx > 0 && K.fy > 0, "warp_coordinates: invalid intrinsics");
  const size_t HW = size_t(H) * W;
  const real* pd = depth.data();
  for (size_t i = 0; i < size_t(N) * HW; ++i)
    check(pd[i] > 0, "warp_coordinates: depth must be strictly positive");

  const bool needs_grad = depth.requires_grad() || R.requires_grad() || t.requires_grad();
  Tensor coords = Tensor::uninit({N, 2, H, W}, needs_grad);
  Tensor front = Tensor::uninit({N, 1, H, W}, false);

  const Tensor grid = make_pixel_grid(H, W);
  const real* pg = grid.data();
  const real* pR = R.data();
  const real* pt = t.data();
  real* pc = coords.data();
  real* pf = front.data();
  const real inv_fx = real(1) / K.fx, inv_fy = real(1) / K.fy;
  for (int n = 0; n < N; ++n) {
    const real* Rn = pR + size_t(n) * 9;
    const real* tn = pt + size_t(n) * 3;
    const real* dn = pd + size_t(n) * HW;
    real* u = pc + size_t(n) * 2 * HW;
    real* v = u + HW;
    real* fn = pf + size_t(n) * HW;
    for (size_t p = 0; p < HW; ++p) {
      // camera ray through the pixel: K^-1 [x, y, 1]
      const real rx = (pg[p] - K.cx) * inv_fx;
      const real ry = (pg[HW + p] - K.cy) * inv_fy;
      const real d = dn[p];
      const real Px = d * rx, Py = d * ry, Pz = d;
      const real Qx = Rn[0] * Px + Rn[1] * Py + Rn[2] * Pz + tn[0];
      const real Qy = Rn[3] * Px + Rn[4] * Py + Rn[5] * Pz + tn[1];
      const real Qz = Rn[6] * Px + Rn[7] * Py + Rn[8] * Pz + tn[2];
      const real zt = Qz > kZClamp ? Qz : kZClamp;
      u[p] = K.fx * Qx / zt + K.cx;
      v[p] = K.fy * Qy / zt + K.cy;
      fn[p] = Qz > kZClamp ? real(1) : real(0);
    }
  }

  tp.record({depth, R, t}, coords, [depth, R, t, coords, K, N, H, W, HW]() {
    const Tensor grid2 = make_pixel_grid(H, W);
    const real* pg2 = grid2.data();
    const real* pd2 = depth.data();
    const real* pR2 = R.data();
    const real* pt2 = t.data();
    const real* g = coords.grad_data();
    const real inv_fx = real(1) / K.fx, inv_fy = real(1) / K.fy;
    for (int n = 0; n < N; ++n) {
      const real* Rn = pR2 + size_t(n) * 9;
      const real* tn = pt2 + size_t(n) * 3;
      const real* dn = pd2 + size_t(n) * HW;
      const real* gu = g + size_t(n) * 2 * HW;
      const real* gv = gu + HW;
      real* gdep = depth.requires_grad() ? depth.grad() + size_t(n) * HW : nullptr;
      real* gR = R.requires_grad() ? R.grad() + size_t(n) * 9 : nullptr;
      real* gt = t.requires_grad() ? t.grad() + size_t(n) * 3 : nullptr;
      for (size_t p = 0; p < HW; ++p) {
        const real rx = (pg2[p] - K.cx) * inv_fx;
        const real ry = (pg2[HW + p] - K.cy) * inv_fy;
        const real d = dn[p];
        const real Px = d * rx, Py = d * ry, Pz = d;
        const real Qx = Rn[0] * Px + Rn[1] * Py + Rn[2] * Pz + tn[0];
        const real Qy = Rn[3] * Px + Rn[4] * Py + Rn[5] * Pz + tn[1];
        const real Qz = Rn[6] * Px + Rn[7] * Py + Rn[8] * Pz + tn[2];
        const bool unclamped = Qz > kZClamp;
        const real zt = unclamped ? Qz : kZClamp;
        const real inv_z = real(1) / zt;
        const real gQx = gu[p] * K.fx * inv_z;
        const real gQy = gv[p] * K.fy * inv_z;
        // the clamp freezes z below the threshold, so no gradient there
        const real gQz = unclamped
                             ? -(gu[p] * K.fx * Qx + gv[p] * K.fy * Qy) * inv_z * inv_z
                             : real(0);
        if (gt) {
          gt[0] += gQx;
          gt[1] += gQy;
          gt[2] += gQz;
        }
        if (gR) {
          gR[0] += gQx * Px;
          gR[1] += gQx * Py;
          gR[2] += gQx * Pz;
          gR[3] += gQy * Px;
          gR[4] += gQy * Py;
          gR[5] += gQy * Pz;
          gR[6] += gQz * Px;
          gR[7] += gQz * Py;
          gR[8] += gQz * Pz;
        }
        if (gdep) {
          const real gPx = Rn[0] * gQx + Rn[3] * gQy + Rn[6] * gQz;
          const real gPy = Rn[1] * gQx + Rn[4] * gQy + Rn[7] * gQz;
          const real gPz = Rn[2] * gQx + Rn[5] * gQy + Rn[8] * gQz;
          gdep[p] += gPx * rx + gPy * ry + gPz;
        }
      }
    }
  });
  return {coords, front};
}

std::pair<Tensor, Tensor> synthesize_view(Tape& tp, const Tensor& I_s, const Tensor& coords,
                                          const Tensor& front_mask) {
  const Shape is = I_s.shape();
  const Shape cs = coords.shape();
  check(is.size() == 4 && cs.size() == 4 && cs[1] == 2, "synthesize_view: bad shapes");
  check(is[0] == cs[0] && is[2] == cs[2] && is[3] == cs[3],
        "synthesize_view: resolution mismatch " + shape_str(is) + " vs " + shape_str(cs));
  check(front_mask.shape() == Shape{is[0], 1, is[2], is[3]},
        "synthesize_view: front_mask shape mismatch");
  auto [warped, sample_valid] = ops::bilinear_sample(tp, I_s, coords);
  Tensor validity = Tensor::uninit(sample_valid.shape(), false);
  const real* a = sample_valid.data();
  const real* b = front_mask.data();
  real* o = validity.data();
  const size_t n = validity.numel();
  for (size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
  return {warped, validity};
}

Tensor scale_disparity_pyramid(Tape& tp, const Tensor& disp, int H, int W) {
  const Shape shape = disp.shape();
  check(shape.size() == 4, "scale_disparity_pyramid: input must be NCHW");
  const int N = shape[0], h = shape[2], w = shape[3];
  check(H >= h && W >= w && H % h == 0 && W % w == 0,
        "scale_disparity_pyramid: target " + std::to_string(H) + "x" + std::to_string(W) +
            " must be a multiple of source " + std::to_string(h) + "x" + std::to_string(w));
  if (H == h && W == w) return disp;

  // corner-aligned sample positions stay inside the source image, so the
  // sampler's validity map is all ones here
  static std::map<std::array<int, 5>, Tensor> cache;
  const std::array<int, 5> key{N, h, w, H, W};
  Tensor coords;
  auto it = cache.find(key);
  if (it != cache.end()) {
    coords = it->second;
  } else {
    coords = Tensor::zeros({N, 2, H, W}, false);
    real* pc = coords.data();
    const real sx = w > 1 ? real(w - 1) / real(W - 1) : real(0);
    const real sy = h > 1 ? real(h - 1) / real(H - 1) : real(0);
    const size_t HW = size_t(H) * W;
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          pc[size_t(n) * 2 * HW + size_t(y) * W + x] = real(x) * sx;
          pc[size_t(n) * 2 * HW + HW + size_t(y) * W + x] = real(y) * sy;
        }
    cache.emplace(key, coords);
  }
  return ops::bilinear_sample(tp, disp, coords).first;
}

}  // namespace geo
}  // namespace xd
