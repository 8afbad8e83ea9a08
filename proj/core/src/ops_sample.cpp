#include <cmath>

#include "xdistill/ops.hpp"

namespace xd::ops {

std::pair<Tensor, Tensor> bilinear_sample(Tape& tp, const Tensor& image, const Tensor& coords) {
  const Shape ishape = image.shape();
  const Shape cshape = coords.shape();
  check(ishape.size() == 4, "bilinear_sample: image must be NCHW");
  check(cshape.size() == 4 && cshape[1] == 2, "bilinear_sample: coords must be N x 2 x H' x W'");
  check(cshape[0] == ishape[0], "bilinear_sample: batch mismatch");
  check(ishape[2] >= 2 && ishape[3] >= 2, "bilinear_sample: image must be at least 2x2");
  const int N = ishape[0], C = ishape[1], H = ishape[2], W = ishape[3];
  const int Ho = cshape[2], Wo = cshape[3];
  const size_t HW = size_t(H) * W;
  const size_t HoWo = size_t(Ho) * Wo;

  Tensor out =
      Tensor::zeros({N, C, Ho, Wo}, image.requires_grad() || coords.requires_grad());
  Tensor validity = Tensor::zeros({N, 1, Ho, Wo}, false);

  const real* pi = image.data();
  const real* pc = coords.data();
  real* po = out.data();
  real* pv = validity.data();
  for (int n = 0; n < N; ++n) {
    const real* cx = pc + size_t(n) * 2 * HoWo;
    const real* cy = cx + HoWo;
    for (size_t p = 0; p < HoWo; ++p) {
      const real x = cx[p], y = cy[p];
      // inclusive bounds; NaN coords compare false and land here too
      if (!(x >= 0 && x <= real(W - 1) && y >= 0 && y <= real(H - 1))) continue;
      pv[size_t(n) * HoWo + p] = 1;
      // clamp keeps the exact right/bottom edge inside the last cell
      const int x0 = std::min(int(std::floor(x)), W - 2);
      const int y0 = std::min(int(std::floor(y)), H - 2);
      const real fx = x - real(x0), fy = y - real(y0);
      const size_t base = size_t(y0) * W + size_t(x0);
      for (int c = 0; c < C; ++c) {
        const real* img = pi + (size_t(n) * C + c) * HW + base;
        const real top = (real(1) - fx) * img[0] + fx * img[1];
        const real bot = (real(1) - fx) * img[W] + fx * img[W + 1];
        po[(size_t(n) * C + c) * HoWo + p] = (real(1) - fy) * top + fy * bot;
      }
    }
  }

  tp.record({image, coords}, out, [image, coords, out, validity, N, C, H, W, HW, HoWo]() {
    const real* g = out.grad_data();
    const real* pi2 = image.data();
    const real* pc2 = coords.data();
    const real* pv2 = validity.data();
    for (int n = 0; n < N; ++n) {
      const real* cx = pc2 + size_t(n) * 2 * HoWo;
      const real* cy = cx + HoWo;
      for (size_t p = 0; p < HoWo; ++p) {
        if (pv2[size_t(n) * HoWo + p] == 0) continue;
        const real x = cx[p], y = cy[p];
        const int x0 = std::min(int(std::floor(x)), W - 2);
        const int y0 = std::min(int(std::floor(y)), H - 2);
        const real fx = x - real(x0), fy = y - real(y0);
        const size_t base = size_t(y0) * W + size_t(x0);
        real gx_acc = 0, gy_acc = 0;
        for (int c = 0; c < C; ++c) {
          const real go = g[(size_t(n) * C + c) * HoWo + p];
          if (image.requires_grad()) {
            real* gi = image.grad() + (size_t(n) * C + c) * HW + base;
            gi[0] += go * (real(1) - fx) * (real(1) - fy);
            gi[1] += go * fx * (real(1) - fy);
            gi[W] += go * (real(1) - fx) * fy;
            gi[W + 1] += go * fx * fy;
          }
          if (coords.requires_grad()) {
            const real* img = pi2 + (size_t(n) * C + c) * HW + base;
            gx_acc += go * ((real(1) - fy) * (img[1] - img[0]) + fy * (img[W + 1] - img[W]));
            gy_acc += go * ((real(1) - fx) * (img[W] - img[0]) + fx * (img[W + 1] - img[1]));
          }
        }
        if (coords.requires_grad()) {
          real* gc = coords.grad() + size_t(n) * 2 * HoWo;
          gc[p] += gx_acc;
          gc[HoWo + p] += gy_acc;
        }
      }
    }
  });
  return {out, validity};
}

}  // namespace xd::ops
