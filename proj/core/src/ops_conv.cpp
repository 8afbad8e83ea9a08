#include <cmath>
#include <cstring>
#include <vector>

#include "xdistill/gemm.hpp"
#include "xdistill/ops.hpp"

namespace xd::ops {

namespace {

struct ConvDims {
  int N, Cin, H, W, Cout, k, stride, pad, Hout, Wout;
  size_t CK;    // Cin*k*k, the col-matrix row count
  size_t HoWo;  // Hout*Wout
};

ConvDims conv_dims(const Shape& in, const Shape& w, const Shape& b, int stride, int pad) {
  check(in.size() == 4, "conv2d: input must be NCHW, got " + shape_str(in));
  check(w.size() == 4 && w[2] == w[3], "conv2d: weight must be Cout x Cin x k x k, got " +
                                           shape_str(w));
  check(w[2] % 2 == 1, "conv2d: kernel size must be odd");
  check(b.size() == 1 && b[0] == w[0], "conv2d: bias length must equal Cout");
  check(in[1] == w[1], "conv2d: input channels " + std::to_string(in[1]) +
                           " != weight channels " + std::to_string(w[1]));
  check(stride >= 1 && pad >= 0, "conv2d: bad stride/padding");
  ConvDims d;
  d.N = in[0];
  d.Cin = in[1];
  d.H = in[2];
  d.W = in[3];
  d.Cout = w[0];
  d.k = w[2];
  d.stride = stride;
  d.pad = pad;
  d.Hout = (d.H + 2 * pad - d.k) / stride + 1;
  d.Wout = (d.W + 2 * pad - d.k) / stride + 1;
  check(d.Hout >= 1 && d.Wout >= 1, "conv2d: kernel larger than padded input");
  d.CK = size_t(d.Cin) * size_t(d.k) * size_t(d.k);
  d.HoWo = size_t(d.Hout) * size_t(d.Wout);
  return d;
}

// col[(c*k+ky)*k+kx][oy*Wout+ox] = x[c][oy*s-p+ky][ox*s-p+kx], 0 outside
void im2col(const real* x, const ConvDims& d, real* col) {
  for (int c = 0; c < d.Cin; ++c) {
    const real* xc = x + size_t(c) * d.H * d.W;
    for (int ky = 0; ky < d.k; ++ky)
      for (int kx = 0; kx < d.k; ++kx) {
        real* row = col + (size_t(c) * d.k * d.k + size_t(ky) * d.k + kx) * d.HoWo;
        // ox range with x-coordinate in bounds: 0 <= ox*s - p + kx < W
        int ox_lo = 0;
        while (ox_lo < d.Wout && ox_lo * d.stride - d.pad + kx < 0) ++ox_lo;
        int ox_hi = d.Wout;  // exclusive
        while (ox_hi > ox_lo && (ox_hi - 1) * d.stride - d.pad + kx >= d.W) --ox_hi;
        for (int oy = 0; oy < d.Hout; ++oy) {
          real* out = row + size_t(oy) * d.Wout;
          const int y = oy * d.stride - d.pad + ky;
          if (y < 0 || y >= d.H) {
            std::memset(out, 0, size_t(d.Wout) * sizeof(real));
            continue;
          }
          const real* src = xc + size_t(y) * d.W;
          for (int ox = 0; ox < ox_lo; ++ox) out[ox] = 0;
          if (d.stride == 1) {
            if (ox_hi > ox_lo)
              std::memcpy(out + ox_lo, src + (ox_lo - d.pad + kx),
                          size_t(ox_hi - ox_lo) * sizeof(real));
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox) out[ox] = src[ox * d.stride - d.pad + kx];
          }
          for (int ox = ox_hi; ox < d.Wout; ++ox) out[ox] = 0;
        }
      }
  }
}

// scatter-add the col-layout gradient back onto the input gradient
void col2im_acc(const real* col, const ConvDims& d, real* gx) {
  for (int c = 0; c < d.Cin; ++c) {
    real* gc = gx + size_t(c) * d.H * d.W;
    for (int ky = 0; ky < d.k; ++ky)
      for (int kx = 0; kx < d.k; ++kx) {
        const real* row = col + (size_t(c) * d.k * d.k + size_t(ky) * d.k + kx) * d.HoWo;
        int ox_lo = 0;
        while (ox_lo < d.Wout && ox_lo * d.stride - d.pad + kx < 0) ++ox_lo;
        int ox_hi = d.Wout;  // exclusive
        while (ox_hi > ox_lo && (ox_hi - 1) * d.stride - d.pad + kx >= d.W) --ox_hi;
        for (int oy = 0; oy < d.Hout; ++oy) {
          const int y = oy * d.stride - d.pad + ky;
          if (y < 0 || y >= d.H) continue;
          const real* src = row + size_t(oy) * d.Wout;
          real* dst = gc + size_t(y) * d.W;
          if (d.stride == 1) {
            real* dv = dst + (ox_lo - d.pad + kx);
            for (int ox = ox_lo; ox < ox_hi; ++ox) dv[ox - ox_lo] += src[ox];
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox * d.stride - d.pad + kx] += src[ox];
          }
        }
      }
  }
}

thread_local std::vector<real> tl_col;
thread_local std::vector<real> tl_dcol;

}  // namespace

Tensor conv2d(Tape& tp, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  const ConvDims d = conv_dims(input.shape(), weight.shape(), bias.shape(), stride, padding);
  const bool needs_grad = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
  Tensor out = Tensor::uninit({d.N, d.Cout, d.Hout, d.Wout}, needs_grad);

  if (tl_col.size() < d.CK * d.HoWo) tl_col.resize(d.CK * d.HoWo);
  const real* px = input.data();
  const real* pw = weight.data();
  const real* pb = bias.data();
  real* po = out.data();
  for (int n = 0; n < d.N; ++n) {
    im2col(px + size_t(n) * d.Cin * d.H * d.W, d, tl_col.data());
    real* on = po + size_t(n) * d.Cout * d.HoWo;
    gemm(d.Cout, int(d.HoWo), int(d.CK), pw, int(d.CK), false, tl_col.data(), int(d.HoWo), false,
         on, int(d.HoWo), false);
    for (int c = 0; c < d.Cout; ++c) {
      real* oc = on + size_t(c) * d.HoWo;
      for (size_t i = 0; i < d.HoWo; ++i) oc[i] += pb[c];
    }
  }

  tp.record({input, weight, bias}, out, [input, weight, bias, out, d]() {
    const real* g = out.grad_data();
    const real* px2 = input.data();
    const real* pw2 = weight.data();
    if (bias.requires_grad()) {
      real* gb = bias.grad();
      for (int n = 0; n < d.N; ++n)
        for (int c = 0; c < d.Cout; ++c) {
          const real* gc = g + (size_t(n) * d.Cout + c) * d.HoWo;
          real acc = 0;
          for (size_t i = 0; i < d.HoWo; ++i) acc += gc[i];
          gb[c] += acc;
        }
    }
    if (!input.requires_grad() && !weight.requires_grad()) return;
    if (tl_col.size() < d.CK * d.HoWo) tl_col.resize(d.CK * d.HoWo);
    if (input.requires_grad() && tl_dcol.size() < d.CK * d.HoWo) tl_dcol.resize(d.CK * d.HoWo);
    for (int n = 0; n < d.N; ++n) {
      const real* gn = g + size_t(n) * d.Cout * d.HoWo;
      if (weight.requires_grad()) {
        // dW += dOut_n * col_n^T; the col matrix is recomputed, not stored
        im2col(px2 + size_t(n) * d.Cin * d.H * d.W, d, tl_col.data());
        gemm(d.Cout, int(d.CK), int(d.HoWo), gn, int(d.HoWo), false, tl_col.data(), int(d.HoWo),
             true, weight.grad(), int(d.CK), true);
      }
      if (input.requires_grad()) {
        gemm(int(d.CK), int(d.HoWo), d.Cout, pw2, int(d.CK), true, gn, int(d.HoWo), false,
             tl_dcol.data(), int(d.HoWo), false);
        col2im_acc(tl_dcol.data(), d, input.grad() + size_t(n) * d.Cin * d.H * d.W);
      }
    }
  });
  return out;
}

Tensor batchnorm(Tape& tp, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, bool training, real momentum,
                 real eps) {
  const Shape shape = input.shape();
  check(shape.size() == 4, "batchnorm: input must be NCHW, got " + shape_str(shape));
  const int N = shape[0], C = shape[1], H = shape[2], W = shape[3];
  check(gamma.shape() == Shape{C} && beta.shape() == Shape{C},
        "batchnorm: gamma/beta must have length C=" + std::to_string(C));
  check(running_mean.shape() == Shape{C} && running_var.shape() == Shape{C},
        "batchnorm: running stats must have length C");
  const size_t HW = size_t(H) * size_t(W);
  const size_t count = size_t(N) * HW;
  check(count > 0, "batchnorm: empty input");

  const bool needs_grad =
      input.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Tensor out = Tensor::uninit(shape, needs_grad);

  // per-channel statistics used by this forward (batch stats in train mode,
  // running stats in eval); kept for the backward closure
  auto mu = std::make_shared<std::vector<real>>(size_t(C));
  auto inv_std = std::make_shared<std::vector<real>>(size_t(C));

  const real* px = input.data();
  for (int c = 0; c < C; ++c) {
    real m, v;
    if (training) {
      real s = 0;
      for (int n = 0; n < N; ++n) {
        const real* pc = px + (size_t(n) * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) s += pc[i];
      }
      m = s / real(count);
      real s2 = 0;
      for (int n = 0; n < N; ++n) {
        const real* pc = px + (size_t(n) * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) {
          const real dv = pc[i] - m;
          s2 += dv * dv;
        }
      }
      v = s2 / real(count);
      running_mean.data()[c] = (real(1) - momentum) * running_mean.data()[c] + momentum * m;
      running_var.data()[c] = (real(1) - momentum) * running_var.data()[c] + momentum * v;
    } else {
      m = running_mean.data()[c];
      v = running_var.data()[c];
    }
    (*mu)[c] = m;
    (*inv_std)[c] = real(1) / std::sqrt(v + eps);
  }

  const real* pg = gamma.data();
  const real* pbeta = beta.data();
  real* po = out.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* pc = px + (size_t(n) * C + c) * HW;
      real* oc = po + (size_t(n) * C + c) * HW;
      const real m = (*mu)[c], is = (*inv_std)[c], gsc = pg[c], b = pbeta[c];
      for (size_t i = 0; i < HW; ++i) oc[i] = (pc[i] - m) * is * gsc + b;
    }

  tp.record({input, gamma, beta}, out,
            [input, gamma, beta, out, mu, inv_std, training, N, C, HW, count]() {
              const real* g = out.grad_data();
              const real* px2 = input.data();
              const real* pg2 = gamma.data();
              for (int c = 0; c < C; ++c) {
                const real m = (*mu)[c], is = (*inv_std)[c];
                // channel sums of dy and dy*xhat feed every other term
                real sum_dy = 0, sum_dy_xhat = 0;
                for (int n = 0; n < N; ++n) {
                  const real* gc = g + (size_t(n) * C + c) * HW;
                  const real* pc = px2 + (size_t(n) * C + c) * HW;
                  for (size_t i = 0; i < HW; ++i) {
                    sum_dy += gc[i];
                    sum_dy_xhat += gc[i] * (pc[i] - m) * is;
                  }
                }
                if (gamma.requires_grad()) gamma.grad()[c] += sum_dy_xhat;
                if (beta.requires_grad()) beta.grad()[c] += sum_dy;
                if (!input.requires_grad()) continue;
                const real gsc = pg2[c];
                if (training) {
                  const real inv_cnt = real(1) / real(count);
                  for (int n = 0; n < N; ++n) {
                    const real* gc = g + (size_t(n) * C + c) * HW;
                    const real* pc = px2 + (size_t(n) * C + c) * HW;
                    real* gx = input.grad() + (size_t(n) * C + c) * HW;
                    for (size_t i = 0; i < HW; ++i) {
                      const real xhat = (pc[i] - m) * is;
                      gx[i] += gsc * is *
                               (gc[i] - inv_cnt * (sum_dy + xhat * sum_dy_xhat));
                    }
                  }
                } else {
                  // running stats are constants in eval mode
                  for (int n = 0; n < N; ++n) {
                    const real* gc = g + (size_t(n) * C + c) * HW;
                    real* gx = input.grad() + (size_t(n) * C + c) * HW;
                    for (size_t i = 0; i < HW; ++i) gx[i] += gsc * is * gc[i];
                  }
                }
              }
            });
  return out;
}

}  // namespace xd::ops
