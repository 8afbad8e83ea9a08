#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "xdistill/tape.hpp"
#include "xdistill/tensor.hpp"

namespace xd::ops {

inline constexpr real kLogEps = real(1e-7);

// ---- elementwise -----------------------------------------------------------
Tensor add(Tape& tp, const Tensor& a, const Tensor& b);
Tensor add(Tape& tp, const Tensor& a, real b);
Tensor sub(Tape& tp, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tp, const Tensor& a, real b);
Tensor mul(Tape& tp, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tp, const Tensor& a, real s);
// a / (b + eps); eps left at 0 where the denominator is bounded away from zero
Tensor div(Tape& tp, const Tensor& a, const Tensor& b, real eps = 0);
Tensor abs(Tape& tp, const Tensor& a);
Tensor pow(Tape& tp, const Tensor& a, real exponent);
Tensor exp(Tape& tp, const Tensor& a);
Tensor log(Tape& tp, const Tensor& a, bool guarded = true);
Tensor relu(Tape& tp, const Tensor& a);
Tensor sigmoid(Tape& tp, const Tensor& a);

// ---- reductions ------------------------------------------------------------
Tensor sum(Tape& tp, const Tensor& a);   // -> shape {1}
Tensor mean(Tape& tp, const Tensor& a);  // -> shape {1}
Tensor sum(Tape& tp, const Tensor& a, const std::vector<int>& axes, bool keepdim);
Tensor mean(Tape& tp, const Tensor& a, const std::vector<int>& axes, bool keepdim);
// min over one axis; gradient routed to the first argmin on ties
Tensor reduce_min(Tape& tp, const Tensor& a, int axis, bool keepdim);

// ---- structure -------------------------------------------------------------
Tensor concat(Tape& tp, const std::vector<Tensor>& parts, int axis);
Tensor slice_axis(Tape& tp, const Tensor& a, int axis, int begin, int end);
Tensor reshape(Tape& tp, const Tensor& a, Shape shape);
Tensor upsample_nearest2x(Tape& tp, const Tensor& a);  // NCHW -> NC(2H)(2W)

// ---- neural-net kernels ----------------------------------------------------
// input NxCinxHxW, weight CoutxCinxkxk (k odd), bias Cout
Tensor conv2d(Tape& tp, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

// running_mean/running_var are per-channel buffers, updated in training mode
Tensor batchnorm(Tape& tp, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, bool training,
                 real momentum = real(0.1), real eps = real(1e-5));

// image NxCxHxW, coords Nx2xH'xW' in pixel units (plane 0 = x/column,
// plane 1 = y/row). Returns sampled image and a {0,1} validity map; invalid
// output pixels are 0 and carry no gradient. Differentiable w.r.t. image and
// coords.
std::pair<Tensor, Tensor> bilinear_sample(Tape& tp, const Tensor& image, const Tensor& coords);

// ---- fused building blocks -------------------------------------------------
// 3x3 mean filter with reflection padding (SSIM window)
Tensor box_filter3(Tape& tp, const Tensor& a);
// x / (spatial mean of x per (n,c) + eps)
Tensor normalize_spatial_mean(Tape& tp, const Tensor& a, real eps = real(1e-7));
// mean(|dx d| * exp(-|dx I|) + |dy d| * exp(-|dy I|)); image gradients are
// channel-means; no gradient flows into image
Tensor edge_aware_smoothness(Tape& tp, const Tensor& d, const Tensor& image);
// logits NxCxHxW, labels length N*H*W with values in {0..C-1} u {ignore_id};
// mean cross entropy over non-ignored pixels, 0 if all ignored
Tensor softmax_cross_entropy(Tape& tp, const Tensor& logits, const std::vector<uint8_t>& labels,
                             int ignore_id);

}  // namespace xd::ops
