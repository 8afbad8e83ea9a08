#pragma once

#include <cstdint>
#include <vector>

#include "xdistill/ops.hpp"

namespace xd {

struct LossConfig {
  real alpha = real(0.85);           // L1 weight; (1-alpha) weights the SSIM term
  real lambda_sm_base = real(1e-3);  // smoothness weight at full scale, /2^k below
  int n_scales = 4;
  real lambda_d2s_final = real(0.005);
  enum class Schedule { kConstant, kLinear } schedule = Schedule::kLinear;
  int total_steps = 1;
};

// values >= 0; mask is a constant {0,1} map — masked-out pixels contribute
// neither loss nor gradient
struct PerPixelLossMap {
  Tensor values;
  Tensor mask;
};

namespace losses {

// per-pixel SSIM over a 3x3 mean-pooled window, C1=0.01^2, C2=0.03^2;
// same shape as the inputs (per channel)
Tensor ssim(Tape& tp, const Tensor& a, const Tensor& b);

// alpha * channel-mean L1 + (1-alpha) * (1-SSIM)/2, channel-averaged to
// N x 1 x H x W; mask starts as all-ones
PerPixelLossMap photometric_loss(Tape& tp, const Tensor& I_t, const Tensor& I_hat, real alpha);

// per-pixel minimum over warped-source losses (each source's invalid pixels
// excluded from the min); auto-mask drops pixels where the best identity
// (unwarped) loss beats the best warped loss. identity maps are treated as
// constants. use_min=false averages over valid sources instead of taking the
// minimum; use_automask=false skips the identity comparison. The two switches
// are independent.
PerPixelLossMap min_reprojection_automask(Tape& tp, const std::vector<PerPixelLossMap>& warped,
                                          const std::vector<PerPixelLossMap>& identity,
                                          bool use_min = true, bool use_automask = true);

// edge-aware first-order penalty on mean-normalized disparity
Tensor smoothness_loss(Tape& tp, const Tensor& disp, const Tensor& image);

Tensor d2s_distillation_loss(Tape& tp, const Tensor& logits, const std::vector<uint8_t>& labels,
                             int ignore_id);

real lambda_schedule(int step, const LossConfig& cfg);

// sum(values*mask) / count(mask); exact 0 on an all-zero mask
Tensor masked_mean(Tape& tp, const PerPixelLossMap& map);

// sum_k mean(masked photo_k) + sum_k lambda_sm_base/2^k * smooth_k
//   + lambda_d2s(step) * d2s   (d2s may be an empty Tensor when disabled)
Tensor total_loss(Tape& tp, const std::vector<PerPixelLossMap>& photo,
                  const std::vector<Tensor>& smooth, const Tensor& d2s, int step,
                  const LossConfig& cfg);

}  // namespace losses
}  // namespace xd
