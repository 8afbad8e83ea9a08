#pragma once

#include <array>
#include <utility>

#include "xdistill/ops.hpp"

namespace xd {

// Pinhole model, K = [[fx,0,cx],[0,fy,cy],[0,0,1]]. Pixel coordinates are
// column-first homogeneous [x, y, 1] throughout.
struct Intrinsics {
  real fx = 0, fy = 0, cx = 0, cy = 0;
};

// Host-side rigid transform in f64, used by the renderer and for ground-truth
// pose plumbing. Row-major R.
struct PoseRT {
  std::array<double, 9> R{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> t{0, 0, 0};

  static PoseRT from_axis_angle(const std::array<double, 3>& aa,
                                const std::array<double, 3>& trans);
  PoseRT inverse() const;
  // this ∘ other: applies `other` first
  PoseRT compose(const PoseRT& other) const;
  std::array<double, 3> apply(const std::array<double, 3>& p) const;
};

namespace geo {

inline constexpr real kZClamp = real(1e-3);

// 3 x H x W: plane 0 = column index, plane 1 = row index, plane 2 = ones.
// Cached per resolution; the returned tensor is shared — treat as const.
Tensor make_pixel_grid(int H, int W);

// Batched Rodrigues, aa N x 3 -> rotations N x 3 x 3; series branch below
// theta = 1e-4; analytic backward through the closed form.
Tensor axis_angle_to_rotation(Tape& tp, const Tensor& aa);

// depth N x 1 x H x W (strictly positive), R N x 3 x 3, t N x 3.
// coords N x 2 x H x W gives each target pixel's sub-pixel source location;
// front_mask N x 1 x H x W is 1 where the transformed z exceeds the clamp.
// Differentiable w.r.t. depth, R, t.
std::pair<Tensor, Tensor> warp_coordinates(Tape& tp, const Tensor& depth, const Intrinsics& K,
                                           const Tensor& R, const Tensor& t);

// bilinear warp of I_s by coords; validity = sampler validity AND front_mask
std::pair<Tensor, Tensor> synthesize_view(Tape& tp, const Tensor& I_s, const Tensor& coords,
                                          const Tensor& front_mask);

// bilinear upsampling to (H, W), corner-aligned so every sample lands inside
// the input image
Tensor scale_disparity_pyramid(Tape& tp, const Tensor& disp, int H, int W);

}  // namespace geo
}  // namespace xd
