#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "xdistill/geometry.hpp"
#include "xdistill/semantics.hpp"
#include "xdistill/tensor.hpp"

namespace xd {

// Group ids used by the renderer (matching the proposed4 grouping):
// 0 = thin (poles), 1 = people-and-vehicles (boxes), 2 = background
// (backdrop), 3 = ground.
struct SceneParams {
  int H = 64, W = 128;
  int n_boxes = 6;
  int n_poles = 4;
  // base octave, cycles per meter; octaves double up to 4x, so keep the top
  // octave below the pixel footprint of the farthest surfaces or warping
  // compares aliased speckle
  real texture_freq = real(0.3);
  double t_forward_min = 0.05;     // per-frame forward translation, meters
  double t_forward_max = 0.30;
  double yaw_max_deg = 2.0;        // per-frame yaw
  double ground_height = 1.4;      // camera height above the ground plane
  double far_plane = 35.0;         // backdrop sphere radius around camera t
};

struct SceneSample {
  Tensor frame_prev, frame_t, frame_next;  // 3 x H x W, values in [0,1]
  Tensor gt_depth;                         // 1 x H x W, optical-axis meters
  SegmentationMap gt_groups;               // 4-group labels for frame t
  PoseRT T_t_to_prev, T_t_to_next;         // X_s = R X_t + t
  Intrinsics K;
  uint64_t seed = 0;
};

namespace scene {

// Axis-aligned box in the world frame (= camera-t frame, x right, y down,
// z forward). Poles are just thin boxes with their own group id.
struct Box {
  std::array<double, 3> lo, hi;
  int group;
  int object_id;  // perturbs the palette so neighbors differ
};

struct SceneDef {
  std::vector<Box> boxes;
  double ground_y = 0;      // ground plane at y = ground_y (below the camera)
  double far_radius = 0;    // backdrop sphere around the origin
  real texture_freq = 0;
  uint64_t noise_seed = 0;
};

struct RenderedView {
  Tensor image;   // 3 x H x W
  Tensor depth;   // 1 x H x W, optical-axis depth in the view's own frame
  SegmentationMap groups;
};

SceneDef build_scene_def(const SceneParams& params, uint64_t seed);

// cam is the world-from-camera transform of the viewpoint
RenderedView render_view(const SceneDef& def, const PoseRT& cam, const Intrinsics& K, int H,
                         int W);

Intrinsics default_intrinsics(int H, int W);

SceneSample generate_scene(const SceneParams& params, uint64_t seed);

}  // namespace scene
}  // namespace xd
