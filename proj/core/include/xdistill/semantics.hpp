#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xdistill/common.hpp"

namespace xd {

inline constexpr int kIgnoreId = 255;
inline constexpr int kNumSourceClasses = 19;

struct SegmentationMap {
  int H = 0, W = 0;
  int num_classes = 0;
  std::vector<uint8_t> labels;  // row-major, values in {0..num_classes-1} u {255}

  size_t size() const { return labels.size(); }
};

// Total map from the 19 source class ids (standard train-id order) to a
// contiguous group id space.
struct GroupingScheme {
  std::string name;
  std::array<uint8_t, kNumSourceClasses> map{};
  int n_groups = 0;
};

namespace semantics {

// proposed4 (thin / people-and-vehicles / background / ground), foreback2,
// or full19; anything else -> error
GroupingScheme make_grouping_scheme(const std::string& name);

SegmentationMap regroup(const SegmentationMap& src, const GroupingScheme& scheme);

// The renderer emits the 4 material groups directly. To train under any
// scheme, lift each material to a representative source class (pole, car,
// sky, road) and push it through the scheme's map.
SegmentationMap remap_scene_groups(const SegmentationMap& scene_groups,
                                   const GroupingScheme& scheme);

// The frozen teacher at desk scale: ground-truth group labels with a seeded
// fraction of pixels flipped to a uniformly random other group. Same seed,
// same map — callers may cache freely.
SegmentationMap teacher_segment(const SegmentationMap& gt_groups, real noise_rate, uint64_t seed);

// fraction of non-ignored pixels that agree; 1.0 when everything is ignored
double segmentation_accuracy(const SegmentationMap& pred, const SegmentationMap& teacher,
                             int ignore_id = kIgnoreId);

}  // namespace semantics
}  // namespace xd
