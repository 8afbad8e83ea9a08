#include "xdistill/semantics.hpp"

#include "xdistill/random.hpp"

namespace xd::semantics {

GroupingScheme make_grouping_scheme(const std::string& name) {
  GroupingScheme s;
  s.name = name;
  if (name == "proposed4") {
    // 0=thin, 1=people-and-vehicles, 2=background, 3=ground
    const uint8_t m[kNumSourceClasses] = {
        3,  // road
        3,  // sidewalk
        2,  // building
        2,  // wall
        2,  // fence
        0,  // pole
        0,  // traffic light
        0,  // traffic sign
        2,  // vegetation
        2,  // terrain
        2,  // sky
        1,  // person
        1,  // rider
        1,  // car
        1,  // truck
        1,  // bus
        1,  // motorcycle
        1,  // bicycle
        1,  // train
    };
    for (int i = 0; i < kNumSourceClasses; ++i) s.map[size_t(i)] = m[i];
    s.n_groups = 4;
  } else if (name == "foreback2") {
    // proposed4's thin + people-and-vehicles become foreground (0), the rest
    // background (1)
    const GroupingScheme p4 = make_grouping_scheme("proposed4");
    for (int i = 0; i < kNumSourceClasses; ++i)
      s.map[size_t(i)] = p4.map[size_t(i)] <= 1 ? 0 : 1;
    s.n_groups = 2;
  } else if (name == "full19") {
    for (int i = 0; i < kNumSourceClasses; ++i) s.map[size_t(i)] = uint8_t(i);
    s.n_groups = kNumSourceClasses;
  } else {
    fail("unknown grouping scheme '" + name + "'");
  }
  return s;
}

SegmentationMap regroup(const SegmentationMap& src, const GroupingScheme& scheme) {
  SegmentationMap out;
  out.H = src.H;
  out.W = src.W;
  out.num_classes = scheme.n_groups;
  out.labels.resize(src.labels.size());
  for (size_t i = 0; i < src.labels.size(); ++i) {
    const int label = src.labels[i];
    if (label == kIgnoreId) {
      out.labels[i] = uint8_t(kIgnoreId);
      continue;
    }
    check(label < kNumSourceClasses,
          "regroup: label " + std::to_string(label) + " has no mapping");
    out.labels[i] = scheme.map[size_t(label)];
  }
  return out;
}

SegmentationMap remap_scene_groups(const SegmentationMap& scene_groups,
                                   const GroupingScheme& scheme) {
  check(scene_groups.num_classes == 4, "remap_scene_groups: expected 4 material groups");
  // representative source classes: pole, car, sky, road
  static const uint8_t kRepresentative[4] = {5, 13, 10, 0};
  SegmentationMap lifted = scene_groups;
  lifted.num_classes = kNumSourceClasses;
  for (size_t i = 0; i < lifted.labels.size(); ++i) {
    const uint8_t g = lifted.labels[i];
    if (g == kIgnoreId) continue;
    check(g < 4, "remap_scene_groups: bad material id " + std::to_string(int(g)));
    lifted.labels[i] = kRepresentative[g];
  }
  return regroup(lifted, scheme);
}

SegmentationMap teacher_segment(const SegmentationMap& gt_groups, real noise_rate, uint64_t seed) {
  check(noise_rate >= 0 && noise_rate < 1, "teacher_segment: noise_rate must be in [0,1)");
  check(gt_groups.num_classes >= 2, "teacher_segment: need at least 2 groups");
  SegmentationMap out = gt_groups;
  if (noise_rate == 0) return out;
  Rng rng(seed);
  const uint32_t n_groups = uint32_t(gt_groups.num_classes);
  for (size_t i = 0; i < out.labels.size(); ++i) {
    if (out.labels[i] == kIgnoreId) continue;
    if (rng.uniform() < noise_rate) {
      // uniformly random *other* group
      const uint32_t shift = 1 + rng.below(n_groups - 1);
      out.labels[i] = uint8_t((out.labels[i] + shift) % n_groups);
    }
  }
  return out;
}

double segmentation_accuracy(const SegmentationMap& pred, const SegmentationMap& teacher,
                             int ignore_id) {
  check(pred.labels.size() == teacher.labels.size(), "segmentation_accuracy: size mismatch");
  size_t count = 0, agree = 0;
  for (size_t i = 0; i < pred.labels.size(); ++i) {
    if (teacher.labels[i] == ignore_id) continue;
    ++count;
    if (pred.labels[i] == teacher.labels[i]) ++agree;
  }
  if (count == 0) return 1.0;
  return double(agree) / double(count);
}

}  // namespace xd::semantics
