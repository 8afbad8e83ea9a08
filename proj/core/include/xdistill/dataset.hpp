#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xdistill/scene.hpp"

namespace xd {

// A deterministic, lazily materialized sample store. Generated datasets render
// sample i from mix_seed(seed, i); directory datasets read sample_%06d/.
// Either way sample(i) is memoized, so repeated epochs are cheap.
class Dataset {
 public:
  static Dataset generated(const SceneParams& params, int n, uint64_t seed);
  static Dataset from_dir(const std::string& dir);

  int size() const { return int(cache_.size()); }
  const SceneSample& sample(int i) const;

 private:
  Dataset() = default;
  mutable std::vector<std::optional<SceneSample>> cache_;
  std::function<SceneSample(int)> load_;
};

namespace data {

// shuffled index order for one epoch; pure in (n, seed, epoch)
std::vector<int> epoch_order(int n, uint64_t seed, int epoch, bool shuffle);

// sample_dir layout: frame_prev/frame_t/frame_next/depth (XDT1),
// groups (XDL1), pose_prev/pose_next (3x4 [R|t]), intrinsics ([fx,fy,cx,cy])
void write_sample(const std::string& sample_dir, const SceneSample& s);
SceneSample read_sample(const std::string& sample_dir);

// renders n samples into out_dir/sample_%06d
void generate_dataset(const std::string& out_dir, const SceneParams& params, int n, uint64_t seed);

}  // namespace data
}  // namespace xd
