#include "xdistill/dataset.hpp"

#include <cstdio>
#include <filesystem>

#include "xdistill/random.hpp"
#include "xdistill/serialize.hpp"

namespace fs = std::filesystem;

namespace xd {

namespace {

std::string sample_dir_name(const std::string& root, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%06d", i);
  return root + "/" + buf;
}

Tensor pose_to_tensor(const PoseRT& p) {
  Tensor t = Tensor::zeros({3, 4}, false);
  real* d = t.data();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) d[r * 4 + c] = real(p.R[size_t(r * 3 + c)]);
    d[r * 4 + 3] = real(p.t[size_t(r)]);
  }
  return t;
}

PoseRT tensor_to_pose(const Tensor& t) {
  check(t.shape() == Shape({3, 4}), "pose tensor must be 3x4, got " + shape_str(t.shape()));
  PoseRT p;
  const real* d = t.data();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.R[size_t(r * 3 + c)] = double(d[r * 4 + c]);
    p.t[size_t(r)] = double(d[r * 4 + 3]);
  }
  return p;
}

}  // namespace

Dataset Dataset::generated(const SceneParams& params, int n, uint64_t seed) {
  check(n >= 1, "Dataset: need at least one sample");
  Dataset ds;
  ds.cache_.resize(size_t(n));
  ds.load_ = [params, seed](int i) { return scene::generate_scene(params, mix_seed(seed, uint64_t(i))); };
  return ds;
}

Dataset Dataset::from_dir(const std::string& dir) {
  int n = 0;
  while (fs::exists(sample_dir_name(dir, n))) ++n;
  check(n >= 1, "Dataset: no sample_000000 under '" + dir + "'");
  Dataset ds;
  ds.cache_.resize(size_t(n));
  ds.load_ = [dir](int i) { return data::read_sample(sample_dir_name(dir, i)); };
  return ds;
}

const SceneSample& Dataset::sample(int i) const {
  check(i >= 0 && i < size(), "Dataset: index " + std::to_string(i) + " out of range");
  auto& slot = cache_[size_t(i)];
  if (!slot) slot = load_(i);
  return *slot;
}

namespace data {

std::vector<int> epoch_order(int n, uint64_t seed, int epoch, bool shuffle) {
  check(n >= 1, "epoch_order: need n >= 1");
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;
  if (!shuffle) return order;
  Rng rng(mix_seed(seed, 0xE90C4 + uint64_t(epoch)));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[size_t(i)], order[rng.below(uint32_t(i + 1))]);
  return order;
}

void write_sample(const std::string& sample_dir, const SceneSample& s) {
  fs::create_directories(sample_dir);
  io::write_tensor(sample_dir + "/frame_prev.xdt", s.frame_prev);
  io::write_tensor(sample_dir + "/frame_t.xdt", s.frame_t);
  io::write_tensor(sample_dir + "/frame_next.xdt", s.frame_next);
  io::write_tensor(sample_dir + "/depth.xdt", s.gt_depth);
  io::write_labels(sample_dir + "/groups.xdl", s.gt_groups);
  io::write_tensor(sample_dir + "/pose_prev.xdt", pose_to_tensor(s.T_t_to_prev));
  io::write_tensor(sample_dir + "/pose_next.xdt", pose_to_tensor(s.T_t_to_next));
  Tensor k = Tensor::zeros({4}, false);
  k.data()[0] = s.K.fx;
  k.data()[1] = s.K.fy;
  k.data()[2] = s.K.cx;
  k.data()[3] = s.K.cy;
  io::write_tensor(sample_dir + "/intrinsics.xdt", k);
}

SceneSample read_sample(const std::string& sample_dir) {
  SceneSample s;
  s.frame_prev = io::read_tensor(sample_dir + "/frame_prev.xdt");
  s.frame_t = io::read_tensor(sample_dir + "/frame_t.xdt");
  s.frame_next = io::read_tensor(sample_dir + "/frame_next.xdt");
  s.gt_depth = io::read_tensor(sample_dir + "/depth.xdt");
  s.gt_groups = io::read_labels(sample_dir + "/groups.xdl", 4);
  s.T_t_to_prev = tensor_to_pose(io::read_tensor(sample_dir + "/pose_prev.xdt"));
  s.T_t_to_next = tensor_to_pose(io::read_tensor(sample_dir + "/pose_next.xdt"));
  Tensor k = io::read_tensor(sample_dir + "/intrinsics.xdt");
  check(k.shape() == Shape({4}), "intrinsics tensor must have shape [4]");
  s.K.fx = k.data()[0];
  s.K.fy = k.data()[1];
  s.K.cx = k.data()[2];
  s.K.cy = k.data()[3];
  return s;
}

void generate_dataset(const std::string& out_dir, const SceneParams& params, int n,
                      uint64_t seed) {
  check(n >= 1, "generate_dataset: need n >= 1");
  for (int i = 0; i < n; ++i)
    write_sample(sample_dir_name(out_dir, i), scene::generate_scene(params, mix_seed(seed, uint64_t(i))));
}

}  // namespace data
}  // namespace xd
