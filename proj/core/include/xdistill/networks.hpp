#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xdistill/ops.hpp"
#include "xdistill/random.hpp"

namespace xd {

using NamedTensor = std::pair<std::string, Tensor>;

namespace nets {

// Kaiming-uniform conv layer; odd kernel, same-style padding chosen by caller
struct Conv2d {
  Tensor w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng, bool zero_init = false);
  Tensor forward(Tape& tp, const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct BatchNorm2d {
  Tensor gamma, beta, running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);
  Tensor forward(Tape& tp, const Tensor& x, bool training);
  void collect(const std::string& prefix, std::vector<NamedTensor>& params,
               std::vector<NamedTensor>& buffers) const;
};

}  // namespace nets

// standard = encoder channels 16/32/64/128; slim halves every channel count
// (the backbone-size ablation axis)
enum class Backbone { kStandard, kSlim };

Backbone parse_backbone(const std::string& name);  // unknown name -> error

// Encoder-decoder with skip connections; sigmoid disparity head per scale.
// Scale k output is (H/2^k) x (W/2^k).
class DepthNetwork {
 public:
  DepthNetwork(int H, int W, int n_scales, uint64_t seed,
               Backbone backbone = Backbone::kStandard);

  // finest first: disparities[k] has spatial size input / 2^k
  std::vector<Tensor> forward(Tape& tp, const Tensor& image) const;

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> encoder_parameters() const;
  int n_scales() const { return n_scales_; }

 private:
  int H_, W_, n_scales_;
  nets::Conv2d enc_[4];
  nets::Conv2d dec_[4];
  std::vector<nets::Conv2d> heads_;  // heads_[k] reads the scale-k feature map
};

// sigma in (0,1) -> depth in (min_depth, max_depth), strictly decreasing
Tensor disparity_to_depth(Tape& tp, const Tensor& sigma, real min_depth, real max_depth);

// Shared conv trunk over the concatenated pair, spatial-average head emitting
// axis-angle (3) + translation (3), output scaled by 0.01. The final layer is
// zero-initialized so training starts from the identity pose.
class PoseNetwork {
 public:
  explicit PoseNetwork(uint64_t seed);

  // returns (axis_angle N x 3, translation N x 3)
  std::pair<Tensor, Tensor> forward(Tape& tp, const Tensor& I_t, const Tensor& I_s) const;

  std::vector<NamedTensor> parameters() const;

 private:
  nets::Conv2d conv_[4];
  nets::Conv2d head_;
};

enum class D2SKind { kPointwiseOnly, kStandard2Conv, kDeep4Conv };

D2SKind parse_d2s_kind(const std::string& name);  // unknown name -> error

// Depth-to-segmentation translator. standard_2conv is conv3x3+BN+ReLU twice
// then a pointwise head; the ablation variants shrink or deepen the trunk.
class D2SNetwork {
 public:
  D2SNetwork(D2SKind kind, int n_groups, uint64_t seed);

  Tensor forward(Tape& tp, const Tensor& x, bool training);

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> buffers() const;  // BN running stats
  D2SKind kind() const { return kind_; }

 private:
  D2SKind kind_;
  std::vector<nets::Conv2d> convs_;
  std::vector<nets::BatchNorm2d> bns_;
  nets::Conv2d head_;
};

}  // namespace xd
