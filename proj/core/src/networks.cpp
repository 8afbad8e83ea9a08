#include "xdistill/networks.hpp"

#include <cmath>

namespace xd {

namespace nets {

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
  w = Tensor::zeros({cout, cin, k, k}, true);
  b = Tensor::zeros({cout}, true);
  if (!zero_init) {
    const real bound = std::sqrt(real(6) / real(cin * k * k));
    real* pw = w.data();
    const size_t n = w.numel();
    for (size_t i = 0; i < n; ++i) pw[i] = rng.uniform(-bound, bound);
  }
}

Tensor Conv2d::forward(Tape& tp, const Tensor& x) const {
  return ops::conv2d(tp, x, w, b, stride, pad);
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

BatchNorm2d::BatchNorm2d(int channels) {
  gamma = Tensor::full({channels}, real(1), true);
  beta = Tensor::zeros({channels}, true);
  running_mean = Tensor::zeros({channels}, false);
  running_var = Tensor::full({channels}, real(1), false);
}

Tensor BatchNorm2d::forward(Tape& tp, const Tensor& x, bool training) {
  return ops::batchnorm(tp, x, gamma, beta, running_mean, running_var, training);
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                          std::vector<NamedTensor>& buffers) const {
  params.emplace_back(prefix + ".gamma", gamma);
  params.emplace_back(prefix + ".beta", beta);
  buffers.emplace_back(prefix + ".running_mean", running_mean);
  buffers.emplace_back(prefix + ".running_var", running_var);
}

}  // namespace nets

namespace {
constexpr int kEncCh[4] = {16, 32, 64, 128};
constexpr int kDecCh[4] = {64, 32, 16, 16};  // deepest decoder block first
}  // namespace

Backbone parse_backbone(const std::string& name) {
  if (name == "standard") return Backbone::kStandard;
  if (name == "slim") return Backbone::kSlim;
  fail("unknown backbone '" + name + "'");
}

DepthNetwork::DepthNetwork(int H, int W, int n_scales, uint64_t seed, Backbone backbone)
    : H_(H), W_(W), n_scales_(n_scales) {
  check(n_scales >= 1 && n_scales <= 4, "DepthNetwork: n_scales must be in [1,4]");
  const int div = 1 << 4;  // encoder always goes 4 levels deep
  check(H % div == 0 && W % div == 0,
        "DepthNetwork: resolution " + std::to_string(H) + "x" + std::to_string(W) +
            " not divisible by " + std::to_string(div));
  check(H / div >= 1 && W / div >= 1, "DepthNetwork: resolution too small");
  const int shrink = backbone == Backbone::kSlim ? 2 : 1;
  int ec[4], dc[4];
  for (int i = 0; i < 4; ++i) {
    ec[i] = kEncCh[i] / shrink;
    dc[i] = kDecCh[i] / shrink;
  }
  Rng rng(seed);
  int cin = 3;
  for (int i = 0; i < 4; ++i) {
    enc_[i] = nets::Conv2d(cin, ec[i], 3, 2, 1, rng);
    cin = ec[i];
  }
  // dec_[0] works at 1/8 scale on up(enc4)+enc3, ..., dec_[3] at full scale
  dec_[0] = nets::Conv2d(ec[3] + ec[2], dc[0], 3, 1, 1, rng);
  dec_[1] = nets::Conv2d(dc[0] + ec[1], dc[1], 3, 1, 1, rng);
  dec_[2] = nets::Conv2d(dc[1] + ec[0], dc[2], 3, 1, 1, rng);
  dec_[3] = nets::Conv2d(dc[2], dc[3], 3, 1, 1, rng);
  // heads_[k] reads the decoder feature at scale k (k=0 full resolution)
  heads_.resize(size_t(n_scales));
  for (int k = 0; k < n_scales; ++k)
    heads_[size_t(k)] = nets::Conv2d(dc[3 - k], 1, 3, 1, 1, rng);
}

std::vector<Tensor> DepthNetwork::forward(Tape& tp, const Tensor& image) const {
  const Shape s = image.shape();
  check(s.size() == 4 && s[1] == 3, "DepthNetwork: input must be N x 3 x H x W");
  check(s[2] == H_ && s[3] == W_, "DepthNetwork: expected " + std::to_string(H_) + "x" +
                                      std::to_string(W_) + " input, got " + shape_str(s));
  Tensor e1 = ops::relu(tp, enc_[0].forward(tp, image));  // 1/2
  Tensor e2 = ops::relu(tp, enc_[1].forward(tp, e1));     // 1/4
  Tensor e3 = ops::relu(tp, enc_[2].forward(tp, e2));     // 1/8
  Tensor e4 = ops::relu(tp, enc_[3].forward(tp, e3));     // 1/16

  Tensor u3 = ops::concat(tp, {ops::upsample_nearest2x(tp, e4), e3}, 1);
  Tensor f3 = ops::relu(tp, dec_[0].forward(tp, u3));  // 1/8
  Tensor u2 = ops::concat(tp, {ops::upsample_nearest2x(tp, f3), e2}, 1);
  Tensor f2 = ops::relu(tp, dec_[1].forward(tp, u2));  // 1/4
  Tensor u1 = ops::concat(tp, {ops::upsample_nearest2x(tp, f2), e1}, 1);
  Tensor f1 = ops::relu(tp, dec_[2].forward(tp, u1));  // 1/2
  Tensor f0 = ops::relu(tp, dec_[3].forward(tp, ops::upsample_nearest2x(tp, f1)));  // full

  const Tensor feats[4] = {f0, f1, f2, f3};
  std::vector<Tensor> disps;
  disps.reserve(size_t(n_scales_));
  for (int k = 0; k < n_scales_; ++k)
    disps.push_back(ops::sigmoid(tp, heads_[size_t(k)].forward(tp, feats[k])));
  return disps;
}

std::vector<NamedTensor> DepthNetwork::parameters() const {
  std::vector<NamedTensor> out = encoder_parameters();
  for (int i = 0; i < 4; ++i) dec_[i].collect("dec" + std::to_string(i + 1), out);
  for (size_t k = 0; k < heads_.size(); ++k) heads_[k].collect("head" + std::to_string(k), out);
  return out;
}

std::vector<NamedTensor> DepthNetwork::encoder_parameters() const {
  std::vector<NamedTensor> out;
  for (int i = 0; i < 4; ++i) enc_[i].collect("enc" + std::to_string(i + 1), out);
  return out;
}

Tensor disparity_to_depth(Tape& tp, const Tensor& sigma, real min_depth, real max_depth) {
  check(min_depth > 0 && min_depth < max_depth, "disparity_to_depth: need 0 < min < max");
  const real lo = real(1) / max_depth;
  const real hi = real(1) / min_depth;
  Tensor scaled = ops::add(tp, ops::scale(tp, sigma, hi - lo), lo);
  return ops::pow(tp, scaled, real(-1));
}

PoseNetwork::PoseNetwork(uint64_t seed) {
  Rng rng(seed);
  int cin = 6;
  for (int i = 0; i < 4; ++i) {
    conv_[i] = nets::Conv2d(cin, kEncCh[i], 3, 2, 1, rng);
    cin = kEncCh[i];
  }
  head_ = nets::Conv2d(kEncCh[3], 6, 1, 1, 0, rng, /*zero_init=*/true);
}

std::pair<Tensor, Tensor> PoseNetwork::forward(Tape& tp, const Tensor& I_t,
                                               const Tensor& I_s) const {
  check(I_t.shape() == I_s.shape(), "PoseNetwork: frame shapes differ");
  Tensor x = ops::concat(tp, {I_t, I_s}, 1);
  for (int i = 0; i < 4; ++i) x = ops::relu(tp, conv_[i].forward(tp, x));
  Tensor pooled = ops::mean(tp, x, {2, 3}, /*keepdim=*/true);  // N x 128 x 1 x 1
  Tensor six = head_.forward(tp, pooled);                      // N x 6 x 1 x 1
  Tensor flat = ops::reshape(tp, six, {I_t.dim(0), 6});
  Tensor scaled = ops::scale(tp, flat, real(0.01));
  Tensor aa = ops::slice_axis(tp, scaled, 1, 0, 3);
  Tensor t = ops::slice_axis(tp, scaled, 1, 3, 6);
  return {aa, t};
}

std::vector<NamedTensor> PoseNetwork::parameters() const {
  std::vector<NamedTensor> out;
  for (int i = 0; i < 4; ++i) conv_[i].collect("conv" + std::to_string(i + 1), out);
  head_.collect("head", out);
  return out;
}

D2SKind parse_d2s_kind(const std::string& name) {
  if (name == "pointwise_only") return D2SKind::kPointwiseOnly;
  if (name == "standard_2conv") return D2SKind::kStandard2Conv;
  if (name == "deep_4conv") return D2SKind::kDeep4Conv;
  fail("unknown d2s variant '" + name + "'");
}

D2SNetwork::D2SNetwork(D2SKind kind, int n_groups, uint64_t seed) : kind_(kind) {
  check(n_groups >= 2, "D2SNetwork: need at least 2 groups");
  Rng rng(seed);
  const int trunk = kind == D2SKind::kPointwiseOnly ? 0
                    : kind == D2SKind::kStandard2Conv ? 2
                                                      : 4;
  int cin = 1;
  for (int i = 0; i < trunk; ++i) {
    convs_.emplace_back(cin, 32, 3, 1, 1, rng);
    bns_.emplace_back(32);
    cin = 32;
  }
  head_ = nets::Conv2d(cin, n_groups, 1, 1, 0, rng);
}

Tensor D2SNetwork::forward(Tape& tp, const Tensor& x, bool training) {
  const Shape s = x.shape();
  check(s.size() == 4 && s[1] == 1, "D2SNetwork: input must be N x 1 x H x W");
  Tensor h = x;
  for (size_t i = 0; i < convs_.size(); ++i)
    h = ops::relu(tp, bns_[i].forward(tp, convs_[i].forward(tp, h), training));
  return head_.forward(tp, h);
}

std::vector<NamedTensor> D2SNetwork::parameters() const {
  std::vector<NamedTensor> out;
  std::vector<NamedTensor> unused;
  for (size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect("conv" + std::to_string(i + 1), out);
    bns_[i].collect("bn" + std::to_string(i + 1), out, unused);
  }
  head_.collect("head", out);
  return out;
}

std::vector<NamedTensor> D2SNetwork::buffers() const {
  std::vector<NamedTensor> unused;
  std::vector<NamedTensor> out;
  for (size_t i = 0; i < bns_.size(); ++i)
    bns_[i].collect("bn" + std::to_string(i + 1), unused, out);
  return out;
}

}  // namespace xd
