#include "xdistill/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace xd::losses {

namespace {
constexpr real kC1 = real(0.01 * 0.01);
constexpr real kC2 = real(0.03 * 0.03);
// stand-in loss for pixels a source cannot see; never wins the min against a
// real photometric value and is masked out when every source is blind
constexpr real kBlind = real(1e3);
}  // namespace

Tensor ssim(Tape& tp, const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "ssim: shape mismatch");
  Tensor mu_a = ops::box_filter3(tp, a);
  Tensor mu_b = ops::box_filter3(tp, b);
  Tensor var_a = ops::sub(tp, ops::box_filter3(tp, ops::mul(tp, a, a)), ops::mul(tp, mu_a, mu_a));
  Tensor var_b = ops::sub(tp, ops::box_filter3(tp, ops::mul(tp, b, b)), ops::mul(tp, mu_b, mu_b));
  Tensor cov = ops::sub(tp, ops::box_filter3(tp, ops::mul(tp, a, b)), ops::mul(tp, mu_a, mu_b));
  Tensor num = ops::mul(tp, ops::add(tp, ops::scale(tp, ops::mul(tp, mu_a, mu_b), 2), kC1),
                        ops::add(tp, ops::scale(tp, cov, 2), kC2));
  Tensor den =
      ops::mul(tp, ops::add(tp, ops::add(tp, ops::mul(tp, mu_a, mu_a), ops::mul(tp, mu_b, mu_b)), kC1),
               ops::add(tp, ops::add(tp, var_a, var_b), kC2));
  // C1/C2 already keep den positive; an extra epsilon would break ssim(I,I)=1
  return ops::div(tp, num, den, 0);
}

PerPixelLossMap photometric_loss(Tape& tp, const Tensor& I_t, const Tensor& I_hat, real alpha) {
  check(I_t.shape() == I_hat.shape(), "photometric_loss: shape mismatch");
  check(alpha >= 0 && alpha <= 1, "photometric_loss: alpha must be in [0,1]");
  Tensor l1 = ops::mean(tp, ops::abs(tp, ops::sub(tp, I_t, I_hat)), {1}, /*keepdim=*/true);
  Tensor s = ops::mean(tp, ssim(tp, I_t, I_hat), {1}, /*keepdim=*/true);
  Tensor dssim = ops::scale(tp, ops::add(tp, ops::scale(tp, s, -1), real(1)), real(0.5));
  Tensor values = ops::add(tp, ops::scale(tp, l1, alpha), ops::scale(tp, dssim, real(1) - alpha));
  PerPixelLossMap map;
  map.values = values;
  map.mask = Tensor::full(values.shape(), real(1), false);
  return map;
}

PerPixelLossMap min_reprojection_automask(Tape& tp, const std::vector<PerPixelLossMap>& warped,
                                          const std::vector<PerPixelLossMap>& identity,
                                          bool use_min, bool use_automask) {
  check(!warped.empty(), "min_reprojection_automask: no warped sources");
  const Shape shape = warped[0].values.shape();
  for (const auto& m : warped)
    check(m.values.shape() == shape && m.mask.shape() == shape,
          "min_reprojection_automask: shape mismatch");
  const size_t n = shape_numel(shape);

  Tensor combined;
  if (use_min) {
    // a blind (mask-0) pixel must not win the min, so it costs kBlind there
    std::vector<Tensor> guarded;
    guarded.reserve(warped.size());
    for (const auto& m : warped) {
      Tensor blind = Tensor::zeros(shape, false);
      const real* pm = m.mask.data();
      real* pb = blind.data();
      for (size_t i = 0; i < n; ++i) pb[i] = (real(1) - pm[i]) * kBlind;
      guarded.push_back(ops::add(tp, ops::mul(tp, m.values, m.mask), blind));
    }
    Tensor stacked = ops::concat(tp, guarded, 1);
    combined = ops::reduce_min(tp, stacked, 1, /*keepdim=*/true);
  } else {
    // average over the sources that see the pixel; weights are constants
    std::vector<real> count(n, 0);
    for (const auto& m : warped) {
      const real* pm = m.mask.data();
      for (size_t i = 0; i < n; ++i)
        if (pm[i] > 0) count[i] += 1;
    }
    for (const auto& m : warped) {
      Tensor w = Tensor::zeros(shape, false);
      const real* pm = m.mask.data();
      real* pw = w.data();
      for (size_t i = 0; i < n; ++i) pw[i] = pm[i] > 0 ? real(1) / count[i] : 0;
      Tensor term = ops::mul(tp, m.values, w);
      combined = combined.defined() ? ops::add(tp, combined, term) : term;
    }
  }

  Tensor mask = Tensor::zeros(shape, false);
  real* pmask = mask.data();
  // keep pixels that some source actually sees
  for (const auto& m : warped) {
    const real* pm = m.mask.data();
    for (size_t i = 0; i < n; ++i)
      if (pm[i] > 0) pmask[i] = 1;
  }
  if (use_automask && !identity.empty()) {
    // auto-mask: drop pixels where an unwarped source already matches better
    // (static scene / objects moving with the camera); ties stay in.
    // identity maps combine the same way the warped ones did.
    std::vector<real> ident(n, use_min ? std::numeric_limits<real>::infinity() : 0);
    std::vector<real> icount(n, 0);
    for (const auto& m : identity) {
      check(m.values.shape() == shape, "min_reprojection_automask: identity shape mismatch");
      const real* pv = m.values.data();
      const real* pm = m.mask.data();
      for (size_t i = 0; i < n; ++i) {
        if (use_min) {
          const real v = pm[i] > 0 ? pv[i] : kBlind;
          ident[i] = std::min(ident[i], v);
        } else if (pm[i] > 0) {
          ident[i] += pv[i];
          icount[i] += 1;
        }
      }
    }
    if (!use_min)
      for (size_t i = 0; i < n; ++i) ident[i] = icount[i] > 0 ? ident[i] / icount[i] : kBlind;
    const real* pw = combined.data();
    for (size_t i = 0; i < n; ++i)
      if (ident[i] < pw[i]) pmask[i] = 0;
  }

  PerPixelLossMap out;
  out.values = combined;
  out.mask = mask;
  return out;
}

Tensor smoothness_loss(Tape& tp, const Tensor& disp, const Tensor& image) {
  return ops::edge_aware_smoothness(tp, ops::normalize_spatial_mean(tp, disp), image);
}

Tensor d2s_distillation_loss(Tape& tp, const Tensor& logits, const std::vector<uint8_t>& labels,
                             int ignore_id) {
  return ops::softmax_cross_entropy(tp, logits, labels, ignore_id);
}

real lambda_schedule(int step, const LossConfig& cfg) {
  check(step >= 0, "lambda_schedule: negative step");
  check(cfg.total_steps >= 1, "lambda_schedule: total_steps must be positive");
  if (cfg.schedule == LossConfig::Schedule::kConstant) return cfg.lambda_d2s_final;
  const int s = std::min(step, cfg.total_steps);
  return cfg.lambda_d2s_final * real(s) / real(cfg.total_steps);
}

Tensor masked_mean(Tape& tp, const PerPixelLossMap& map) {
  check(map.values.shape() == map.mask.shape(), "masked_mean: shape mismatch");
  const real* pm = map.mask.data();
  const size_t n = map.mask.numel();
  size_t count = 0;
  for (size_t i = 0; i < n; ++i)
    if (pm[i] > 0) ++count;
  if (count == 0) return Tensor::scalar(0);
  Tensor s = ops::sum(tp, ops::mul(tp, map.values, map.mask));
  return ops::scale(tp, s, real(1) / real(count));
}

Tensor total_loss(Tape& tp, const std::vector<PerPixelLossMap>& photo,
                  const std::vector<Tensor>& smooth, const Tensor& d2s, int step,
                  const LossConfig& cfg) {
  check(int(photo.size()) == cfg.n_scales,
        "total_loss: expected " + std::to_string(cfg.n_scales) + " photometric scales, got " +
            std::to_string(photo.size()));
  check(int(smooth.size()) == cfg.n_scales, "total_loss: expected " +
                                                std::to_string(cfg.n_scales) +
                                                " smoothness scales");
  Tensor total = masked_mean(tp, photo[0]);
  for (int k = 1; k < cfg.n_scales; ++k) total = ops::add(tp, total, masked_mean(tp, photo[size_t(k)]));
  for (int k = 0; k < cfg.n_scales; ++k) {
    const real w = cfg.lambda_sm_base / real(1 << k);
    total = ops::add(tp, total, ops::scale(tp, smooth[size_t(k)], w));
  }
  if (d2s.defined()) {
    const real lam = lambda_schedule(step, cfg);
    total = ops::add(tp, total, ops::scale(tp, d2s, lam));
  }
  return total;
}

}  // namespace xd::losses
