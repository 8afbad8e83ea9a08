#include "xdistill/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <unordered_set>

#include "xdistill/config.hpp"
#include "xdistill/geometry.hpp"
#include "xdistill/losses.hpp"
#include "xdistill/networks.hpp"
#include "xdistill/ops.hpp"
#include "xdistill/random.hpp"
#include "xdistill/scene.hpp"
#include "xdistill/semantics.hpp"
#include "xdistill/trainer.hpp"

namespace xd::gradcheck {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (const char c : s) h = (h ^ uint64_t(uint8_t(c))) * 1099511628211ull;
  return h;
}

Tensor randu(Rng& rng, Shape s, real lo, real hi, bool rg = true) {
  Tensor t = Tensor::zeros(std::move(s), rg);
  real* p = t.data();
  for (size_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(lo, hi);
  return t;
}

// magnitudes in [lo, hi] with random sign: bounded away from the 0 kink of
// abs/relu by lo, which has to exceed the FD step by a wide margin
Tensor rand_signed(Rng& rng, Shape s, real lo, real hi, bool rg = true) {
  Tensor t = Tensor::zeros(std::move(s), rg);
  real* p = t.data();
  for (size_t i = 0; i < t.numel(); ++i) {
    const real m = rng.uniform(lo, hi);
    p[i] = rng.below(2) ? m : -m;
  }
  return t;
}

// Constant probe weights scaled by 1/numel so the loss stays O(1). FD noise
// on the gradient is |loss| * eps / (2 step); a large reduced sum would bury
// the comparison in rounding even when every gradient is exact.
Tensor probe_t(Rng& rng, Shape s) {
  Tensor w = rand_signed(rng, std::move(s), real(0.5), real(1.5), false);
  real* p = w.data();
  const real inv = real(1) / real(w.numel());
  for (size_t i = 0; i < w.numel(); ++i) p[i] *= inv;
  return w;
}

Tensor weights_like(Rng& rng, const Tensor& x) { return probe_t(rng, x.shape()); }

Tensor dot(Tape& tp, const Tensor& x, const Tensor& w) {
  return ops::sum(tp, ops::mul(tp, x, w));
}

Check ew_binary(const std::string& name, uint64_t seed,
                Tensor (*op)(Tape&, const Tensor&, const Tensor&)) {
  Rng rng(seed);
  Tensor a = randu(rng, {2, 3, 4}, real(-1), real(1));
  Tensor b = randu(rng, {2, 3, 4}, real(-1), real(1));
  Tensor w = weights_like(rng, a);
  return {name, {a, b}, [=](Tape& tp) { return dot(tp, op(tp, a, b), w); }};
}

Tensor identity_matrix_batch() {
  Tensor R = Tensor::zeros({1, 3, 3}, false);
  R.data()[0] = R.data()[4] = R.data()[8] = 1;
  return R;
}

std::vector<Tensor> param_tensors(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

struct MinReprojFixture {
  std::vector<PerPixelLossMap> warped, ident;
  std::vector<Tensor> inputs;
};

// two warped maps with well-separated values, a mixed validity pattern on the
// second, and identity maps that drop ~1/5 of pixels by a wide margin — no
// selection flips within the FD step
MinReprojFixture min_reproj_fixture(Rng& rng) {
  const int H = 4, W = 5;
  const Shape s = {1, 1, H, W};
  Tensor v0 = randu(rng, s, real(0.2), real(0.8));
  Tensor v1 = Tensor::zeros(s, true);
  for (size_t i = 0; i < v1.numel(); ++i) {
    const real off = rng.uniform(real(0.06), real(0.2));
    v1.data()[i] = v0.data()[i] + (rng.below(2) ? off : -off);
  }
  Tensor m0 = Tensor::full(s, 1, false);
  Tensor m1 = Tensor::zeros(s, false);
  for (size_t i = 0; i < m1.numel(); ++i) m1.data()[i] = rng.below(10) < 7 ? real(1) : real(0);

  Tensor i0 = Tensor::zeros(s, false);
  Tensor i1 = Tensor::zeros(s, false);
  for (size_t i = 0; i < i0.numel(); ++i) {
    real best = v0.data()[i];
    if (m1.data()[i] > 0) best = std::min(best, v1.data()[i]);
    const bool drop = rng.below(5) == 0;
    // drop: both identity losses clearly below the best warped loss
    i0.data()[i] = drop ? std::max(real(0.01), best - real(0.1)) : best + real(0.15);
    i1.data()[i] = drop ? std::max(real(0.01), best - real(0.12)) : best + real(0.2);
  }
  MinReprojFixture f;
  f.warped = {{v0, m0}, {v1, m1}};
  f.ident = {{i0, m0}, {i1, m0}};
  f.inputs = {v0, v1};
  return f;
}

std::vector<std::pair<std::string, Factory>> build_registry() {
  std::vector<std::pair<std::string, Factory>> reg;
  auto add = [&](const std::string& name, Factory f) { reg.emplace_back(name, std::move(f)); };

  // ---- elementwise ----
  add("ew_add", [](uint64_t seed) {
    Check c = ew_binary("ew_add", seed, [](Tape& tp, const Tensor& a, const Tensor& b) {
      return ops::add(tp, a, b);
    });
    return c;
  });
  add("ew_sub_scale", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4}, real(-1), real(1));
    Tensor b = randu(rng, {2, 3, 4}, real(-1), real(1));
    Tensor w = weights_like(rng, a);
    return Check{"ew_sub_scale", {a, b}, [=](Tape& tp) {
                   Tensor d = ops::scale(tp, ops::sub(tp, a, b), real(1.7));
                   return dot(tp, ops::add(tp, d, real(0.31)), w);
                 }};
  });
  add("ew_mul", [](uint64_t seed) {
    return ew_binary("ew_mul", seed, [](Tape& tp, const Tensor& a, const Tensor& b) {
      return ops::mul(tp, a, b);
    });
  });
  add("ew_div", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4}, real(-1), real(1));
    Tensor b = rand_signed(rng, {2, 3, 4}, real(0.5), real(1.5));
    Tensor w = weights_like(rng, a);
    return Check{"ew_div", {a, b}, [=](Tape& tp) { return dot(tp, ops::div(tp, a, b), w); }};
  });
  add("ew_div_eps", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4}, real(-1), real(1));
    Tensor b = randu(rng, {2, 3, 4}, real(0.3), real(1));
    Tensor w = weights_like(rng, a);
    return Check{"ew_div_eps", {a, b}, [=](Tape& tp) {
                   return dot(tp, ops::div(tp, a, b, real(1e-2)), w);
                 }};
  });
  add("ew_abs", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_signed(rng, {3, 4, 5}, real(0.2), real(1));
    Tensor w = weights_like(rng, a);
    return Check{"ew_abs", {a}, [=](Tape& tp) { return dot(tp, ops::abs(tp, a), w); }};
  });
  add("ew_pow_inv", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4}, real(0.4), real(1.6));
    Tensor w = weights_like(rng, a);
    return Check{"ew_pow_inv", {a}, [=](Tape& tp) { return dot(tp, ops::pow(tp, a, real(-1)), w); }};
  });
  add("ew_exp_log", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4}, real(0.3), real(2));
    Tensor b = randu(rng, {2, 3, 4}, real(-1), real(1));
    Tensor wa = weights_like(rng, a);
    Tensor wb = weights_like(rng, b);
    return Check{"ew_exp_log", {a, b}, [=](Tape& tp) {
                   return ops::add(tp, dot(tp, ops::log(tp, a), wa), dot(tp, ops::exp(tp, b), wb));
                 }};
  });
  add("ew_relu", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_signed(rng, {3, 4, 5}, real(0.2), real(1));
    Tensor w = weights_like(rng, a);
    return Check{"ew_relu", {a}, [=](Tape& tp) { return dot(tp, ops::relu(tp, a), w); }};
  });
  add("ew_sigmoid", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4}, real(-2), real(2));
    Tensor w = weights_like(rng, a);
    return Check{"ew_sigmoid", {a}, [=](Tape& tp) { return dot(tp, ops::sigmoid(tp, a), w); }};
  });

  // ---- reductions ----
  add("red_full", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {3, 4, 5}, real(-1), real(1));
    return Check{"red_full", {a}, [=](Tape& tp) {
                   return ops::add(tp, ops::scale(tp, ops::sum(tp, a), real(0.25)), ops::mean(tp, a));
                 }};
  });
  add("red_sum_axes", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4, 2}, real(-1), real(1));
    Tensor probe = Tensor::zeros({2, 4}, false);
    Rng wr(seed + 1);
    for (size_t i = 0; i < probe.numel(); ++i) probe.data()[i] = wr.uniform(real(-1), real(1));
    return Check{"red_sum_axes", {a}, [=](Tape& tp) {
                   return dot(tp, ops::sum(tp, a, {1, 3}, false), probe);
                 }};
  });
  add("red_mean_axes", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4}, real(-1), real(1));
    Tensor probe = Tensor::zeros({1, 3, 1}, false);
    Rng wr(seed + 1);
    for (size_t i = 0; i < probe.numel(); ++i) probe.data()[i] = wr.uniform(real(-1), real(1));
    return Check{"red_mean_axes", {a}, [=](Tape& tp) {
                   return dot(tp, ops::mean(tp, a, {0, 2}, true), probe);
                 }};
  });
  add("red_min", [](uint64_t seed) {
    Rng rng(seed);
    const int C = 4;
    Tensor a = Tensor::zeros({2, C, 3, 5}, true);
    // distinct per-channel offsets keep the argmin unique by >= 0.02 everywhere
    int perm[C] = {2, 0, 3, 1};
    const size_t plane = 3 * 5;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < C; ++c)
        for (size_t i = 0; i < plane; ++i)
          a.data()[(size_t(n) * C + c) * plane + i] =
              rng.uniform(real(0), real(0.05)) + real(0.07) * real(perm[c]);
    Tensor probe = probe_t(rng, {2, 1, 3, 5});
    return Check{"red_min", {a}, [=](Tape& tp) {
                   return dot(tp, ops::reduce_min(tp, a, 1, true), probe);
                 }};
  });

  // ---- structure ----
  add("st_concat_slice", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 2, 3}, real(-1), real(1));
    Tensor b = randu(rng, {2, 1, 3}, real(-1), real(1));
    Tensor probe = probe_t(rng, {2, 2, 3});
    return Check{"st_concat_slice", {a, b}, [=](Tape& tp) {
                   Tensor cat = ops::concat(tp, {a, b}, 1);
                   return dot(tp, ops::slice_axis(tp, cat, 1, 1, 3), probe);
                 }};
  });
  add("st_reshape", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 3, 4}, real(-1), real(1));
    Tensor probe = probe_t(rng, {4, 6});
    return Check{"st_reshape", {a}, [=](Tape& tp) {
                   return dot(tp, ops::reshape(tp, a, {4, 6}), probe);
                 }};
  });
  add("st_upsample_nearest", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {1, 2, 3, 4}, real(-1), real(1));
    Tensor probe = probe_t(rng, {1, 2, 6, 8});
    return Check{"st_upsample_nearest", {a}, [=](Tape& tp) {
                   return dot(tp, ops::upsample_nearest2x(tp, a), probe);
                 }};
  });

  // ---- nn kernels ----
  add("conv_s1p1", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = randu(rng, {2, 3, 6, 7}, real(-1), real(1));
    Tensor w = randu(rng, {4, 3, 3, 3}, real(-0.5), real(0.5));
    Tensor b = randu(rng, {4}, real(-0.2), real(0.2));
    Tensor probe = probe_t(rng, {2, 4, 6, 7});
    return Check{"conv_s1p1", {x, w, b}, [=](Tape& tp) {
                   return dot(tp, ops::conv2d(tp, x, w, b, 1, 1), probe);
                 }};
  });
  add("conv_s2p1", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = randu(rng, {1, 3, 8, 9}, real(-1), real(1));
    Tensor w = randu(rng, {5, 3, 3, 3}, real(-0.5), real(0.5));
    Tensor b = randu(rng, {5}, real(-0.2), real(0.2));
    Tensor probe = probe_t(rng, {1, 5, 4, 5});
    return Check{"conv_s2p1", {x, w, b}, [=](Tape& tp) {
                   return dot(tp, ops::conv2d(tp, x, w, b, 2, 1), probe);
                 }};
  });
  add("conv_1x1", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = randu(rng, {2, 4, 5, 5}, real(-1), real(1));
    Tensor w = randu(rng, {3, 4, 1, 1}, real(-0.5), real(0.5));
    Tensor b = randu(rng, {3}, real(-0.2), real(0.2));
    Tensor probe = probe_t(rng, {2, 3, 5, 5});
    return Check{"conv_1x1", {x, w, b}, [=](Tape& tp) {
                   return dot(tp, ops::conv2d(tp, x, w, b, 1, 0), probe);
                 }};
  });
  add("batchnorm_train", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = randu(rng, {2, 3, 4, 5}, real(-1), real(1));
    Tensor gamma = randu(rng, {3}, real(0.5), real(1.5));
    Tensor beta = randu(rng, {3}, real(-0.5), real(0.5));
    Tensor rm = Tensor::zeros({3}, false);
    Tensor rv = Tensor::full({3}, 1, false);
    Tensor probe = probe_t(rng, {2, 3, 4, 5});
    return Check{"batchnorm_train", {x, gamma, beta}, [=](Tape& tp) mutable {
                   return dot(tp, ops::batchnorm(tp, x, gamma, beta, rm, rv, true), probe);
                 }};
  });
  add("bilinear_sample", [](uint64_t seed) {
    Rng rng(seed);
    const int H = 5, W = 6;
    Tensor img = randu(rng, {1, 2, H, W}, real(0), real(1));
    Tensor coords = Tensor::zeros({1, 2, 3, 4}, true);
    const size_t plane = 3 * 4;
    // fractional parts in [0.15, 0.85]: the FD step never crosses a cell edge
    for (size_t i = 0; i < plane; ++i) {
      coords.data()[i] = real(rng.below(uint32_t(W - 1))) + rng.uniform(real(0.15), real(0.85));
      coords.data()[plane + i] =
          real(rng.below(uint32_t(H - 1))) + rng.uniform(real(0.15), real(0.85));
    }
    Tensor probe = probe_t(rng, {1, 2, 3, 4});
    return Check{"bilinear_sample", {img, coords}, [=](Tape& tp) {
                   auto [sampled, valid] = ops::bilinear_sample(tp, img, coords);
                   return dot(tp, sampled, probe);
                 }};
  });
  add("box_filter3", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {1, 2, 5, 6}, real(-1), real(1));
    Tensor w = weights_like(rng, a);
    return Check{"box_filter3", {a}, [=](Tape& tp) { return dot(tp, ops::box_filter3(tp, a), w); }};
  });
  add("normalize_spatial_mean", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = randu(rng, {2, 2, 4, 5}, real(0.2), real(1.2));
    Tensor w = weights_like(rng, a);
    return Check{"normalize_spatial_mean", {a}, [=](Tape& tp) {
                   return dot(tp, ops::normalize_spatial_mean(tp, a), w);
                 }};
  });
  add("softmax_ce", [](uint64_t seed) {
    Rng rng(seed);
    Tensor logits = randu(rng, {2, 4, 3, 4}, real(-2), real(2));
    std::vector<uint8_t> labels(2 * 3 * 4);
    for (auto& l : labels) {
      const uint32_t d = rng.below(5);
      l = d == 4 ? uint8_t(kIgnoreId) : uint8_t(d);
    }
    labels[0] = 1;  // at least one contributing pixel
    return Check{"softmax_ce", {logits}, [=](Tape& tp) {
                   return ops::softmax_cross_entropy(tp, logits, labels, kIgnoreId);
                 }};
  });

  // ---- geometry ----
  add("rodrigues_generic", [](uint64_t seed) {
    Rng rng(seed);
    Tensor aa = Tensor::zeros({2, 3}, true);
    for (int n = 0; n < 2; ++n) {
      real v[3] = {rng.normal(), rng.normal(), rng.normal()};
      const real norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + real(1e-9);
      const real th = rng.uniform(real(0.3), real(1));
      for (int i = 0; i < 3; ++i) aa.data()[n * 3 + i] = v[i] / norm * th;
    }
    Tensor probe = probe_t(rng, {2, 3, 3});
    return Check{"rodrigues_generic", {aa}, [=](Tape& tp) {
                   return dot(tp, geo::axis_angle_to_rotation(tp, aa), probe);
                 }};
  });
  add("rodrigues_small", [](uint64_t seed) {
    Rng rng(seed);
    Tensor aa = Tensor::zeros({2, 3}, true);
    for (int n = 0; n < 2; ++n) {
      real v[3] = {rng.normal(), rng.normal(), rng.normal()};
      const real norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + real(1e-9);
      const real th = rng.uniform(real(0.005), real(0.02));  // typical pose magnitudes
      for (int i = 0; i < 3; ++i) aa.data()[n * 3 + i] = v[i] / norm * th;
    }
    Tensor probe = probe_t(rng, {2, 3, 3});
    return Check{"rodrigues_small", {aa}, [=](Tape& tp) {
                   return dot(tp, geo::axis_angle_to_rotation(tp, aa), probe);
                 }};
  });
  add("warp_coordinates", [](uint64_t seed) {
    Rng rng(seed);
    const int H = 4, W = 6;
    Tensor depth = randu(rng, {1, 1, H, W}, real(3), real(9));
    Tensor aa = Tensor::zeros({1, 3}, true);
    for (int i = 0; i < 3; ++i) aa.data()[i] = rng.uniform(real(-0.02), real(0.02));
    Tensor t = Tensor::zeros({1, 3}, true);
    t.data()[0] = rng.uniform(real(-0.1), real(0.1));
    t.data()[1] = rng.uniform(real(-0.1), real(0.1));
    t.data()[2] = rng.uniform(real(-0.05), real(0.05));
    const Intrinsics K = scene::default_intrinsics(H, W);
    Tensor probe = probe_t(rng, {1, 2, H, W});
    return Check{"warp_coordinates", {depth, aa, t}, [=](Tape& tp) {
                   Tensor R = geo::axis_angle_to_rotation(tp, aa);
                   auto [coords, front] = geo::warp_coordinates(tp, depth, K, R, t);
                   return dot(tp, coords, probe);
                 }};
  });
  add("synthesize_view", [](uint64_t seed) {
    Rng rng(seed);
    const int H = 5, W = 7;
    Tensor depth = randu(rng, {1, 1, H, W}, real(4), real(8));
    Tensor img = randu(rng, {1, 3, H, W}, real(0), real(1));
    Tensor R = identity_matrix_batch();
    // pure translation sized so sample points sit deep inside their cells
    Tensor t = Tensor::from({1, 3}, {real(0.5), real(0.35), real(0)}, true);
    const Intrinsics K = scene::default_intrinsics(H, W);
    Tensor probe = probe_t(rng, {1, 3, H, W});
    return Check{"synthesize_view", {depth, img, t}, [=](Tape& tp) {
                   auto [coords, front] = geo::warp_coordinates(tp, depth, K, R, t);
                   auto [warped, valid] = geo::synthesize_view(tp, img, coords, front);
                   return dot(tp, warped, probe);
                 }};
  });
  add("disparity_to_depth", [](uint64_t seed) {
    Rng rng(seed);
    Tensor sigma = randu(rng, {1, 1, 3, 4}, real(0.05), real(0.95));
    Tensor w = weights_like(rng, sigma);
    return Check{"disparity_to_depth", {sigma}, [=](Tape& tp) {
                   return dot(tp, disparity_to_depth(tp, sigma, real(0.1), real(100)), w);
                 }};
  });
  add("disparity_pyramid_upsample", [](uint64_t seed) {
    Rng rng(seed);
    Tensor d = randu(rng, {1, 1, 3, 4}, real(0.1), real(1));
    Tensor probe = probe_t(rng, {1, 1, 6, 8});
    return Check{"disparity_pyramid_upsample", {d}, [=](Tape& tp) {
                   return dot(tp, geo::scale_disparity_pyramid(tp, d, 6, 8), probe);
                 }};
  });

  // ---- loss building blocks ----
  add("ssim_photometric", [](uint64_t seed) {
    Rng rng(seed);
    const Shape s = {1, 3, 6, 8};
    Tensor it = randu(rng, s, real(0.1), real(0.9));
    Tensor ih = Tensor::zeros(s, true);
    for (size_t i = 0; i < ih.numel(); ++i) {
      // offset photos: the L1 |.| kink stays >= 0.05 away
      const real off = rng.uniform(real(0.05), real(0.25)) * (rng.below(2) ? real(1) : real(-1));
      ih.data()[i] = std::min(real(0.98), std::max(real(0.02), it.data()[i] + off));
    }
    Tensor probe = probe_t(rng, {1, 1, 6, 8});
    return Check{"ssim_photometric", {it, ih}, [=](Tape& tp) {
                   PerPixelLossMap m = losses::photometric_loss(tp, it, ih, real(0.85));
                   return dot(tp, m.values, probe);
                 }};
  });
  add("min_reproj_automask", [](uint64_t seed) {
    Rng rng(seed);
    auto f = std::make_shared<MinReprojFixture>(min_reproj_fixture(rng));
    return Check{"min_reproj_automask", f->inputs, [f](Tape& tp) {
                   PerPixelLossMap combined =
                       losses::min_reprojection_automask(tp, f->warped, f->ident, true, true);
                   return losses::masked_mean(tp, combined);
                 }};
  });
  add("mean_reproj", [](uint64_t seed) {
    Rng rng(seed);
    auto f = std::make_shared<MinReprojFixture>(min_reproj_fixture(rng));
    return Check{"mean_reproj", f->inputs, [f](Tape& tp) {
                   PerPixelLossMap combined =
                       losses::min_reprojection_automask(tp, f->warped, {}, false, false);
                   return losses::masked_mean(tp, combined);
                 }};
  });
  add("smoothness", [](uint64_t seed) {
    Rng rng(seed);
    Tensor d = randu(rng, {1, 1, 5, 6}, real(0.2), real(1));
    Tensor img = randu(rng, {1, 3, 5, 6}, real(0), real(1), false);
    return Check{"smoothness", {d}, [=](Tape& tp) {
                   return losses::smoothness_loss(tp, d, img);
                 }};
  });

  // ---- networks ----
  add("net_depth", [](uint64_t seed) {
    auto net = std::make_shared<DepthNetwork>(16, 32, 4, seed, Backbone::kStandard);
    Rng rng(mix_seed(seed, 11));
    Tensor img = randu(rng, {1, 3, 16, 32}, real(0), real(1), false);
    Check c;
    c.name = "net_depth";
    c.inputs = param_tensors(net->parameters());
    c.tol_scale = 5;  // relu kink crossings under FD
    c.forward = [net, img](Tape& tp) {
      std::vector<Tensor> disps = net->forward(tp, img);
      Tensor loss = ops::mean(tp, disps[0]);
      for (size_t k = 1; k < disps.size(); ++k)
        loss = ops::add(tp, loss, ops::scale(tp, ops::mean(tp, disps[k]), real(0.3) * real(k)));
      return loss;
    };
    return c;
  });
  add("net_pose", [](uint64_t seed) {
    auto net = std::make_shared<PoseNetwork>(seed);
    Rng rng(mix_seed(seed, 12));
    // the zero-initialized head would zero every upstream gradient; a fixture
    // is allowed to knock it off that point
    for (auto& [name, t] : net->parameters())
      if (name.find("head") != std::string::npos)
        for (size_t i = 0; i < t.numel(); ++i)
          t.data()[i] = rng.uniform(real(0.01), real(0.05)) * (rng.below(2) ? real(1) : real(-1));
    Tensor it = randu(rng, {1, 3, 16, 32}, real(0), real(1), false);
    Tensor is = randu(rng, {1, 3, 16, 32}, real(0), real(1), false);
    Tensor wa = probe_t(rng, {1, 3});
    Tensor wt = probe_t(rng, {1, 3});
    Check c;
    c.name = "net_pose";
    c.inputs = param_tensors(net->parameters());
    c.tol_scale = 5;
    c.forward = [net, it, is, wa, wt](Tape& tp) {
      auto [aa, t] = net->forward(tp, it, is);
      return ops::add(tp, dot(tp, aa, wa), dot(tp, t, wt));
    };
    return c;
  });
  add("net_d2s", [](uint64_t seed) {
    auto net = std::make_shared<D2SNetwork>(D2SKind::kStandard2Conv, 4, seed);
    Rng rng(mix_seed(seed, 13));
    Tensor x = randu(rng, {1, 1, 16, 32}, real(0.05), real(0.95));
    Tensor probe = probe_t(rng, {1, 4, 16, 32});
    Check c;
    c.name = "net_d2s";
    c.inputs = param_tensors(net->parameters());
    c.inputs.push_back(x);
    c.tol_scale = 5;
    c.forward = [net, x, probe](Tape& tp) {
      return dot(tp, net->forward(tp, x, true), probe);
    };
    return c;
  });

  // ---- the composite training objective ----
  add("full_loss", [](uint64_t seed) {
    TrainConfig cfg;
    cfg.height = 16;
    cfg.width = 32;
    cfg.n_boxes = 3;
    cfg.n_poles = 2;
    cfg.total_steps = 10;
    cfg.seed = seed;
    auto models = std::make_shared<Models>(cfg);
    // At an exactly-zero pose the warp is the identity, which parks every
    // pixel of the automask's strict comparison on its decision boundary —
    // any perturbation flips masses of keep/drop bits and FD reads garbage.
    // Knock the pose head off that degenerate point.
    {
      Rng nr(mix_seed(seed, 23));
      for (auto& [pname, t] : models->pose.parameters())
        if (pname.find("head") != std::string::npos)
          for (size_t i = 0; i < t.numel(); ++i)
            t.data()[i] = nr.uniform(real(0.05), real(0.2)) * (nr.below(2) ? real(1) : real(-1));
    }
    auto sample = std::make_shared<SceneSample>(scene::generate_scene(cfg.scene(), mix_seed(seed, 21)));
    const GroupingScheme scheme = semantics::make_grouping_scheme(cfg.grouping);
    auto teacher = std::make_shared<SegmentationMap>(semantics::teacher_segment(
        semantics::remap_scene_groups(sample->gt_groups, scheme), cfg.teacher_noise,
        mix_seed(seed, 22)));
    Check c;
    c.name = "full_loss";
    c.inputs = param_tensors(models->parameters());
    // min selection + sampler cells + relu kinks make FD noisy on the full
    // objective; per-op checks above carry the tight tolerance
    c.tol_scale = 25;
    c.forward = [models, sample, teacher, cfg](Tape& tp) {
      StepLosses sl = forward_losses(tp, *models, cfg, {sample.get()}, {teacher.get()}, 5, true);
      return sl.total;
    };
    return c;
  });

  return reg;
}

}  // namespace

const std::vector<std::pair<std::string, Factory>>& registry() {
  static const std::vector<std::pair<std::string, Factory>> reg = build_registry();
  return reg;
}

real default_step() {
#ifdef XD_REAL_DOUBLE
  return real(1e-6);
#else
  return real(1e-3);
#endif
}

real default_tol() {
#ifdef XD_REAL_DOUBLE
  return real(1e-6);
#else
  return real(1e-3);
#endif
}

CheckResult run_check(const std::string& name, const Factory& factory, uint64_t seed, real step,
                      real tol, int max_probes) {
  Check c = factory(mix_seed(seed, fnv1a(name)));
  CheckResult res;
  res.name = c.name;
  res.tol = double(tol) * double(c.tol_scale);

  // analytic pass
  std::vector<std::vector<real>> analytic(c.inputs.size());
  {
    Tape tp;
    Tensor loss = c.forward(tp);
    check(loss.numel() == 1, "gradcheck '" + c.name + "': loss is not scalar");
    check(std::isfinite(double(loss.value())), "gradcheck '" + c.name + "': non-finite loss");
    tp.backward(loss);
    for (size_t i = 0; i < c.inputs.size(); ++i) {
      const Tensor& in = c.inputs[i];
      check(in.requires_grad(), "gradcheck '" + c.name + "': probed input without requires_grad");
      analytic[i].assign(in.numel(), 0);
      if (in.has_grad()) {
        const real* g = in.grad_data();
        std::copy(g, g + in.numel(), analytic[i].begin());
      }
    }
  }

  // choose probe elements, weighted by element count
  std::vector<size_t> cum = {0};
  for (const Tensor& in : c.inputs) cum.push_back(cum.back() + in.numel());
  const size_t total = cum.back();
  check(total > 0, "gradcheck '" + c.name + "': nothing to probe");
  std::vector<std::pair<size_t, size_t>> probes;  // (input, element)
  if (total <= size_t(max_probes)) {
    for (size_t i = 0; i < c.inputs.size(); ++i)
      for (size_t j = 0; j < c.inputs[i].numel(); ++j) probes.emplace_back(i, j);
  } else {
    Rng rng(mix_seed(seed, fnv1a(c.name) ^ 0x9d0be5ull));
    std::unordered_set<size_t> seen;
    int attempts = 0;
    while (int(probes.size()) < max_probes && attempts < max_probes * 16) {
      ++attempts;
      const size_t g = (size_t(rng.below(1u << 16)) << 16 | rng.below(1u << 16)) % total;
      if (!seen.insert(g).second) continue;
      size_t i = 0;
      while (cum[i + 1] <= g) ++i;
      probes.emplace_back(i, g - cum[i]);
    }
  }

  auto eval = [&]() {
    Tape tp;
    NoGradGuard ng(tp);
    return double(c.forward(tp).value());
  };

  for (const auto& [i, j] : probes) {
    real* p = c.inputs[i].data();
    const real x0 = p[j];
    p[j] = x0 + step;
    const double fp = eval();
    p[j] = x0 - step;
    const double fm = eval();
    p[j] = x0;
    const double fd = (fp - fm) / (2.0 * double(step));
    const double an = double(analytic[i][j]);
    const double rel =
        std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
    res.max_rel_err = std::max(res.max_rel_err, rel);
  }
  res.n_probes = int(probes.size());
  res.pass = std::isfinite(res.max_rel_err) && res.max_rel_err <= res.tol;
  return res;
}

std::vector<CheckResult> run_all(uint64_t seed, real step, real tol, int max_probes) {
  std::vector<CheckResult> out;
  for (const auto& [name, factory] : registry())
    out.push_back(run_check(name, factory, seed, step, tol, max_probes));
  return out;
}

}  // namespace xd::gradcheck
