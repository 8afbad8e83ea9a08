#include "xdistill/scene.hpp"

#include <cmath>
#include <limits>

#include "xdistill/random.hpp"

namespace xd::scene {

namespace {

double lattice(uint64_t seed, int xi, int yi, int zi) {
  uint64_t h = mix_seed(seed, uint64_t(uint32_t(xi)));
  h = mix_seed(h, uint64_t(uint32_t(yi)));
  h = mix_seed(h, uint64_t(uint32_t(zi)));
  return double(h >> 11) * (1.0 / 9007199254740992.0);
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise_octave(uint64_t seed, double x, double y, double z) {
  const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
  const int xi = int(fx), yi = int(fy), zi = int(fz);
  const double tx = smoothstep(x - fx), ty = smoothstep(y - fy), tz = smoothstep(z - fz);
  double acc = 0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
        acc += w * lattice(seed, xi + dx, yi + dy, zi + dz);
      }
  return acc;
}

// band-limited value noise in [0,1]; coarse octave dominates so the texture
// stays resolvable at the pixel footprint of mid-range depths
double value_noise(uint64_t seed, double freq, const std::array<double, 3>& p) {
  static const double w[3] = {0.55, 0.30, 0.15};
  double acc = 0;
  double f = freq;
  for (int o = 0; o < 3; ++o, f *= 2.0)
    acc += w[o] * value_noise_octave(seed + uint64_t(o) * 0x9e37u, p[0] * f, p[1] * f, p[2] * f);
  return acc;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int group = -1;
  int object_id = -1;
};

constexpr double kRayEps = 1e-6;

void hit_ground(const SceneDef& def, const std::array<double, 3>& o,
                const std::array<double, 3>& d, Hit& best) {
  if (d[1] <= 0) return;  // y points down; the ground lies below the camera
  const double t = (def.ground_y - o[1]) / d[1];
  if (t > kRayEps && t < best.t) best = {t, 3, -1};
}

void hit_sphere(const SceneDef& def, const std::array<double, 3>& o,
                const std::array<double, 3>& d, Hit& best) {
  const double a = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
  const double b = 2.0 * (o[0] * d[0] + o[1] * d[1] + o[2] * d[2]);
  const double c = o[0] * o[0] + o[1] * o[1] + o[2] * o[2] - def.far_radius * def.far_radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0) return;
  const double t = (-b + std::sqrt(disc)) / (2.0 * a);  // camera sits inside
  if (t > kRayEps && t < best.t) best = {t, 2, -2};
}

void hit_box(const Box& box, const std::array<double, 3>& o, const std::array<double, 3>& d,
             Hit& best) {
  double t_in = -std::numeric_limits<double>::infinity();
  double t_out = std::numeric_limits<double>::infinity();
  for (int ax = 0; ax < 3; ++ax) {
    const size_t a = size_t(ax);
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < box.lo[a] || o[a] > box.hi[a]) return;
      continue;
    }
    double t0 = (box.lo[a] - o[a]) / d[a];
    double t1 = (box.hi[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_in = std::max(t_in, t0);
    t_out = std::min(t_out, t1);
    if (t_in > t_out) return;
  }
  if (t_in > kRayEps && t_in < best.t) best = {t_in, box.group, box.object_id};
}

void base_color(int group, int object_id, double rgb[3]) {
  switch (group) {
    case 0:  // poles
      rgb[0] = 0.35;
      rgb[1] = 0.35;
      rgb[2] = 0.42;
      break;
    case 1: {  // boxes: a few distinct hues cycled by object id
      static const double hues[5][3] = {{0.72, 0.32, 0.26},
                                        {0.30, 0.48, 0.72},
                                        {0.66, 0.60, 0.28},
                                        {0.38, 0.62, 0.40},
                                        {0.58, 0.40, 0.62}};
      const double* h = hues[uint64_t(object_id) % 5];
      rgb[0] = h[0];
      rgb[1] = h[1];
      rgb[2] = h[2];
      break;
    }
    case 2:  // backdrop
      rgb[0] = 0.55;
      rgb[1] = 0.60;
      rgb[2] = 0.68;
      break;
    default:  // ground
      rgb[0] = 0.46;
      rgb[1] = 0.42;
      rgb[2] = 0.36;
      break;
  }
}

void validate(const SceneParams& p) {
  check(p.H >= 16 && p.W >= 16, "scene: resolution too small");
  check(p.n_boxes >= 0 && p.n_poles >= 0, "scene: negative object count");
  check(p.texture_freq > 0, "scene: texture_freq must be positive");
  check(p.ground_height > 0.2, "scene: camera is at or below the ground plane");
  check(p.far_plane >= 10.0, "scene: far plane too close");
  check(p.t_forward_min >= 0 && p.t_forward_min <= p.t_forward_max && p.t_forward_max <= 0.5,
        "scene: translation range violates the co-visibility bound");
  check(p.yaw_max_deg >= 0 && p.yaw_max_deg <= 5.0,
        "scene: yaw range violates the co-visibility bound");
}

PoseRT yaw_pose(double psi, double tx, double ty, double tz) {
  PoseRT p;
  const double c = std::cos(psi), s = std::sin(psi);
  p.R = {c, 0, s, 0, 1, 0, -s, 0, c};
  p.t = {tx, ty, tz};
  return p;
}

}  // namespace

Intrinsics default_intrinsics(int H, int W) {
  Intrinsics K;
  K.fx = K.fy = real(0.6) * real(W);
  K.cx = real(W - 1) / 2;
  K.cy = real(H - 1) / 2;
  return K;
}

SceneDef build_scene_def(const SceneParams& params, uint64_t seed) {
  validate(params);
  SceneDef def;
  def.ground_y = params.ground_height;
  def.far_radius = params.far_plane;
  def.texture_freq = params.texture_freq;
  def.noise_seed = mix_seed(seed, 0xA11CEu);

  Rng rng(mix_seed(seed, 0xB0BE5u));
  const double gy = params.ground_height;
  for (int i = 0; i < params.n_boxes; ++i) {
    const double cx = rng.uniform(real(-7), real(7));
    const double cz = rng.uniform(real(4), real(22));
    const double wx = rng.uniform(real(0.4), real(1.4));
    const double wz = rng.uniform(real(0.4), real(1.4));
    const double hy = rng.uniform(real(0.8), real(2.6));
    Box b;
    b.lo = {cx - wx, gy - hy, cz - wz};
    b.hi = {cx + wx, gy, cz + wz};
    b.group = 1;
    b.object_id = i;
    def.boxes.push_back(b);
  }
  for (int i = 0; i < params.n_poles; ++i) {
    const double cx = rng.uniform(real(-6), real(6));
    const double cz = rng.uniform(real(3), real(18));
    const double w = rng.uniform(real(0.04), real(0.10));
    const double hy = rng.uniform(real(1.8), real(3.6));
    Box b;
    b.lo = {cx - w, gy - hy, cz - w};
    b.hi = {cx + w, gy, cz + w};
    b.group = 0;
    b.object_id = 100 + i;
    def.boxes.push_back(b);
  }
  return def;
}

RenderedView render_view(const SceneDef& def, const PoseRT& cam, const Intrinsics& K, int H,
                         int W) {
  RenderedView view;
  view.image = Tensor::zeros({3, H, W}, false);
  view.depth = Tensor::zeros({1, H, W}, false);
  view.groups.H = H;
  view.groups.W = W;
  view.groups.num_classes = 4;
  view.groups.labels.resize(size_t(H) * W);

  real* img = view.image.data();
  real* dep = view.depth.data();
  const size_t HW = size_t(H) * W;
  const std::array<double, 3> origin = cam.t;
  for (int py = 0; py < H; ++py)
    for (int px = 0; px < W; ++px) {
      const std::array<double, 3> dir_cam = {(double(px) - K.cx) / K.fx,
                                             (double(py) - K.cy) / K.fy, 1.0};
      std::array<double, 3> d;
      for (int r = 0; r < 3; ++r)
        d[size_t(r)] = cam.R[size_t(r * 3)] * dir_cam[0] + cam.R[size_t(r * 3 + 1)] * dir_cam[1] +
                       cam.R[size_t(r * 3 + 2)] * dir_cam[2];

      Hit best;
      hit_ground(def, origin, d, best);
      hit_sphere(def, origin, d, best);
      for (const Box& b : def.boxes) hit_box(b, origin, d, best);
      check(best.group >= 0, "render_view: ray escaped the scene");

      // dir_cam.z == 1, so the ray parameter is the optical-axis depth
      const size_t p = size_t(py) * W + px;
      dep[p] = real(best.t);
      view.groups.labels[p] = uint8_t(best.group);

      const std::array<double, 3> hit = {origin[0] + best.t * d[0], origin[1] + best.t * d[1],
                                         origin[2] + best.t * d[2]};
      double rgb[3];
      base_color(best.group, best.object_id, rgb);
      // the backdrop sits at the far radius where a pixel footprint spans
      // meters, so its texture gets a much lower frequency to stay resolvable
      const double freq = double(def.texture_freq) * (best.group == 2 ? 0.15 : 1.0);
      const double lum = value_noise(def.noise_seed + uint64_t(best.object_id + 16), freq, hit);
      for (int c = 0; c < 3; ++c) {
        const double v = rgb[c] * (0.45 + 0.95 * lum);
        img[size_t(c) * HW + p] = real(std::min(0.97, std::max(0.03, v)));
      }
    }
  return view;
}

SceneSample generate_scene(const SceneParams& params, uint64_t seed) {
  const SceneDef def = build_scene_def(params, seed);
  Rng rng(mix_seed(seed, 0xCA3u));
  const double deg = 3.14159265358979323846 / 180.0;

  const double s1 = rng.uniform(real(params.t_forward_min), real(params.t_forward_max));
  const double psi1 = rng.uniform(real(-params.yaw_max_deg), real(params.yaw_max_deg)) * deg;
  const double tx1 = rng.uniform(real(-0.03), real(0.03));
  const double ty1 = rng.uniform(real(-0.01), real(0.01));
  const double s2 = rng.uniform(real(params.t_forward_min), real(params.t_forward_max));
  const double psi2 = rng.uniform(real(-params.yaw_max_deg), real(params.yaw_max_deg)) * deg;
  const double tx2 = rng.uniform(real(-0.03), real(0.03));
  const double ty2 = rng.uniform(real(-0.01), real(0.01));

  // cam t is the world frame. In the previous camera's frame, cam t sits at
  // (tx1, ty1, s1) with yaw psi1 — so that transform IS T_{t->prev}.
  const PoseRT T_t_to_prev = yaw_pose(psi1, tx1, ty1, s1);
  const PoseRT world_from_prev = T_t_to_prev.inverse();
  const PoseRT world_from_next = yaw_pose(psi2, tx2, ty2, s2);
  const PoseRT T_t_to_next = world_from_next.inverse();

  const Intrinsics K = default_intrinsics(params.H, params.W);
  PoseRT identity;

  SceneSample sample;
  RenderedView vt = render_view(def, identity, K, params.H, params.W);
  sample.frame_t = vt.image;
  sample.gt_depth = vt.depth;
  sample.gt_groups = std::move(vt.groups);
  sample.frame_prev = render_view(def, world_from_prev, K, params.H, params.W).image;
  sample.frame_next = render_view(def, world_from_next, K, params.H, params.W).image;
  sample.T_t_to_prev = T_t_to_prev;
  sample.T_t_to_next = T_t_to_next;
  sample.K = K;
  sample.seed = seed;
  return sample;
}

}  // namespace xd::scene
