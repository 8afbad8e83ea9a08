#include "xdistill/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <unordered_map>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "xdistill/geometry.hpp"
#include "xdistill/random.hpp"
#include "xdistill/semantics.hpp"
#include "xdistill/serialize.hpp"

namespace fs = std::filesystem;

namespace xd {

namespace {

// seed stream tags so data, teacher, and weights draw independent sequences
constexpr uint64_t kSeedData = 0xDA7Aull;
constexpr uint64_t kSeedEval = 0xE7A1ull;
constexpr uint64_t kSeedTeacher = 0x7EAC4ull;
constexpr uint64_t kSeedEvalTeacher = 0x7EAC5ull;
constexpr uint64_t kSeedDepth = 0xD00Dull;
constexpr uint64_t kSeedPose = 0x905Eull;
constexpr uint64_t kSeedD2S = 0xD25ull;

Tensor stack_frames(const std::vector<const Tensor*>& frames) {
  check(!frames.empty(), "stack_frames: empty batch");
  const Shape s = frames[0]->shape();
  check(s.size() == 3, "stack_frames: expected C x H x W frames");
  Shape out_shape = {int(frames.size()), s[0], s[1], s[2]};
  Tensor out = Tensor::zeros(out_shape, false);
  const size_t per = shape_numel(s);
  for (size_t i = 0; i < frames.size(); ++i) {
    check(frames[i]->shape() == s, "stack_frames: ragged batch");
    std::memcpy(out.data() + i * per, frames[i]->data(), per * sizeof(real));
  }
  return out;
}

// constant 2x mean pooling for the smoothness image pyramid
Tensor pool2x(const Tensor& x) {
  const Shape s = x.shape();
  check(s.size() == 4 && s[2] % 2 == 0 && s[3] % 2 == 0, "pool2x: bad shape " + shape_str(s));
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  Tensor out = Tensor::zeros({N, C, H / 2, W / 2}, false);
  const real* px = x.data();
  real* po = out.data();
  for (int nc = 0; nc < N * C; ++nc) {
    const real* plane = px + size_t(nc) * H * W;
    real* oplane = po + size_t(nc) * (H / 2) * (W / 2);
    for (int y = 0; y < H / 2; ++y)
      for (int xw = 0; xw < W / 2; ++xw) {
        const real* r0 = plane + size_t(2 * y) * W + 2 * xw;
        const real* r1 = r0 + W;
        oplane[size_t(y) * (W / 2) + xw] = (r0[0] + r0[1] + r1[0] + r1[1]) * real(0.25);
      }
  }
  return out;
}

double host_masked_mean(const PerPixelLossMap& map) {
  const real* pv = map.values.data();
  const real* pm = map.mask.data();
  const size_t n = map.values.numel();
  double sum = 0;
  size_t count = 0;
  for (size_t i = 0; i < n; ++i)
    if (pm[i] > 0) {
      sum += double(pv[i]);
      ++count;
    }
  return count ? sum / double(count) : 0.0;
}

// fraction of non-ignored pixels whose argmax logit matches the label
double logits_accuracy(const Tensor& logits, const std::vector<uint8_t>& labels) {
  const Shape s = logits.shape();
  const int N = s[0], C = s[1];
  const size_t HW = size_t(s[2]) * s[3];
  check(labels.size() == size_t(N) * HW, "logits_accuracy: label count mismatch");
  const real* pl = logits.data();
  size_t count = 0, agree = 0;
  for (int n = 0; n < N; ++n)
    for (size_t p = 0; p < HW; ++p) {
      const uint8_t lab = labels[size_t(n) * HW + p];
      if (lab == kIgnoreId) continue;
      const real* base = pl + (size_t(n) * C) * HW + p;
      int best = 0;
      real bv = base[0];
      for (int c = 1; c < C; ++c) {
        const real v = base[size_t(c) * HW];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      ++count;
      if (best == lab) ++agree;
    }
  return count ? double(agree) / double(count) : 1.0;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// deterministic sample index for a global batch position; epochs reshuffle
struct EpochOrders {
  int n = 0;
  uint64_t seed = 0;
  bool shuffle = true;
  int cached_epoch = -1;
  std::vector<int> order;

  int index_at(int64_t pos) {
    const int epoch = int(pos / n);
    if (epoch != cached_epoch) {
      order = data::epoch_order(n, seed, epoch, shuffle);
      cached_epoch = epoch;
    }
    return order[size_t(pos % n)];
  }
};

SegmentationMap make_teacher(const SceneSample& s, const GroupingScheme& scheme, real noise,
                             uint64_t seed) {
  return semantics::teacher_segment(semantics::remap_scene_groups(s.gt_groups, scheme), noise,
                                    seed);
}

}  // namespace

Models::Models(const TrainConfig& cfg)
    : depth(cfg.height, cfg.width, cfg.n_scales, mix_seed(cfg.seed, kSeedDepth),
            parse_backbone(cfg.backbone)),
      pose(mix_seed(cfg.seed, kSeedPose)),
      d2s(parse_d2s_kind(cfg.d2s_variant), semantics::make_grouping_scheme(cfg.grouping).n_groups,
          mix_seed(cfg.seed, kSeedD2S)),
      n_groups(semantics::make_grouping_scheme(cfg.grouping).n_groups) {}

std::vector<NamedTensor> Models::parameters() const {
  std::vector<NamedTensor> out;
  for (auto& [name, t] : depth.parameters()) out.emplace_back("depth." + name, t);
  for (auto& [name, t] : pose.parameters()) out.emplace_back("pose." + name, t);
  for (auto& [name, t] : d2s.parameters()) out.emplace_back("d2s." + name, t);
  return out;
}

std::vector<NamedTensor> Models::buffers() const {
  std::vector<NamedTensor> out;
  for (auto& [name, t] : d2s.buffers()) out.emplace_back("d2s.buf." + name, t);
  return out;
}

StepLosses forward_losses(Tape& tp, Models& m, const TrainConfig& cfg,
                          const std::vector<const SceneSample*>& batch,
                          const std::vector<const SegmentationMap*>& teacher, int step,
                          bool training) {
  const int N = int(batch.size());
  check(N >= 1, "forward_losses: empty batch");
  const int H = cfg.height, W = cfg.width;
  const Shape frame_shape = {3, H, W};
  const Intrinsics K = batch[0]->K;
  for (const SceneSample* s : batch) {
    check(s->frame_t.shape() == frame_shape, "forward_losses: frame size differs from config");
    check(s->K.fx == K.fx && s->K.fy == K.fy && s->K.cx == K.cx && s->K.cy == K.cy,
          "forward_losses: mixed intrinsics in one batch");
  }
  const LossConfig lcfg = cfg.loss();

  std::vector<const Tensor*> ft, fp, fn;
  for (const SceneSample* s : batch) {
    ft.push_back(&s->frame_t);
    fp.push_back(&s->frame_prev);
    fn.push_back(&s->frame_next);
  }
  const Tensor I_t = stack_frames(ft);
  const Tensor sources[2] = {stack_frames(fp), stack_frames(fn)};

  std::vector<Tensor> disps = m.depth.forward(tp, I_t);

  Tensor R[2], tr[2];
  for (int s = 0; s < 2; ++s) {
    auto [aa, t] = m.pose.forward(tp, I_t, sources[s]);
    R[s] = geo::axis_angle_to_rotation(tp, aa);
    tr[s] = t;
  }

  // unwarped-source losses for the auto-mask; constants by construction
  std::vector<PerPixelLossMap> ident;
  if (cfg.use_automask) {
    NoGradGuard ng(tp);
    for (int s = 0; s < 2; ++s) ident.push_back(losses::photometric_loss(tp, I_t, sources[s], cfg.alpha));
  }

  std::vector<Tensor> image_pyr(size_t(cfg.n_scales));
  image_pyr[0] = I_t;
  for (int k = 1; k < cfg.n_scales; ++k) image_pyr[size_t(k)] = pool2x(image_pyr[size_t(k - 1)]);

  StepLosses out;
  for (int k = 0; k < cfg.n_scales; ++k) {
    Tensor sigma_full = geo::scale_disparity_pyramid(tp, disps[size_t(k)], H, W);
    Tensor depth_full = disparity_to_depth(tp, sigma_full, cfg.min_depth, cfg.max_depth);
    std::vector<PerPixelLossMap> warped_maps;
    for (int s = 0; s < 2; ++s) {
      auto [coords, front] = geo::warp_coordinates(tp, depth_full, K, R[s], tr[s]);
      auto [warped, valid] = geo::synthesize_view(tp, sources[s], coords, front);
      PerPixelLossMap pm = losses::photometric_loss(tp, I_t, warped, cfg.alpha);
      pm.mask = valid;
      warped_maps.push_back(pm);
    }
    out.photo.push_back(losses::min_reprojection_automask(tp, warped_maps, ident,
                                                          cfg.use_min_reprojection,
                                                          cfg.use_automask));
    out.smooth.push_back(losses::smoothness_loss(tp, disps[size_t(k)], image_pyr[size_t(k)]));
  }

  out.lambda_d2s = losses::lambda_schedule(step, lcfg);
  if (cfg.distill_enabled && out.lambda_d2s > 0) {
    check(teacher.size() == size_t(N), "forward_losses: teacher labels missing");
    // teacher labels are plain byte grids: structurally impossible for them to
    // carry gradients, which is the frozen-teacher contract
    std::vector<uint8_t> labels;
    labels.reserve(size_t(N) * size_t(H) * W);
    for (const SegmentationMap* t : teacher) {
      check(t && int(t->labels.size()) == H * W, "forward_losses: teacher label size mismatch");
      check(t->num_classes == m.n_groups, "forward_losses: teacher group count mismatch");
      labels.insert(labels.end(), t->labels.begin(), t->labels.end());
    }
    Tensor d2s_input = disps[0];
    if (cfg.d2s_input == "depth") {
      Tensor depth0 = disparity_to_depth(tp, disps[0], cfg.min_depth, cfg.max_depth);
      d2s_input = ops::scale(tp, depth0, real(1) / cfg.max_depth);
    }
    Tensor logits = m.d2s.forward(tp, d2s_input, training);
    out.d2s_loss = losses::d2s_distillation_loss(tp, logits, labels, kIgnoreId);
    out.d2s_value = double(out.d2s_loss.value());
    out.d2s_accuracy = logits_accuracy(logits, labels);
  }

  out.total = losses::total_loss(tp, out.photo, out.smooth, out.d2s_loss, step, lcfg);

  for (int k = 0; k < cfg.n_scales; ++k) {
    out.photo_value += host_masked_mean(out.photo[size_t(k)]);
    out.smooth_value += double(cfg.lambda_smooth / real(1 << k)) *
                        double(out.smooth[size_t(k)].value());
  }
  return out;
}

namespace {

std::vector<NamedTensor> checkpoint_tensors(const Models& m, const Adam& adam, int steps_done) {
  std::vector<NamedTensor> out = m.parameters();
  for (auto& nt : m.buffers()) out.push_back(nt);
  for (auto& nt : adam.state()) out.push_back(nt);
  out.emplace_back("meta.step", Tensor::scalar(real(steps_done)));
  return out;
}

void copy_named_into(const std::vector<NamedTensor>& records,
                     const std::vector<NamedTensor>& targets, const std::string& path) {
  std::unordered_map<std::string, Tensor> by_name;
  for (const auto& [name, t] : records) by_name.emplace(name, t);
  for (const auto& [name, target] : targets) {
    auto it = by_name.find(name);
    check(it != by_name.end(), "checkpoint '" + path + "' is missing tensor '" + name + "'");
    check(it->second.shape() == target.shape(),
          "checkpoint tensor '" + name + "' has shape " + shape_str(it->second.shape()) +
              ", model expects " + shape_str(target.shape()));
    Tensor dst = target;
    std::copy(it->second.data(), it->second.data() + it->second.numel(), dst.data());
  }
}

double find_meta_step(const std::vector<NamedTensor>& records, const std::string& path) {
  for (const auto& [name, t] : records)
    if (name == "meta.step") return double(t.value());
  fail("checkpoint '" + path + "' has no meta.step record");
}

struct EvalOutputs {
  MetricsReport metrics;
  double d2s_accuracy = 0;
};

EvalOutputs evaluate_models(Models& m, const TrainConfig& cfg, const Dataset& ds,
                            const std::vector<SegmentationMap>& teachers, bool median_scale) {
  std::vector<MetricsReport> reports;
  double acc_sum = 0;
  const int H = cfg.height, W = cfg.width;
  for (int i = 0; i < ds.size(); ++i) {
    const SceneSample& s = ds.sample(i);
    Tape tp;
    NoGradGuard ng(tp);
    Tensor I_t = stack_frames({&s.frame_t});
    std::vector<Tensor> disps = m.depth.forward(tp, I_t);
    Tensor depth = disparity_to_depth(tp, disps[0], cfg.min_depth, cfg.max_depth);
    Tensor pred = Tensor::zeros({1, H, W}, false);
    std::copy(depth.data(), depth.data() + depth.numel(), pred.data());
    reports.push_back(metrics::evaluate_depth(pred, s.gt_depth, median_scale));

    Tensor d2s_input = disps[0];
    if (cfg.d2s_input == "depth") d2s_input = ops::scale(tp, depth, real(1) / cfg.max_depth);
    Tensor logits = m.d2s.forward(tp, d2s_input, /*training=*/false);
    acc_sum += logits_accuracy(logits, teachers[size_t(i)].labels);
  }
  EvalOutputs out;
  out.metrics = metrics::average(reports);
  out.d2s_accuracy = acc_sum / double(ds.size());
  return out;
}

std::vector<SegmentationMap> make_teachers(const Dataset& ds, const GroupingScheme& scheme,
                                           real noise, uint64_t base_seed) {
  std::vector<SegmentationMap> out;
  out.reserve(size_t(ds.size()));
  for (int i = 0; i < ds.size(); ++i)
    out.push_back(make_teacher(ds.sample(i), scheme, noise, mix_seed(base_seed, uint64_t(i))));
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& resume_checkpoint) {
  cfg.validate();
#if defined(__GLIBC__)
  // keep the big per-step buffers on the heap instead of mmap/munmap cycles;
  // the kernel page churn otherwise costs ~10% of a CPU training run
  mallopt(M_MMAP_THRESHOLD, 128 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
#endif
  TrainResult result;
  result.run_dir = cfg.out_dir + "/" + config::run_name(cfg);
  fs::create_directories(result.run_dir);
  {
    std::ofstream f(result.run_dir + "/config.cfg", std::ios::binary);
    f << cfg.dump();
  }

  Dataset ds = cfg.dataset_dir.empty()
                   ? Dataset::generated(cfg.scene(), cfg.n_samples, mix_seed(cfg.seed, kSeedData))
                   : Dataset::from_dir(cfg.dataset_dir);
  Dataset eval_ds =
      Dataset::generated(cfg.scene(), cfg.n_eval_samples, mix_seed(cfg.seed, kSeedEval));
  const GroupingScheme scheme = semantics::make_grouping_scheme(cfg.grouping);

  // the frozen teacher: labels computed once per sample, never touched again
  const uint64_t teacher_base = mix_seed(cfg.seed, kSeedTeacher);
  std::vector<std::optional<SegmentationMap>> teacher_cache(size_t(ds.size()));
  auto teacher_for = [&](int i) -> const SegmentationMap* {
    auto& slot = teacher_cache[size_t(i)];
    if (!slot)
      slot = make_teacher(ds.sample(i), scheme, cfg.teacher_noise, mix_seed(teacher_base, uint64_t(i)));
    return &*slot;
  };
  const std::vector<SegmentationMap> eval_teachers =
      make_teachers(eval_ds, scheme, cfg.teacher_noise, mix_seed(cfg.seed, kSeedEvalTeacher));

  Models m(cfg);
  Adam adam(m.parameters(), cfg.lr);

  int start_step = 0;
  if (!resume_checkpoint.empty()) {
    const std::vector<NamedTensor> records = io::read_checkpoint(resume_checkpoint);
    std::vector<NamedTensor> targets = m.parameters();
    for (auto& nt : m.buffers()) targets.push_back(nt);
    copy_named_into(records, targets, resume_checkpoint);
    adam.load_state(records);
    start_step = int(find_meta_step(records, resume_checkpoint));
    check(start_step >= 0 && start_step < cfg.total_steps,
          "checkpoint step " + std::to_string(start_step) + " is not before total_steps");
  }

  if (start_step == 0) {
    const EvalOutputs ev = evaluate_models(m, cfg, eval_ds, eval_teachers, /*median_scale=*/true);
    result.initial_eval = ev.metrics;
    result.initial_d2s_accuracy = ev.d2s_accuracy;
  }

  result.log_path = result.run_dir + "/train_log.csv";
  std::ofstream log(result.log_path, std::ios::binary);
  check(log.good(), "train: cannot open log file " + result.log_path);
  log << "step,photo,smooth,d2s,lambda_d2s,d2s_acc,total\n";

  EpochOrders orders;
  orders.n = ds.size();
  orders.seed = cfg.seed;
  orders.shuffle = cfg.shuffle;

  std::vector<double> photo_log;
  for (int step = start_step; step < cfg.total_steps; ++step) {
    std::vector<const SceneSample*> batch;
    std::vector<const SegmentationMap*> teacher;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = orders.index_at(int64_t(step) * cfg.batch_size + b);
      batch.push_back(&ds.sample(idx));
      teacher.push_back(teacher_for(idx));
    }

    Tape tp;
    StepLosses sl = forward_losses(tp, m, cfg, batch, teacher, step, /*training=*/true);
    const double total = double(sl.total.value());
    if (!std::isfinite(total))
      fail("train: non-finite loss at step " + std::to_string(step) +
           " (photo=" + fmt9(sl.photo_value) + ", smooth=" + fmt9(sl.smooth_value) +
           ", d2s=" + fmt9(sl.d2s_value) + ", lambda_d2s=" + fmt9(double(sl.lambda_d2s)) + ")");

    tp.backward(sl.total);
    adam.step();
    adam.zero_grad();

    log << step << ',' << fmt9(sl.photo_value) << ',' << fmt9(sl.smooth_value) << ','
        << fmt9(sl.d2s_value) << ',' << fmt9(double(sl.lambda_d2s)) << ','
        << fmt9(sl.d2s_accuracy) << ',' << fmt9(total) << '\n';
    result.loss_curve.push_back(total);
    photo_log.push_back(sl.photo_value);

    const int done = step + 1;
    if (done % cfg.checkpoint_interval == 0 && done < cfg.total_steps) {
      char name[48];
      std::snprintf(name, sizeof(name), "/checkpoint_%06d.xdc", done);
      io::write_checkpoint(result.run_dir + name, checkpoint_tensors(m, adam, done));
    }
  }
  log.close();

  result.checkpoint_path = result.run_dir + "/checkpoint_final.xdc";
  io::write_checkpoint(result.checkpoint_path, checkpoint_tensors(m, adam, cfg.total_steps));

  const size_t nwin = std::min<size_t>(10, photo_log.size());
  if (nwin > 0) {
    double a = 0, b = 0;
    for (size_t i = 0; i < nwin; ++i) {
      a += photo_log[i];
      b += photo_log[photo_log.size() - 1 - i];
    }
    result.initial_photo = a / double(nwin);
    result.final_photo = b / double(nwin);
  }

  const EvalOutputs ev = evaluate_models(m, cfg, eval_ds, eval_teachers, /*median_scale=*/true);
  result.final_eval = ev.metrics;
  result.final_d2s_accuracy = ev.d2s_accuracy;
  return result;
}

MetricsReport evaluate_checkpoint(const TrainConfig& cfg, const std::string& checkpoint_path,
                                  bool median_scale, double* d2s_accuracy_out) {
  cfg.validate();
  Models m(cfg);
  const std::vector<NamedTensor> records = io::read_checkpoint(checkpoint_path);
  std::vector<NamedTensor> targets = m.parameters();
  for (auto& nt : m.buffers()) targets.push_back(nt);
  copy_named_into(records, targets, checkpoint_path);

  Dataset eval_ds = cfg.dataset_dir.empty()
                        ? Dataset::generated(cfg.scene(), cfg.n_eval_samples,
                                             mix_seed(cfg.seed, kSeedEval))
                        : Dataset::from_dir(cfg.dataset_dir);
  const GroupingScheme scheme = semantics::make_grouping_scheme(cfg.grouping);
  const std::vector<SegmentationMap> teachers =
      make_teachers(eval_ds, scheme, cfg.teacher_noise, mix_seed(cfg.seed, kSeedEvalTeacher));
  const EvalOutputs ev = evaluate_models(m, cfg, eval_ds, teachers, median_scale);
  if (d2s_accuracy_out) *d2s_accuracy_out = ev.d2s_accuracy;
  return ev.metrics;
}

std::vector<AblationRow> run_ablation(const std::string& axis, const TrainConfig& base,
                                      const std::vector<uint64_t>& seeds,
                                      const std::string& out_csv) {
  check(!seeds.empty(), "run_ablation: need at least one seed");
  struct Variant {
    std::string name;
    std::function<void(TrainConfig&)> apply;
  };
  std::vector<Variant> variants;
  if (axis == "grouping") {
    for (const std::string g : {"foreback2", "proposed4", "full19"})
      variants.push_back({g, [g](TrainConfig& c) { c.grouping = g; }});
  } else if (axis == "d2s_depth") {
    for (const std::string v : {"pointwise_only", "standard_2conv", "deep_4conv"})
      variants.push_back({v, [v](TrainConfig& c) { c.d2s_variant = v; }});
  } else if (axis == "schedule_weight") {
    variants.push_back({"constant_0.005", [](TrainConfig& c) {
                          c.schedule = "constant";
                          c.lambda_d2s = real(0.005);
                        }});
    for (const double w : {0.004, 0.005, 0.006}) {
      char name[32];
      std::snprintf(name, sizeof(name), "linear_%.3f", w);
      variants.push_back({name, [w](TrainConfig& c) {
                            c.schedule = "linear";
                            c.lambda_d2s = real(w);
                          }});
    }
  } else if (axis == "backbone_size") {
    for (const std::string b : {"standard", "slim"}) {
      variants.push_back({b + "_distill", [b](TrainConfig& c) {
                            c.backbone = b;
                            c.distill_enabled = true;
                          }});
      variants.push_back({b + "_baseline", [b](TrainConfig& c) {
                            c.backbone = b;
                            c.distill_enabled = false;
                          }});
    }
  } else {
    fail("run_ablation: unknown axis '" + axis + "' (grouping, d2s_depth, schedule_weight, "
         "backbone_size)");
  }

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    std::vector<MetricsReport> reports;
    double acc = 0;
    for (const uint64_t seed : seeds) {
      TrainConfig cfg = base;
      v.apply(cfg);
      cfg.seed = seed;
      const TrainResult r = train(cfg);
      reports.push_back(r.final_eval);
      acc += r.final_d2s_accuracy;
    }
    AblationRow row;
    row.variant = v.name;
    row.metrics = metrics::average(reports);
    row.d2s_accuracy = acc / double(seeds.size());
    rows.push_back(row);
  }

  if (!out_csv.empty()) {
    std::ofstream f(out_csv, std::ios::binary);
    check(f.good(), "run_ablation: cannot open " + out_csv);
    f << "variant,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,d2s_acc\n";
    for (const AblationRow& r : rows)
      f << r.variant << ',' << fmt9(r.metrics.abs_rel) << ',' << fmt9(r.metrics.sq_rel) << ','
        << fmt9(r.metrics.rmse) << ',' << fmt9(r.metrics.rmse_log) << ',' << fmt9(r.metrics.delta1)
        << ',' << fmt9(r.metrics.delta2) << ',' << fmt9(r.metrics.delta3) << ','
        << fmt9(r.d2s_accuracy) << '\n';
  }
  return rows;
}

}  // namespace xd
