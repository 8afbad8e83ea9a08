#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xdistill/config.hpp"
#include "xdistill/dataset.hpp"
#include "xdistill/losses.hpp"
#include "xdistill/metrics.hpp"
#include "xdistill/networks.hpp"
#include "xdistill/optimizer.hpp"
#include "xdistill/tape.hpp"

namespace xd {

// The three trainable networks, seeded from cfg.seed. The teacher is not here:
// it has no parameters, only cached labels.
struct Models {
  DepthNetwork depth;
  PoseNetwork pose;
  D2SNetwork d2s;
  int n_groups;

  explicit Models(const TrainConfig& cfg);

  // names prefixed depth. / pose. / d2s.
  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> buffers() const;  // d2s.buf.* (BN running stats)
};

// One training step's loss graph, exposed so tests can probe gradient paths.
struct StepLosses {
  std::vector<PerPixelLossMap> photo;  // per scale, after masking
  std::vector<Tensor> smooth;          // per scale
  Tensor d2s_loss;                     // undefined when the term is inactive
  real lambda_d2s = 0;
  Tensor total;
  double photo_value = 0;   // host sums for logging
  double smooth_value = 0;  // already weighted by lambda_sm_base / 2^k
  double d2s_value = 0;
  double d2s_accuracy = -1;  // argmax-vs-teacher on this batch; -1 when inactive
};

// Builds the full training objective for one batch. teacher[i] must be in the
// grouping's label space and aligned with batch[i]. The d2s term enters only
// when cfg.distill_enabled and the scheduled weight is nonzero.
StepLosses forward_losses(Tape& tp, Models& m, const TrainConfig& cfg,
                          const std::vector<const SceneSample*>& batch,
                          const std::vector<const SegmentationMap*>& teacher, int step,
                          bool training);

struct TrainResult {
  std::string run_dir, checkpoint_path, log_path;
  double initial_photo = 0, final_photo = 0;  // mean of first / last 10 steps
  MetricsReport initial_eval, final_eval;     // median-scaled unless noted
  double initial_d2s_accuracy = 0, final_d2s_accuracy = 0;
  std::vector<double> loss_curve;  // total loss per executed step
};

// Runs cfg.total_steps steps (resuming from a checkpoint's recorded step when
// given), writing config, CSV log, and checkpoints under the run directory.
TrainResult train(const TrainConfig& cfg, const std::string& resume_checkpoint = "");

// Loads model parameters + buffers from a checkpoint and evaluates depth on
// cfg's evaluation scenes (or cfg.dataset_dir when set). d2s_accuracy_out, if
// non-null, receives the translator's accuracy against the teacher labels.
MetricsReport evaluate_checkpoint(const TrainConfig& cfg, const std::string& checkpoint_path,
                                  bool median_scale, double* d2s_accuracy_out = nullptr);

struct AblationRow {
  std::string variant;
  MetricsReport metrics;  // averaged over seeds
  double d2s_accuracy = 0;
};

// axis in {grouping, d2s_depth, schedule_weight, backbone_size}; trains every
// variant on the same seed list and writes a CSV table.
std::vector<AblationRow> run_ablation(const std::string& axis, const TrainConfig& base,
                                      const std::vector<uint64_t>& seeds,
                                      const std::string& out_csv);

}  // namespace xd
