#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xdistill/losses.hpp"
#include "xdistill/scene.hpp"

namespace xd {

// Every field has a default listed here; config files use `key = value` lines
// with `#` comments and keys exactly as named below. Unknown keys are
// rejected.
struct TrainConfig {
  // optimization
  real lr = real(1e-4);
  int total_steps = 5000;
  int batch_size = 4;
  uint64_t seed = 42;

  // objective
  real alpha = real(0.85);           // L1 weight inside the photometric loss
  real lambda_smooth = real(1e-3);   // full-scale smoothness weight, /2^k below
  int n_scales = 4;
  bool use_min_reprojection = true;
  bool use_automask = true;

  // distillation
  bool distill_enabled = true;
  real lambda_d2s = real(0.005);     // schedule endpoint
  std::string schedule = "linear";   // or "constant"
  std::string grouping = "proposed4";
  std::string d2s_variant = "standard_2conv";
  std::string d2s_input = "disparity";  // or "depth" (rescaled to (0,1))
  real teacher_noise = real(0.05);

  // depth parameterization / backbone
  real min_depth = real(0.1);
  real max_depth = real(100);
  std::string backbone = "standard";  // or "slim"

  // data
  int height = 64, width = 128;
  int n_boxes = 6, n_poles = 4;
  real texture_freq = real(0.3);
  double t_forward_min = 0.05, t_forward_max = 0.30;
  double yaw_max_deg = 2.0;
  double ground_height = 1.4;
  double far_plane = 35.0;
  int n_samples = 64;       // training scenes
  int n_eval_samples = 8;   // held-out scenes (separate seed stream)
  bool shuffle = true;
  std::string dataset_dir;  // empty -> generate procedurally

  // artifacts
  std::string out_dir = "runs";
  int checkpoint_interval = 1000;

  LossConfig loss() const;
  SceneParams scene() const;
  void validate() const;

  // set one field from its textual form; unknown key or bad value -> error
  void apply(const std::string& key, const std::string& value);
  // canonical `key = value` listing of every field
  std::string dump() const;
};

namespace config {

// `key = value` lines, `#` comments, blank lines ignored
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);  // defaults + file overrides

// hash of everything that affects the training math (seed and output paths
// excluded); the run directory is named run_<hash>_s<seed>
uint64_t config_hash(const TrainConfig& cfg);
std::string run_name(const TrainConfig& cfg);

}  // namespace config
}  // namespace xd
