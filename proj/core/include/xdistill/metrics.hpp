#pragma once

#include "xdistill/tensor.hpp"

namespace xd {

struct MetricsReport {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;  // nested: d1 <= d2 <= d3
};

namespace metrics {

// Standard Eigen-protocol depth metrics, accumulated in f64 over pixels with
// gt > 0. median_scale aligns pred by median(gt)/median(pred) first; pred is
// clamped to [clamp_lo, clamp_hi] after alignment.
MetricsReport evaluate_depth(const Tensor& pred, const Tensor& gt, bool median_scale,
                             double clamp_lo = 0.1, double clamp_hi = 100.0);

// element-wise mean of the reports (for multi-sample / multi-seed summaries)
MetricsReport average(const std::vector<MetricsReport>& reports);

}  // namespace metrics
}  // namespace xd
