#include "xdistill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace xd::metrics {

namespace {

double median_of(std::vector<double> v) {
  const size_t n = v.size();
  auto mid = v.begin() + long(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

MetricsReport evaluate_depth(const Tensor& pred, const Tensor& gt, bool median_scale,
                             double clamp_lo, double clamp_hi) {
  check(pred.shape() == gt.shape(), "evaluate_depth: shape mismatch");
  check(clamp_lo > 0 && clamp_lo < clamp_hi, "evaluate_depth: bad clamp range");
  const real* pp = pred.data();
  const real* pg = gt.data();
  const size_t n = gt.numel();

  std::vector<double> ps, gs;
  ps.reserve(n);
  gs.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    if (pg[i] > 0) {
      ps.push_back(double(pp[i]));
      gs.push_back(double(pg[i]));
    }
  }
  check(!ps.empty(), "evaluate_depth: no pixels with positive ground truth");

  if (median_scale) {
    const double mp = median_of(ps);
    check(mp > 0, "evaluate_depth: non-positive prediction median");
    const double s = median_of(gs) / mp;
    for (double& p : ps) p *= s;
  }

  MetricsReport r;
  const double inv = 1.0 / double(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) {
    const double p = std::min(clamp_hi, std::max(clamp_lo, ps[i]));
    const double g = gs[i];
    const double d = p - g;
    r.abs_rel += std::abs(d) / g;
    r.sq_rel += d * d / g;
    r.rmse += d * d;
    const double dl = std::log(p) - std::log(g);
    r.rmse_log += dl * dl;
    const double ratio = std::max(p / g, g / p);
    if (ratio < 1.25) r.delta1 += 1;
    if (ratio < 1.25 * 1.25) r.delta2 += 1;
    if (ratio < 1.25 * 1.25 * 1.25) r.delta3 += 1;
  }
  r.abs_rel *= inv;
  r.sq_rel *= inv;
  r.rmse = std::sqrt(r.rmse * inv);
  r.rmse_log = std::sqrt(r.rmse_log * inv);
  r.delta1 *= inv;
  r.delta2 *= inv;
  r.delta3 *= inv;
  return r;
}

MetricsReport average(const std::vector<MetricsReport>& reports) {
  check(!reports.empty(), "metrics::average: empty list");
  MetricsReport r;
  for (const auto& m : reports) {
    r.abs_rel += m.abs_rel;
    r.sq_rel += m.sq_rel;
    r.rmse += m.rmse;
    r.rmse_log += m.rmse_log;
    r.delta1 += m.delta1;
    r.delta2 += m.delta2;
    r.delta3 += m.delta3;
  }
  const double inv = 1.0 / double(reports.size());
  r.abs_rel *= inv;
  r.sq_rel *= inv;
  r.rmse *= inv;
  r.rmse_log *= inv;
  r.delta1 *= inv;
  r.delta2 *= inv;
  r.delta3 *= inv;
  return r;
}

}  // namespace xd::metrics
