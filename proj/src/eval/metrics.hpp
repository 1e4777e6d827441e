#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"
#include "synth/grid.hpp"

namespace df {

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  int64_t total() const { return tp + fp + fn + tn; }
};

// Occupancy triplets over the full grid (positive = occupied) and over
// the invisible cells only (positive = empty), plus depth metrics.
// Unset or undefined entries hold NaN.
struct MetricsReport {
  std::string mode;
  double o_acc = std::nan(""), o_prec = std::nan(""), o_rec = std::nan("");
  double ie_acc = std::nan(""), ie_prec = std::nan(""), ie_rec = std::nan("");
  double abs_rel = std::nan(""), rmse = std::nan(""), delta125 = std::nan("");
  ConfusionCounts o_counts, ie_counts;
};

// Computes both splits from prediction, ground truth, and visibility
// grids of identical shape. Empty denominators come back as NaN.
MetricsReport occupancy_metrics(const BitGrid& pred, const BitGrid& gt, const BitGrid& visibility);

// Same, from pre-accumulated confusion counts.
void fill_occupancy_metrics(MetricsReport& r);

struct DepthMetrics {
  double abs_rel = 0, rmse = 0, delta125 = 0;
};

// abs_rel = mean |d-g|/g, rmse = sqrt(mean (d-g)^2), delta125 =
// fraction with max(d/g, g/d) < 1.25, over pixels where mask != 0.
DepthMetrics depth_metrics(const Tensor& depth, const Tensor& gt_depth, const Tensor& mask);

// CSV: mode,O_acc,O_prec,O_rec,IE_acc,IE_prec,IE_rec,AbsRel,RMSE,delta125
// with six decimal places; one row per report.
void write_report(const std::vector<MetricsReport>& reports, const std::string& path);

}  // namespace df
