#include "eval/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "core/error.hpp"

namespace df {

namespace {

double ratio(int64_t num, int64_t den, const char* what) {
  if (den == 0) {
    std::fprintf(stderr, "warning: %s has an empty denominator, reporting nan\n", what);
    return std::nan("");
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

void fill_occupancy_metrics(MetricsReport& r) {
  const auto& o = r.o_counts;
  r.o_acc = ratio(o.tp + o.tn, o.total(), "O accuracy");
  r.o_prec = ratio(o.tp, o.tp + o.fp, "O precision");
  r.o_rec = ratio(o.tp, o.tp + o.fn, "O recall");
  const auto& e = r.ie_counts;
  r.ie_acc = ratio(e.tp + e.tn, e.total(), "IE accuracy");
  r.ie_prec = ratio(e.tp, e.tp + e.fp, "IE precision");
  r.ie_rec = ratio(e.tp, e.tp + e.fn, "IE recall");
}

MetricsReport occupancy_metrics(const BitGrid& pred, const BitGrid& gt, const BitGrid& visibility) {
  require(pred.nx == gt.nx && pred.ny == gt.ny && pred.nz == gt.nz && gt.nx == visibility.nx &&
              gt.ny == visibility.ny && gt.nz == visibility.nz,
          "occupancy_metrics: grid shapes differ");
  require(pred.bits.size() == gt.bits.size() && gt.bits.size() == visibility.bits.size(),
          "occupancy_metrics: grid sizes differ");
  MetricsReport r;
  for (size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0, vis = visibility.bits[i] != 0;
    // full-scene split, positive class = occupied
    if (p && g)
      r.o_counts.tp++;
    else if (p && !g)
      r.o_counts.fp++;
    else if (!p && g)
      r.o_counts.fn++;
    else
      r.o_counts.tn++;
    // invisible cells only, positive class = empty
    if (!vis) {
      const bool pe = !p, ge = !g;
      if (pe && ge)
        r.ie_counts.tp++;
      else if (pe && !ge)
        r.ie_counts.fp++;
      else if (!pe && ge)
        r.ie_counts.fn++;
      else
        r.ie_counts.tn++;
    }
  }
  fill_occupancy_metrics(r);
  return r;
}

DepthMetrics depth_metrics(const Tensor& depth, const Tensor& gt_depth, const Tensor& mask) {
  require(depth.shape() == gt_depth.shape() && depth.shape() == mask.shape(),
          "depth_metrics: shape mismatch " + shape_str(depth.shape()) + " vs " + shape_str(gt_depth.shape()));
  int64_t n = 0;
  double abs_rel = 0, sq = 0, hits = 0;
  for (int64_t i = 0; i < depth.numel(); ++i) {
    if (mask.vec()[static_cast<size_t>(i)] == 0.0) continue;
    const double d = depth.vec()[static_cast<size_t>(i)];
    const double g = gt_depth.vec()[static_cast<size_t>(i)];
    require(g > 0.0, "depth_metrics: ground truth must be positive inside the mask");
    ++n;
    abs_rel += std::fabs(d - g) / g;
    sq += (d - g) * (d - g);
    const double r = d > 0 ? std::max(d / g, g / d) : std::numeric_limits<double>::infinity();
    hits += r < 1.25 ? 1.0 : 0.0;
  }
  require(n > 0, "depth_metrics: empty mask");
  DepthMetrics m;
  m.abs_rel = abs_rel / static_cast<double>(n);
  m.rmse = std::sqrt(sq / static_cast<double>(n));
  m.delta125 = hits / static_cast<double>(n);
  return m;
}

void write_report(const std::vector<MetricsReport>& reports, const std::string& path) {
  require(!reports.empty(), "write_report: no reports");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "mode,O_acc,O_prec,O_rec,IE_acc,IE_prec,IE_rec,AbsRel,RMSE,delta125\n";
  char buf[64];
  for (const auto& r : reports) {
    os << r.mode;
    for (double v : {r.o_acc, r.o_prec, r.o_rec, r.ie_acc, r.ie_prec, r.ie_rec, r.abs_rel, r.rmse, r.delta125}) {
      if (std::isnan(v))
        os << ",nan";
      else {
        std::snprintf(buf, sizeof buf, ",%.6f", v);
        os << buf;
      }
    }
    os << "\n";
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace df
