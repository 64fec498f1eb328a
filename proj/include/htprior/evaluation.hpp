#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <tuple>
#include <vector>

#include "htprior/common.hpp"
#include "htprior/pgm.hpp"
#include "htprior/tensor.hpp"

namespace htprior {

struct MatchResult {
  double threshold = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 1.0;
  double recall = 0.0;

  std::size_t predicted() const { return tp + fp; }
  std::size_t ground_truth() const { return tp + fn; }

  // Fills precision/recall from the counts. Empty prediction reports
  // precision 1; empty ground truth reports recall 1.
  void finalize() {
    precision = predicted() == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(predicted());
    recall = ground_truth() == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(ground_truth());
  }
};

// Matching tolerance for an image: the given fraction of its diagonal.
inline double tolerance_px(std::size_t width, std::size_t height, double fraction = 0.0075) {
  return fraction * std::hypot(static_cast<double>(width), static_cast<double>(height));
}

// One-to-one greedy matching of nonzero pixels, closest pairs first. Pairs
// at equal distance are taken in raster order of the prediction, then of the
// ground truth.
inline MatchResult match_pixels(const Raster& pred, const Raster& gt, double tol_px) {
  if (pred.width != gt.width || pred.height != gt.height) throw ConfigError("match_pixels: raster size mismatch");
  if (tol_px < 0.0) throw ConfigError("match_pixels: negative tolerance");
  const long w = static_cast<long>(pred.width), h = static_cast<long>(pred.height);
  const long reach = static_cast<long>(std::floor(tol_px));
  const double tol2 = tol_px * tol_px;

  struct Offset {
    long dx, dy, d2;
  };
  std::vector<Offset> offsets;
  for (long dy = -reach; dy <= reach; ++dy)
    for (long dx = -reach; dx <= reach; ++dx)
      if (static_cast<double>(dx * dx + dy * dy) <= tol2) offsets.push_back({dx, dy, dx * dx + dy * dy});

  std::vector<std::tuple<long, std::uint32_t, std::uint32_t>> pairs;
  std::size_t n_pred = 0;
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (!pred.pixels[static_cast<std::size_t>(y * w + x)]) continue;
      ++n_pred;
      for (const auto& o : offsets) {
        const long gx = x + o.dx, gy = y + o.dy;
        if (gx < 0 || gy < 0 || gx >= w || gy >= h) continue;
        if (gt.pixels[static_cast<std::size_t>(gy * w + gx)])
          pairs.emplace_back(o.d2, static_cast<std::uint32_t>(y * w + x), static_cast<std::uint32_t>(gy * w + gx));
      }
    }
  std::sort(pairs.begin(), pairs.end());
  std::vector<std::uint8_t> pred_used(pred.pixels.size(), 0), gt_used(gt.pixels.size(), 0);
  MatchResult r;
  for (const auto& [d2, p, g] : pairs) {
    if (pred_used[p] || gt_used[g]) continue;
    pred_used[p] = gt_used[g] = 1;
    ++r.tp;
  }
  r.fp = n_pred - r.tp;
  r.fn = gt.count_nonzero() - r.tp;
  r.finalize();
  return r;
}

inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 9; ++i) t.push_back(i / 10.0);
  return t;
}

// Pixels with value >= threshold.
template <typename T>
Raster binarize(const BasicTensor<T>& pred, double threshold) {
  Raster r(pred.dim(1), pred.dim(0));
  const std::size_t c = pred.dim(2);
  for (std::size_t i = 0; i < r.pixels.size(); ++i) r.pixels[i] = static_cast<double>(pred[i * c]) >= threshold;
  return r;
}

template <typename T>
std::vector<MatchResult> pr_curve(const BasicTensor<T>& pred, const Raster& gt, const std::vector<double>& thresholds,
                                  double tol_px) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw ConfigError("pr_curve: thresholds must be sorted");
  std::vector<MatchResult> out;
  for (double t : thresholds) {
    MatchResult r = match_pixels(binarize(pred, t), gt, tol_px);
    r.threshold = t;
    out.push_back(r);
  }
  return out;
}

// Area under the precision-recall points. Thresholds that predict nothing
// carry no measured precision and are skipped. The remaining points are
// sorted by recall, joined by trapezoids, and the lowest-recall precision is
// held flat down to recall 0.
inline double ap_from_curve(const std::vector<MatchResult>& curve) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : curve)
    if (r.predicted() > 0) pts.emplace_back(r.recall, r.precision);
  if (pts.empty()) return 0.0;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second > b.second;
  });
  double area = pts.front().first * pts.front().second;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  return area;
}

template <typename T>
double average_precision(const BasicTensor<T>& pred, const Raster& gt, double tol_px) {
  return ap_from_curve(pr_curve(pred, gt, default_thresholds(), tol_px));
}

template <typename T>
double average_precision(const BasicTensor<T>& pred, const Raster& gt) {
  return average_precision(pred, gt, tolerance_px(gt.width, gt.height));
}

// Sums per-threshold counts over many images (dataset-level PR curve).
class PrAccumulator {
 public:
  explicit PrAccumulator(std::vector<double> thresholds = default_thresholds()) : totals_(thresholds.size()) {
    for (std::size_t i = 0; i < thresholds.size(); ++i) totals_[i].threshold = thresholds[i];
  }

  std::vector<double> thresholds() const {
    std::vector<double> t;
    for (const auto& r : totals_) t.push_back(r.threshold);
    return t;
  }

  void add(const std::vector<MatchResult>& image_curve) {
    if (image_curve.size() != totals_.size()) throw ConfigError("PrAccumulator: threshold count mismatch");
    for (std::size_t i = 0; i < totals_.size(); ++i) {
      totals_[i].tp += image_curve[i].tp;
      totals_[i].fp += image_curve[i].fp;
      totals_[i].fn += image_curve[i].fn;
    }
  }

  std::vector<MatchResult> curve() const {
    auto out = totals_;
    for (auto& r : out) r.finalize();
    return out;
  }

  double ap() const { return ap_from_curve(curve()); }

 private:
  std::vector<MatchResult> totals_;
};

// threshold,precision,recall,tp,fp,fn rows with a header.
inline void write_pr_csv(std::ostream& os, const std::vector<MatchResult>& curve) {
  os << "threshold,precision,recall,tp,fp,fn\n";
  os << std::setprecision(6) << std::fixed;
  for (const auto& r : curve)
    os << r.threshold << ',' << r.precision << ',' << r.recall << ',' << r.tp << ',' << r.fp << ',' << r.fn << '\n';
}

}  // namespace htprior
