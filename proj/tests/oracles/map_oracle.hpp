#pragma once

// Brute-force mAP@50 reference, written without the library's metric helpers.
//
// Per class: every image's detections are ranked by confidence (ties keep
// input order) and each takes the unclaimed ground truth of largest IoU
// (lowest index on ties); a claim needs IoU >= threshold. Ranking all claims
// of the class across images by confidence (ties keep image order), AP is the
// sum over true-positive ranks of the best precision at that rank or later,
// divided by the number of ground truths.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <vector>

#include "hdet/boxes.hpp"

namespace oracle {

inline double corner_iou(const hdet::BBox& a, const hdet::BBox& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = ix * iy;
  const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct Ranked {
  double confidence;
  bool tp;
};

inline std::optional<double> class_ap(const std::vector<std::vector<hdet::Detection>>& dets,
                                      const std::vector<std::vector<hdet::GroundTruth>>& gts, std::size_t cls,
                                      double thr, std::size_t* tp_at = nullptr, double operating = 0.0,
                                      std::size_t* fp_at = nullptr, std::size_t* gt_total = nullptr) {
  std::vector<Ranked> all;
  std::size_t total = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    std::vector<hdet::BBox> truth;
    for (const auto& g : gts[i])
      if (g.class_id == cls) truth.push_back(g.bbox);
    total += truth.size();
    std::vector<hdet::Detection> mine;
    for (const auto& d : dets[i])
      if (d.class_id == cls) mine.push_back(d);
    // Insertion sort keeps equal confidences in input order.
    for (std::size_t a = 1; a < mine.size(); ++a)
      for (std::size_t b = a; b > 0 && mine[b].confidence > mine[b - 1].confidence; --b) std::swap(mine[b], mine[b - 1]);
    std::vector<char> claimed(truth.size(), 0);
    for (const auto& d : mine) {
      int best = -1;
      double best_v = -1;
      for (std::size_t g = 0; g < truth.size(); ++g) {
        if (claimed[g]) continue;
        const double v = corner_iou(d.bbox, truth[g]);
        if (v > best_v) best_v = v, best = static_cast<int>(g);
      }
      const bool hit = best >= 0 && best_v >= thr;
      if (hit) claimed[best] = 1;
      all.push_back({d.confidence, hit});
    }
  }
  if (tp_at || fp_at) {
    for (const auto& r : all) {
      if (r.confidence < operating) continue;
      if (r.tp && tp_at) ++*tp_at;
      if (!r.tp && fp_at) ++*fp_at;
    }
  }
  if (gt_total) *gt_total += total;
  if (total == 0) return std::nullopt;
  std::stable_sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });
  std::vector<double> precision(all.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    tp += all[k].tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (!all[k].tp) continue;
    double best = 0.0;
    for (std::size_t m = k; m < all.size(); ++m) best = std::max(best, precision[m]);
    ap += best;
  }
  return ap / static_cast<double>(total);
}

/// Mean AP over the listed classes that have ground truth; nullopt if none do.
inline std::optional<double> map50(const std::vector<std::vector<hdet::Detection>>& dets,
                                   const std::vector<std::vector<hdet::GroundTruth>>& gts,
                                   const std::vector<std::size_t>& classes, double thr = 0.5) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t c : classes)
    if (auto ap = class_ap(dets, gts, c, thr)) sum += *ap, ++n;
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace oracle
