#pragma once

// Detection scoring: IoU, greedy matching, precision/recall/F1, all-point
// interpolated average precision and mAP at IoU 0.5.
//
// Undefined ratios (zero denominators) are std::nullopt, never 0.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hdet/boxes.hpp"

namespace hdet::metrics {

/// AP or mAP requested for a class set without any ground truth.
class UndefinedClassError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b) noexcept;

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

struct MatchResult {
  std::vector<bool> is_tp;  // indexed like the input detections
  std::vector<std::optional<std::size_t>> matched_gt;
  MatchCounts counts;
};

/// Greedy matching of one class's detections against one image's ground truths.
///
/// Detections are visited by descending confidence (ties: input order). Each
/// takes the unmatched ground truth with the highest IoU (ties: lower index)
/// and is a true positive when that IoU reaches `iou_threshold`.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const BBox> ground_truths, double iou_threshold);

struct PrecisionRecall {
  std::optional<double> precision;
  std::optional<double> recall;
};

PrecisionRecall precision_recall(const MatchCounts& counts) noexcept;
std::optional<double> f1(std::optional<double> precision, std::optional<double> recall) noexcept;

/// One pooled detection for AP: its confidence and whether matching marked it TP.
struct ScoredFlag {
  double confidence = 0.0;
  bool tp = false;
};

struct PRCurve {
  std::vector<std::pair<double, double>> points;  // (recall, precision), recall non-decreasing
  std::size_t num_gt = 0;
};

PRCurve pr_curve(std::span<const ScoredFlag> flags, std::size_t num_gt);

/// Area under the monotone precision envelope (all-point interpolation).
double average_precision(std::span<const ScoredFlag> flags, std::size_t num_gt);

struct EvalOptions {
  double iou_threshold = 0.5;
  double operating_threshold = 0.25;
};

struct ClassMetrics {
  std::size_t class_id = 0;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
  std::optional<double> ap;   // nullopt when num_gt == 0
  MatchCounts operating;      // counts at the operating confidence threshold
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;  // in the order of the requested class ids
  double map50 = 0.0;
  MatchCounts operating;  // summed over classes
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

/// mAP over `class_ids`: per class, match every image at the IoU threshold,
/// pool the flags in image order and take AP; average over classes that have
/// ground truth. Precision/recall/F1 are taken at the operating threshold.
/// Boxes of classes not listed in `class_ids` are ignored.
MetricsReport map50(std::span<const std::vector<Detection>> detections,
                    std::span<const std::vector<GroundTruth>> ground_truths,
                    std::span<const std::size_t> class_ids, const EvalOptions& options = {});

}  // namespace hdet::metrics
