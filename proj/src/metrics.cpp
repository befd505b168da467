#include "hdet/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace hdet::metrics {

double iou(const BBox& a, const BBox& b) noexcept {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

// Indices sorted by descending confidence, stable in input order.
template <typename T, typename Conf>
std::vector<std::size_t> by_confidence(std::span<const T> items, Conf conf) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return conf(items[a]) > conf(items[b]);
  });
  return order;
}

}  // namespace

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const BBox> ground_truths, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw std::invalid_argument("iou_threshold must lie in (0, 1]");
  MatchResult result;
  result.is_tp.assign(detections.size(), false);
  result.matched_gt.assign(detections.size(), std::nullopt);
  std::vector<bool> taken(ground_truths.size(), false);

  for (std::size_t d : by_confidence(detections, [](const Detection& x) { return x.confidence; })) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(detections[d].bbox, ground_truths[g]);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best && best_iou >= iou_threshold) {
      taken[*best] = true;
      result.is_tp[d] = true;
      result.matched_gt[d] = best;
      ++result.counts.tp;
    } else {
      ++result.counts.fp;
    }
  }
  result.counts.fn = ground_truths.size() - result.counts.tp;
  return result;
}

PrecisionRecall precision_recall(const MatchCounts& c) noexcept {
  PrecisionRecall pr;
  if (c.tp + c.fp > 0) pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return pr;
}

std::optional<double> f1(std::optional<double> precision, std::optional<double> recall) noexcept {
  if (!precision || !recall) return std::nullopt;
  const double p = *precision, r = *recall;
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

PRCurve pr_curve(std::span<const ScoredFlag> flags, std::size_t num_gt) {
  if (num_gt == 0) throw UndefinedClassError("precision-recall curve needs at least one ground truth");
  PRCurve curve;
  curve.num_gt = num_gt;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i : by_confidence(flags, [](const ScoredFlag& f) { return f.confidence; })) {
    ++seen;
    if (flags[i].tp) ++tp;
    curve.points.emplace_back(static_cast<double>(tp) / static_cast<double>(num_gt),
                              static_cast<double>(tp) / static_cast<double>(seen));
  }
  return curve;
}

double average_precision(std::span<const ScoredFlag> flags, std::size_t num_gt) {
  if (num_gt == 0) throw UndefinedClassError("average precision needs at least one ground truth");
  // Recall steps by exactly 1/num_gt at each true positive, so the area under
  // the envelope is the envelope summed over those ranks, divided once. The
  // precisions come straight from the integer counts in extended precision,
  // so hand fractions like 5/6 round correctly.
  std::vector<long double> precision;
  std::vector<bool> is_tp;
  std::size_t tp = 0;
  for (std::size_t i : by_confidence(flags, [](const ScoredFlag& f) { return f.confidence; })) {
    if (flags[i].tp) ++tp;
    is_tp.push_back(flags[i].tp);
    precision.push_back(static_cast<long double>(tp) / static_cast<long double>(precision.size() + 1));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  long double sum = 0.0L;
  for (std::size_t i = 0; i < precision.size(); ++i)
    if (is_tp[i]) sum += precision[i];
  return std::clamp(static_cast<double>(sum / static_cast<long double>(num_gt)), 0.0, 1.0);
}

MetricsReport map50(std::span<const std::vector<Detection>> detections,
                    std::span<const std::vector<GroundTruth>> ground_truths,
                    std::span<const std::size_t> class_ids, const EvalOptions& options) {
  if (detections.size() != ground_truths.size())
    throw std::invalid_argument("map50: " + std::to_string(detections.size()) +
                                " detection lists for " + std::to_string(ground_truths.size()) +
                                " images");
  const std::size_t images = detections.size();
  MetricsReport report;
  double ap_sum = 0.0;
  std::size_t ap_classes = 0;

  for (std::size_t class_id : class_ids) {
    // Matching is independent per image; flags are pooled in image order.
    std::vector<std::vector<ScoredFlag>> per_image(images);
    std::vector<std::size_t> gt_counts(images, 0);
    const auto n = static_cast<std::ptrdiff_t>(images);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      std::vector<Detection> dets;
      for (const Detection& d : detections[i])
        if (d.class_id == class_id) dets.push_back(d);
      std::vector<BBox> gts;
      for (const GroundTruth& g : ground_truths[i])
        if (g.class_id == class_id) gts.push_back(g.bbox);
      const MatchResult m = match_detections(dets, gts, options.iou_threshold);
      gt_counts[i] = gts.size();
      per_image[i].reserve(dets.size());
      for (std::size_t k = 0; k < dets.size(); ++k)
        per_image[i].push_back(ScoredFlag{dets[k].confidence, static_cast<bool>(m.is_tp[k])});
    }

    ClassMetrics cm;
    cm.class_id = class_id;
    std::vector<ScoredFlag> pooled;
    for (std::size_t i = 0; i < images; ++i) {
      cm.num_gt += gt_counts[i];
      pooled.insert(pooled.end(), per_image[i].begin(), per_image[i].end());
    }
    cm.num_detections = pooled.size();
    for (const ScoredFlag& f : pooled) {
      if (f.confidence < options.operating_threshold) continue;
      if (f.tp)
        ++cm.operating.tp;
      else
        ++cm.operating.fp;
    }
    cm.operating.fn = cm.num_gt - cm.operating.tp;
    if (cm.num_gt > 0) {
      cm.ap = average_precision(pooled, cm.num_gt);
      ap_sum += *cm.ap;
      ++ap_classes;
    }
    report.operating += cm.operating;
    report.per_class.push_back(cm);
  }

  if (ap_classes == 0) throw UndefinedClassError("map50: no evaluated class has any ground truth");
  report.map50 = ap_sum / static_cast<double>(ap_classes);
  const PrecisionRecall pr = precision_recall(report.operating);
  report.precision = pr.precision;
  report.recall = pr.recall;
  report.f1 = f1(pr.precision, pr.recall);
  return report;
}

}  // namespace hdet::metrics
