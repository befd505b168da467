#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace hdet {

/// Axis-aligned box in normalized image coordinates (center + size).
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x0() const noexcept { return cx - 0.5 * w; }
  double y0() const noexcept { return cy - 0.5 * h; }
  double x1() const noexcept { return cx + 0.5 * w; }
  double y1() const noexcept { return cy + 0.5 * h; }
  double area() const noexcept { return std::max(w, 0.0) * std::max(h, 0.0); }

  static BBox from_corners(double x0, double y0, double x1, double y1) noexcept {
    return BBox{0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Clips corners to the unit square; the result may have zero width or height.
inline BBox clip_unit(const BBox& b) noexcept {
  const double x0 = std::clamp(b.x0(), 0.0, 1.0), x1 = std::clamp(b.x1(), 0.0, 1.0);
  const double y0 = std::clamp(b.y0(), 0.0, 1.0), y1 = std::clamp(b.y1(), 0.0, 1.0);
  return BBox::from_corners(x0, y0, x1, y1);
}

/// Grid cell index owning normalized coordinate `v`: ceil(v*S) - 1 clamped to
/// [0, S-1], so a point on a cell border belongs to the lower cell.
inline std::size_t responsible_cell(double v, std::size_t grid_size) noexcept {
  const double scaled = std::ceil(v * static_cast<double>(grid_size)) - 1.0;
  if (!(scaled > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(scaled), grid_size - 1);
}

struct GroundTruth {
  std::size_t class_id = 0;
  BBox bbox;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct Detection {
  std::size_t class_id = 0;
  BBox bbox;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

}  // namespace hdet
