#pragma once

// Dataset ingestion, preprocessing, augmentation and the synthetic scene
// generator. Images are 3 x H x W tensors in R, G, B order with values in
// [0, 1]; boxes are normalized.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hdet/boxes.hpp"
#include "hdet/rng.hpp"
#include "hdet/tensor.hpp"

namespace hdet::data {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  Tensor image;  // 3 x H x W
  std::vector<GroundTruth> labels;
  std::string source_id;
};

// ---- labels ----------------------------------------------------------------

/// One "class_id cx cy w h" record per non-empty line.
std::vector<GroundTruth> parse_label_file(std::string_view text);
/// Inverse of parse_label_file; floats use the shortest round-trip form.
std::string render_label_file(std::span<const GroundTruth> labels);

// ---- images ----------------------------------------------------------------

/// Binary PPM (P6, maxval 255) to a 3 x H x W tensor scaled by 1/255.
Tensor load_image_ppm(std::span<const std::uint8_t> bytes);
/// 3 x H x W tensor to binary PPM; values are clamped and rounded to 8 bits.
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

/// Bilinear (half-pixel centers, edge clamp) resample to target x target.
Tensor preprocess(const Tensor& image, std::size_t target);
/// Resizes the sample image; normalized labels are unchanged.
Sample preprocess(const Sample& sample, std::size_t target);

// ---- augmentation ------------------------------------------------------------

struct AugmentPolicy {
  double flip_prob = 0.5;
  double rotate_prob = 0.5;
  double zoom_prob = 0.8;
  double brightness_prob = 0.5;
  double contrast_prob = 0.5;
  double rotation_max_deg = 15.0;
  double zoom_lo = 0.8;
  double zoom_hi = 1.2;
  double brightness_delta = 0.2;
  double contrast_lo = 0.8;
  double contrast_hi = 1.2;
  std::uint64_t seed = 0;

  /// Every probability 0.
  static AugmentPolicy disabled();
  void validate() const;
  friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;
};

/// Boxes whose visible (clipped) area falls below this fraction of their
/// transformed area are dropped.
inline constexpr double kMinVisibleFraction = 0.25;

Sample flip_horizontal(const Sample& sample);
/// Rotation about the image center, counter-clockwise on screen for positive
/// angles; uncovered pixels are 0. Boxes become the hull of their rotated corners.
Sample rotate(const Sample& sample, double degrees);
/// Scales about the center: crop for factor > 1, zero border for factor < 1.
Sample zoom(const Sample& sample, double factor);
Sample adjust_brightness(const Sample& sample, double delta);
Sample adjust_contrast(const Sample& sample, double factor);

/// Axis-aligned hull of `box` rotated like rotate() on a width x height image,
/// before clipping.
BBox rotated_hull(const BBox& box, double degrees, std::size_t width, std::size_t height);

/// Flip, rotate, zoom, brightness, contrast, each applied independently with
/// its probability. Draws come from `rng` in that order.
Sample augment(const Sample& sample, const AugmentPolicy& policy, Rng& rng);

// ---- synthetic scenes ----------------------------------------------------------

enum class ShapeKind { circle = 0, triangle = 1 };

struct SceneSpec {
  std::size_t canvas = 64;
  std::size_t min_objects = 1;
  std::size_t max_objects = 2;
  double min_radius = 7.0;  // pixels
  double max_radius = 13.0;
  double noise = 0.08;      // background noise amplitude
  bool triangles = true;    // false: circles only
  /// When > 0, no two objects have their box centers in the same cell of a
  /// grid of this size.
  std::size_t exclusive_grid = 4;

  void validate() const;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// A rendered object: center and circumradius in pixels, rotation in radians.
struct ShapeInstance {
  ShapeKind kind = ShapeKind::circle;
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double angle = 0.0;
  std::array<double, 3> color{};
};

/// Pixel mask (row-major, width * height) of pixels whose centers lie inside the shape.
std::vector<std::uint8_t> rasterize(const ShapeInstance& shape, std::size_t width, std::size_t height);
/// Tight normalized box of a mask's set pixels; w = h = 0 for an empty mask.
BBox mask_bbox(std::span<const std::uint8_t> mask, std::size_t width, std::size_t height);

struct SyntheticScene {
  Sample sample;
  std::vector<ShapeInstance> shapes;  // parallel to sample.labels
};

std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, std::size_t n, const SceneSpec& spec);
/// Circles are class 0, triangles class 1.
std::vector<Sample> generate_synthetic(std::uint64_t seed, std::size_t n, const SceneSpec& spec);

// ---- splitting and directories ---------------------------------------------------

/// Seeded Fisher-Yates shuffle, then floor(fraction * n) samples (clamped to
/// [1, n-1]) go to the training side.
std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(std::vector<Sample> samples,
                                                                  double train_fraction,
                                                                  std::uint64_t seed);

/// Reads `images/*.ppm` with matching `labels/*.txt`, sorted by base name.
std::vector<Sample> load_dataset_dir(const std::filesystem::path& root);
/// Writes `images/<source_id>.ppm` and `labels/<source_id>.txt`.
void save_dataset_dir(const std::filesystem::path& root, std::span<const Sample> samples);

}  // namespace hdet::data
