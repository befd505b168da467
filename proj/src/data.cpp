#include "hdet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "hdet/io.hpp"

namespace hdet::data {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view token, T& value) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc() && ptr == end;
}

void append_shortest(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

void check_image(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("expected a 3 x H x W image, got " + to_string(image.shape()));
}

// Bilinear sample at continuous pixel-index coordinates (pixel centers at
// integers); neighbours outside the image contribute 0.
double sample_zero(const double* plane, std::size_t w, std::size_t h, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
  auto px = [&](std::ptrdiff_t xx, std::ptrdiff_t yy) {
    if (xx < 0 || yy < 0 || xx >= static_cast<std::ptrdiff_t>(w) || yy >= static_cast<std::ptrdiff_t>(h))
      return 0.0;
    return plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
  };
  return (1 - ax) * (1 - ay) * px(x0, y0) + ax * (1 - ay) * px(x0 + 1, y0) +
         (1 - ax) * ay * px(x0, y0 + 1) + ax * ay * px(x0 + 1, y0 + 1);
}

// Applies a geometric box map, clips to the unit square and drops boxes that
// keep less than kMinVisibleFraction of their area.
template <typename F>
std::vector<GroundTruth> transform_labels(const std::vector<GroundTruth>& labels, F map) {
  std::vector<GroundTruth> out;
  for (const GroundTruth& g : labels) {
    const BBox moved = map(g.bbox);
    const BBox clipped = clip_unit(moved);
    if (!(clipped.w > 0.0 && clipped.h > 0.0)) continue;
    if (clipped.area() < kMinVisibleFraction * moved.area()) continue;
    out.push_back(GroundTruth{g.class_id, clipped});
  }
  return out;
}

// Resamples every channel through an inverse map from output pixel centers to
// source pixel-index coordinates.
template <typename F>
Tensor resample_zero(const Tensor& image, F inverse) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    const double* src = image.data().data() + c * h * w;
    double* dst = out.data().data() + c * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        auto [sx, sy] = inverse(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
        dst[y * w + x] = std::clamp(sample_zero(src, w, h, sx - 0.5, sy - 0.5), 0.0, 1.0);
      }
  }
  return out;
}

}  // namespace

// ---- labels ----------------------------------------------------------------

std::vector<GroundTruth> parse_label_file(std::string_view text) {
  std::vector<GroundTruth> out;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto tokens = split_ws(text.substr(pos, end - pos));
    pos = end + 1;
    if (tokens.empty()) continue;
    if (tokens.size() != 5)
      throw ParseError(line_no, "expected 5 fields \"class_id cx cy w h\", found " + std::to_string(tokens.size()));
    GroundTruth g;
    if (!parse_number(tokens[0], g.class_id))
      throw ParseError(line_no, "class id \"" + std::string(tokens[0]) + "\" is not a non-negative integer");
    double v[4];
    for (std::size_t k = 0; k < 4; ++k) {
      if (!parse_number(tokens[k + 1], v[k]))
        throw ParseError(line_no, "field \"" + std::string(tokens[k + 1]) + "\" is not a number");
      if (!(v[k] >= 0.0 && v[k] <= 1.0))
        throw ParseError(line_no, "coordinate " + std::string(tokens[k + 1]) + " outside [0, 1]");
    }
    if (v[2] == 0.0 || v[3] == 0.0) throw ParseError(line_no, "box has zero width or height");
    g.bbox = BBox{v[0], v[1], v[2], v[3]};
    out.push_back(g);
  }
  return out;
}

std::string render_label_file(std::span<const GroundTruth> labels) {
  std::string out;
  for (const GroundTruth& g : labels) {
    out += std::to_string(g.class_id);
    for (double v : {g.bbox.cx, g.bbox.cy, g.bbox.w, g.bbox.h}) {
      out += ' ';
      append_shortest(out, v);
    }
    out += '\n';
  }
  return out;
}

// ---- images ----------------------------------------------------------------

Tensor load_image_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space_and_comments();
    std::size_t value = 0, digits = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      value = value * 10 + (bytes[pos++] - '0');
      if (++digits > 9) throw FormatError(std::string("PPM ") + what + " too large");
    }
    if (digits == 0) throw FormatError(std::string("PPM header: missing ") + what);
    return value;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (magic must be P6)");
  pos = 2;
  const std::size_t width = read_uint("width");
  const std::size_t height = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (width == 0 || height == 0) throw FormatError("PPM has zero width or height");
  if (maxval != 255) throw FormatError("PPM maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PPM header not terminated by whitespace");
  ++pos;
  const std::size_t payload = 3 * width * height;
  if (bytes.size() - pos < payload)
    throw FormatError("PPM payload truncated: need " + std::to_string(payload) + " bytes, have " +
                      std::to_string(bytes.size() - pos));

  Tensor image({3, height, width});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        image[(c * height + y) * width + x] = static_cast<double>(bytes[pos + (y * width + x) * 3 + c]) / 255.0;
  return image;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  check_image(image);
  const std::size_t h = image.dim(1), w = image.dim(2);
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 3 * w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image[(c * h + y) * w + x], 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
  return out;
}

Tensor preprocess(const Tensor& image, std::size_t target) {
  check_image(image);
  if (target == 0) throw std::invalid_argument("preprocess target size must be positive");
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h == target && w == target) return image;
  Tensor out({3, target, target});
  const double sy = static_cast<double>(h) / static_cast<double>(target);
  const double sx = static_cast<double>(w) / static_cast<double>(target);
  for (std::size_t oy = 0; oy < target; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ay = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < target; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double ax = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double* p = image.data().data() + c * h * w;
        const double v = (1 - ay) * ((1 - ax) * p[y0 * w + x0] + ax * p[y0 * w + x1]) +
                         ay * ((1 - ax) * p[y1 * w + x0] + ax * p[y1 * w + x1]);
        out[(c * target + oy) * target + ox] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

Sample preprocess(const Sample& sample, std::size_t target) {
  return Sample{preprocess(sample.image, target), sample.labels, sample.source_id};
}

// ---- augmentation ------------------------------------------------------------

AugmentPolicy AugmentPolicy::disabled() {
  AugmentPolicy p;
  p.flip_prob = p.rotate_prob = p.zoom_prob = p.brightness_prob = p.contrast_prob = 0.0;
  return p;
}

void AugmentPolicy::validate() const {
  for (double p : {flip_prob, rotate_prob, zoom_prob, brightness_prob, contrast_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("augmentation probabilities must lie in [0, 1]");
  if (!(zoom_lo > 0.0 && zoom_lo <= zoom_hi)) throw std::invalid_argument("zoom range needs 0 < lo <= hi");
  if (!(contrast_lo > 0.0 && contrast_lo <= contrast_hi))
    throw std::invalid_argument("contrast range needs 0 < lo <= hi");
  if (!(rotation_max_deg >= 0.0) || !(brightness_delta >= 0.0))
    throw std::invalid_argument("rotation and brightness magnitudes must be non-negative");
}

Sample flip_horizontal(const Sample& sample) {
  check_image(sample.image);
  const std::size_t h = sample.image.dim(1), w = sample.image.dim(2);
  Sample out = sample;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.image[(c * h + y) * w + x] = sample.image[(c * h + y) * w + (w - 1 - x)];
  for (GroundTruth& g : out.labels) g.bbox.cx = 1.0 - g.bbox.cx;
  return out;
}

BBox rotated_hull(const BBox& box, double degrees, std::size_t width, std::size_t height) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  const double mx = 0.5 * W, my = 0.5 * H;
  double lo_x = INFINITY, lo_y = INFINITY, hi_x = -INFINITY, hi_y = -INFINITY;
  for (double nx : {box.x0(), box.x1()})
    for (double ny : {box.y0(), box.y1()}) {
      const double dx = nx * W - mx, dy = ny * H - my;
      const double rx = mx + dx * c + dy * s;
      const double ry = my - dx * s + dy * c;
      lo_x = std::min(lo_x, rx);
      hi_x = std::max(hi_x, rx);
      lo_y = std::min(lo_y, ry);
      hi_y = std::max(hi_y, ry);
    }
  return BBox::from_corners(lo_x / W, lo_y / H, hi_x / W, hi_y / H);
}

Sample rotate(const Sample& sample, double degrees) {
  check_image(sample.image);
  const std::size_t h = sample.image.dim(1), w = sample.image.dim(2);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double mx = 0.5 * static_cast<double>(w), my = 0.5 * static_cast<double>(h);
  Sample out;
  out.source_id = sample.source_id;
  out.image = resample_zero(sample.image, [&](double qx, double qy) {
    const double dx = qx - mx, dy = qy - my;
    return std::pair{mx + dx * c - dy * s, my + dx * s + dy * c};
  });
  out.labels = transform_labels(sample.labels, [&](const BBox& b) { return rotated_hull(b, degrees, w, h); });
  return out;
}

Sample zoom(const Sample& sample, double factor) {
  check_image(sample.image);
  if (!(factor > 0.0)) throw std::invalid_argument("zoom factor must be positive");
  const std::size_t h = sample.image.dim(1), w = sample.image.dim(2);
  const double mx = 0.5 * static_cast<double>(w), my = 0.5 * static_cast<double>(h);
  Sample out;
  out.source_id = sample.source_id;
  out.image = resample_zero(sample.image, [&](double qx, double qy) {
    return std::pair{mx + (qx - mx) / factor, my + (qy - my) / factor};
  });
  out.labels = transform_labels(sample.labels, [&](const BBox& b) {
    return BBox{0.5 + (b.cx - 0.5) * factor, 0.5 + (b.cy - 0.5) * factor, b.w * factor, b.h * factor};
  });
  return out;
}

Sample adjust_brightness(const Sample& sample, double delta) {
  Sample out = sample;
  for (double& v : out.image.data()) v = std::clamp(v + delta, 0.0, 1.0);
  return out;
}

Sample adjust_contrast(const Sample& sample, double factor) {
  Sample out = sample;
  for (double& v : out.image.data()) v = std::clamp((v - 0.5) * factor + 0.5, 0.0, 1.0);
  return out;
}

Sample augment(const Sample& sample, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  Sample out = sample;
  if (rng.bernoulli(policy.flip_prob)) out = flip_horizontal(out);
  if (rng.bernoulli(policy.rotate_prob))
    out = rotate(out, rng.uniform(-policy.rotation_max_deg, policy.rotation_max_deg));
  if (rng.bernoulli(policy.zoom_prob)) out = zoom(out, rng.uniform(policy.zoom_lo, policy.zoom_hi));
  if (rng.bernoulli(policy.brightness_prob))
    out = adjust_brightness(out, rng.uniform(-policy.brightness_delta, policy.brightness_delta));
  if (rng.bernoulli(policy.contrast_prob))
    out = adjust_contrast(out, rng.uniform(policy.contrast_lo, policy.contrast_hi));
  return out;
}

// ---- synthetic scenes ----------------------------------------------------------

void SceneSpec::validate() const {
  if (canvas == 0) throw std::invalid_argument("scene canvas must be positive");
  if (min_objects > max_objects) throw std::invalid_argument("scene min_objects exceeds max_objects");
  if (!(min_radius > 1.0 && min_radius <= max_radius))
    throw std::invalid_argument("scene radius range needs 1 < min <= max");
  if (2.0 * max_radius + 4.0 > static_cast<double>(canvas))
    throw std::invalid_argument("scene objects do not fit on the canvas");
  if (!(noise >= 0.0 && noise <= 0.5)) throw std::invalid_argument("scene noise must lie in [0, 0.5]");
}

std::vector<std::uint8_t> rasterize(const ShapeInstance& shape, std::size_t width, std::size_t height) {
  std::vector<std::uint8_t> mask(width * height, 0);
  std::array<double, 3> vx{}, vy{};
  if (shape.kind == ShapeKind::triangle) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double a = shape.angle + 2.0 * std::numbers::pi * static_cast<double>(k) / 3.0;
      vx[k] = shape.cx + shape.radius * std::cos(a);
      vy[k] = shape.cy - shape.radius * std::sin(a);
    }
  }
  auto edge = [&](std::size_t a, std::size_t b, double px, double py) {
    return (vx[b] - vx[a]) * (py - vy[a]) - (vy[b] - vy[a]) * (px - vx[a]);
  };
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      bool inside;
      if (shape.kind == ShapeKind::circle) {
        const double dx = px - shape.cx, dy = py - shape.cy;
        inside = dx * dx + dy * dy <= shape.radius * shape.radius;
      } else {
        const double e0 = edge(0, 1, px, py), e1 = edge(1, 2, px, py), e2 = edge(2, 0, px, py);
        inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
      mask[y * width + x] = inside ? 1 : 0;
    }
  return mask;
}

BBox mask_bbox(std::span<const std::uint8_t> mask, std::size_t width, std::size_t height) {
  std::size_t x0 = width, y0 = height, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      if (!mask[y * width + x]) continue;
      any = true;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x + 1);
      y1 = std::max(y1, y + 1);
    }
  if (!any) return BBox{};
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  return BBox::from_corners(static_cast<double>(x0) / W, static_cast<double>(y0) / H,
                            static_cast<double>(x1) / W, static_cast<double>(y1) / H);
}

namespace {

SyntheticScene render_scene(std::uint64_t seed, std::size_t index, const SceneSpec& spec) {
  Rng rng(derive_seed(seed, index));
  const std::size_t W = spec.canvas, H = spec.canvas;
  SyntheticScene scene;
  scene.sample.image = Tensor({3, H, W});
  char id[32];
  std::snprintf(id, sizeof id, "syn-%06zu", index);
  scene.sample.source_id = id;

  for (std::size_t c = 0; c < 3; ++c) {
    const double base = rng.uniform(0.05, 0.45);
    for (std::size_t p = 0; p < H * W; ++p)
      scene.sample.image[c * H * W + p] = std::clamp(base + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);
  }

  const std::size_t count = spec.min_objects + rng.below(spec.max_objects - spec.min_objects + 1);
  std::vector<std::size_t> used_cells;
  for (std::size_t k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      ShapeInstance s;
      const bool tri = rng.bernoulli(0.5);
      s.kind = (spec.triangles && tri) ? ShapeKind::triangle : ShapeKind::circle;
      s.radius = rng.uniform(spec.min_radius, spec.max_radius);
      s.cx = rng.uniform(s.radius + 1.0, static_cast<double>(W) - s.radius - 1.0);
      s.cy = rng.uniform(s.radius + 1.0, static_cast<double>(H) - s.radius - 1.0);
      s.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (double& v : s.color) v = rng.uniform(0.55, 1.0);

      bool clash = false;
      for (const ShapeInstance& o : scene.shapes) {
        const double d = std::hypot(s.cx - o.cx, s.cy - o.cy);
        clash = clash || d < s.radius + o.radius + 2.0;
      }
      if (clash) continue;
      const auto mask = rasterize(s, W, H);
      const BBox box = mask_bbox(mask, W, H);
      if (!(box.w > 0.0 && box.h > 0.0)) continue;
      if (spec.exclusive_grid > 0) {
        const std::size_t cell = responsible_cell(box.cy, spec.exclusive_grid) * spec.exclusive_grid +
                                 responsible_cell(box.cx, spec.exclusive_grid);
        if (std::find(used_cells.begin(), used_cells.end(), cell) != used_cells.end()) continue;
        used_cells.push_back(cell);
      }
      for (std::size_t p = 0; p < W * H; ++p) {
        if (!mask[p]) continue;
        for (std::size_t c = 0; c < 3; ++c)
          scene.sample.image[c * H * W + p] =
              std::clamp(s.color[c] + rng.uniform(-spec.noise, spec.noise) * 0.5, 0.0, 1.0);
      }
      scene.shapes.push_back(s);
      scene.sample.labels.push_back(GroundTruth{static_cast<std::size_t>(s.kind), box});
      break;
    }
  }
  return scene;
}

}  // namespace

std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, std::size_t n, const SceneSpec& spec) {
  spec.validate();
  std::vector<SyntheticScene> scenes(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < count; ++i)
    scenes[i] = render_scene(seed, static_cast<std::size_t>(i), spec);
  return scenes;
}

std::vector<Sample> generate_synthetic(std::uint64_t seed, std::size_t n, const SceneSpec& spec) {
  std::vector<Sample> out;
  out.reserve(n);
  for (SyntheticScene& s : generate_scenes(seed, n, spec)) out.push_back(std::move(s.sample));
  return out;
}

// ---- splitting and directories ---------------------------------------------------

std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(std::vector<Sample> samples,
                                                                  double train_fraction,
                                                                  std::uint64_t seed) {
  if (samples.size() < 2) throw std::invalid_argument("split_dataset needs at least 2 samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  Rng rng(seed);
  for (std::size_t i = samples.size() - 1; i > 0; --i) std::swap(samples[i], samples[rng.below(i + 1)]);
  const auto n = samples.size();
  auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  cut = std::clamp<std::size_t>(cut, 1, n - 1);
  std::vector<Sample> test(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(cut)),
                           std::make_move_iterator(samples.end()));
  samples.resize(cut);
  return {std::move(samples), std::move(test)};
}

std::vector<Sample> load_dataset_dir(const std::filesystem::path& root) {
  const auto images = root / "images";
  if (!std::filesystem::is_directory(images)) throw FormatError("dataset has no images/ directory: " + root.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(images))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<Sample> out;
  for (const auto& file : files) {
    Sample s;
    s.source_id = file.stem().string();
    s.image = load_image_ppm(io::read_bytes(file));
    const auto label_path = root / "labels" / (s.source_id + ".txt");
    if (std::filesystem::exists(label_path)) {
      try {
        s.labels = parse_label_file(io::read_text(label_path));
      } catch (const ParseError& e) {
        throw ParseError(e.line(), label_path.string() + ": " + e.what());
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset_dir(const std::filesystem::path& root, std::span<const Sample> samples) {
  for (const Sample& s : samples) {
    io::write_atomic(root / "images" / (s.source_id + ".ppm"), encode_ppm(s.image));
    io::write_atomic(root / "labels" / (s.source_id + ".txt"), render_label_file(s.labels));
  }
}

}  // namespace hdet::data
