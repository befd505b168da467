#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <set>

#include <unistd.h>

#include "../oracles/geometry.hpp"
#include "hdet/data.hpp"
#include "hdet/metrics.hpp"

using namespace hdet;
using namespace hdet::data;

namespace {

Sample random_sample(Rng& rng, std::size_t w, std::size_t h, std::size_t boxes) {
  Sample s;
  s.image = Tensor({3, h, w});
  for (double& v : s.image.data()) v = rng.uniform();
  for (std::size_t k = 0; k < boxes; ++k)
    s.labels.push_back({rng.below(2), {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.3),
                                       rng.uniform(0.05, 0.3)}});
  s.source_id = "r";
  return s;
}

bool same_sample(const Sample& a, const Sample& b) {
  return bitwise_equal(a.image, b.image) && a.labels == b.labels && a.source_id == b.source_id;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hdet-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Labels, ParsesOneRecord) {
  auto l = parse_label_file("0 0.5 0.5 0.2 0.3");
  ASSERT_EQ(l.size(), 1u);
  EXPECT_EQ(l[0].class_id, 0u);
  EXPECT_EQ(l[0].bbox, (BBox{0.5, 0.5, 0.2, 0.3}));
  EXPECT_TRUE(parse_label_file("").empty());
  EXPECT_EQ(parse_label_file("\n1 0.1 0.2 0.3 0.4\n\n0 1 1 1 1\n").size(), 2u);
}

TEST(Labels, ErrorsNameTheLine) {
  try {
    parse_label_file("0 1.5 0.5 0.2 0.3");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  for (const char* text : {"0 0.5 0.5 0.2\n", "0 0.5 0.5 x 0.3", "-1 0.5 0.5 0.2 0.3", "0 0.5 0.5 0.2 0.3 9"}) {
    EXPECT_THROW(parse_label_file(text), ParseError) << text;
  }
  try {
    parse_label_file("0 0.5 0.5 0.2 0.3\n0 0.5 0.5 0.2 0.3\n1 0.5 -0.1 0.2 0.3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Labels, RenderRoundTrips) {
  Rng rng(1);
  std::vector<GroundTruth> labels;
  for (int k = 0; k < 50; ++k)
    labels.push_back({rng.below(5), {rng.uniform(), rng.uniform(), rng.uniform(1e-6, 1), rng.uniform(1e-6, 1)}});
  EXPECT_EQ(parse_label_file(render_label_file(labels)), labels);
}

TEST(Ppm, PixelScaling) {
  std::vector<std::uint8_t> white{'P', '6', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 255, 255, 255};
  Tensor t = load_image_ppm(white);
  EXPECT_EQ(t.shape(), (Shape{3, 1, 1}));
  for (double v : t.data()) EXPECT_EQ(v, 1.0);
  std::vector<std::uint8_t> mixed{'P', '6', ' ', '1', ' ', '1', ' ', '2', '5', '5', '\n', 0, 128, 255};
  t = load_image_ppm(mixed);
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[1], 128.0 / 255.0);
  EXPECT_EQ(t[2], 1.0);
}

TEST(Ppm, Errors) {
  std::vector<std::uint8_t> truncated{'P', '6', '\n', '2', ' ', '1', '\n', '2', '5', '5', '\n', 1, 2, 3, 4};
  EXPECT_THROW(load_image_ppm(truncated), FormatError);
  std::vector<std::uint8_t> magic{'P', '3', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 1, 2, 3};
  EXPECT_THROW(load_image_ppm(magic), FormatError);
  std::vector<std::uint8_t> maxval{'P', '6', '\n', '1', ' ', '1', '\n', '1', '5', '\n', 1, 2, 3};
  EXPECT_THROW(load_image_ppm(maxval), FormatError);
}

TEST(Ppm, EncodeDecodeOnEightBitGrid) {
  Rng rng(2);
  Tensor img({3, 5, 7});
  for (double& v : img.data()) v = static_cast<double>(rng.below(256)) / 255.0;
  EXPECT_TRUE(bitwise_equal(load_image_ppm(encode_ppm(img)), img));
}

TEST(Preprocess, ConstantStaysConstant) {
  for (auto [h, w, target] : {std::tuple{5, 9, 4}, {64, 64, 17}, {3, 2, 40}}) {
    Tensor img({3, std::size_t(h), std::size_t(w)}, 0.7);
    Tensor out = preprocess(img, target);
    EXPECT_EQ(out.shape(), (Shape{3, std::size_t(target), std::size_t(target)}));
    for (double v : out.data()) EXPECT_NEAR(v, 0.7, 1e-15);
  }
}

TEST(Preprocess, CheckerAveragesToHalf) {
  Tensor img({3, 2, 2}, std::vector<double>{0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0});
  Tensor out = preprocess(img, 1);
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 0.5);
  EXPECT_THROW(preprocess(img, 0), std::invalid_argument);
}

TEST(Preprocess, StaysInRange) {
  Rng rng(3);
  Sample s = random_sample(rng, 13, 29, 0);
  Tensor out = preprocess(s.image, 23);
  for (double v : out.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Augment, FlipMirrorsBox) {
  Sample s;
  s.image = Tensor({3, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  s.labels = {{0, {0.3, 0.4, 0.2, 0.1}}};
  Sample f = flip_horizontal(s);
  EXPECT_DOUBLE_EQ(f.labels[0].bbox.cx, 0.7);
  EXPECT_EQ(f.labels[0].bbox.cy, 0.4);
  EXPECT_EQ(f.labels[0].bbox.w, 0.2);
  EXPECT_EQ(f.labels[0].bbox.h, 0.1);
  EXPECT_EQ(f.image[0], 2.0);
  EXPECT_EQ(f.image[1], 1.0);
}

// 1 - (1 - x) == x exactly whenever 1 - x is exact, which holds for the
// generator's pixel-derived coordinates; in general it is within one ulp.
TEST(Augment, DoubleFlipIsIdentity) {
  for (const auto& s : generate_synthetic(5, 20, SceneSpec{})) EXPECT_TRUE(same_sample(flip_horizontal(flip_horizontal(s)), s));
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    Sample s = random_sample(rng, 9, 6, 3);
    Sample back = flip_horizontal(flip_horizontal(s));
    EXPECT_TRUE(bitwise_equal(back.image, s.image));
    for (std::size_t i = 0; i < s.labels.size(); ++i)
      EXPECT_LE(std::abs(back.labels[i].bbox.cx - s.labels[i].bbox.cx), std::numeric_limits<double>::epsilon());
  }
}

TEST(Augment, RotationHullMatchesCornerOracle) {
  const BBox centered{0.5, 0.5, 0.3, 0.3};
  const BBox got = rotated_hull(centered, 15.0, 64, 64);
  const BBox want = oracle::rotated_hull(centered, 15.0, 64, 64);
  for (auto [a, b] : {std::pair{got.cx, want.cx}, {got.cy, want.cy}, {got.w, want.w}, {got.h, want.h}})
    EXPECT_NEAR(a, b, 1e-9);
  // rotated square: side * (cos + sin)
  const double rad = 15.0 * std::numbers::pi / 180.0;
  EXPECT_NEAR(got.w, 0.3 * (std::cos(rad) + std::sin(rad)), 1e-12);

  Rng rng(5);
  for (int k = 0; k < 1000; ++k) {
    const BBox b{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    const double deg = rng.uniform(-180, 180);
    const std::size_t w = 8 + rng.below(100), h = 8 + rng.below(100);
    const BBox x = rotated_hull(b, deg, w, h), y = oracle::rotated_hull(b, deg, w, h);
    EXPECT_NEAR(x.cx, y.cx, 1e-9);
    EXPECT_NEAR(x.cy, y.cy, 1e-9);
    EXPECT_NEAR(x.w, y.w, 1e-9);
    EXPECT_NEAR(x.h, y.h, 1e-9);
  }
}

// A bright box rotated in the image should land inside its transformed label.
TEST(Augment, RotationMovesPixelsWithTheBox) {
  Sample s;
  s.image = Tensor({3, 64, 64}, 0.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 8; y < 16; ++y)
      for (std::size_t x = 40; x < 52; ++x) s.image[(c * 64 + y) * 64 + x] = 1.0;
  s.labels = {{0, BBox::from_corners(40 / 64.0, 8 / 64.0, 52 / 64.0, 16 / 64.0)}};
  Sample r = rotate(s, 20.0);
  ASSERT_EQ(r.labels.size(), 1u);
  std::vector<std::uint8_t> mask(64 * 64);
  for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = r.image[p] > 0.5;
  EXPECT_GT(metrics::iou(mask_bbox(mask, 64, 64), r.labels[0].bbox), 0.6);
}

TEST(Augment, ZeroProbabilityIsIdentity) {
  Rng data_rng(6);
  AugmentPolicy p = AugmentPolicy::disabled();
  p.seed = 77;
  for (int k = 0; k < 20; ++k) {
    Sample s = random_sample(data_rng, 16, 16, 2);
    Rng rng(k);
    EXPECT_TRUE(same_sample(augment(s, p, rng), s));
  }
}

TEST(Augment, BoxesStayValid) {
  Rng rng(7);
  AugmentPolicy p;
  p.flip_prob = p.rotate_prob = p.zoom_prob = p.brightness_prob = p.contrast_prob = 1.0;
  p.rotation_max_deg = 45;
  p.zoom_lo = 0.5;
  p.zoom_hi = 2.0;
  for (int k = 0; k < 300; ++k) {
    Sample s = random_sample(rng, 24, 24, 4);
    Sample a = augment(s, p, rng);
    EXPECT_LE(a.labels.size(), s.labels.size());
    for (const auto& g : a.labels) {
      EXPECT_GE(g.bbox.x0(), -1e-12);
      EXPECT_LE(g.bbox.x1(), 1 + 1e-12);
      EXPECT_GE(g.bbox.y0(), -1e-12);
      EXPECT_LE(g.bbox.y1(), 1 + 1e-12);
      EXPECT_GT(g.bbox.w, 0.0);
      EXPECT_GT(g.bbox.h, 0.0);
    }
    for (double v : a.image.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Augment, ZoomDropsMostlyHiddenBoxes) {
  Sample s;
  s.image = Tensor({3, 10, 10}, 0.5);
  s.labels = {{0, {0.95, 0.5, 0.1, 0.1}}, {1, {0.5, 0.5, 0.1, 0.1}}};
  Sample z = zoom(s, 2.0);
  ASSERT_EQ(z.labels.size(), 1u);
  EXPECT_EQ(z.labels[0].class_id, 1u);
  EXPECT_DOUBLE_EQ(z.labels[0].bbox.w, 0.2);
}

TEST(Synthetic, EmptyAndDeterministic) {
  EXPECT_TRUE(generate_synthetic(1, 0, SceneSpec{}).empty());
  auto a = generate_synthetic(9, 25, SceneSpec{}), b = generate_synthetic(9, 25, SceneSpec{});
  ASSERT_EQ(a.size(), 25u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same_sample(a[i], b[i]));
  auto c = generate_synthetic(10, 25, SceneSpec{});
  EXPECT_FALSE(bitwise_equal(a[0].image, c[0].image));
}

TEST(Synthetic, LabelsAreTightMaskBoxes) {
  const SceneSpec spec;
  std::set<std::size_t> classes;
  for (const auto& scene : generate_scenes(11, 60, spec)) {
    const auto& s = scene.sample;
    ASSERT_EQ(scene.shapes.size(), s.labels.size());
    EXPECT_GE(s.labels.size(), spec.min_objects);
    EXPECT_LE(s.labels.size(), spec.max_objects);
    for (std::size_t k = 0; k < s.labels.size(); ++k) {
      const auto mask = rasterize(scene.shapes[k], spec.canvas, spec.canvas);
      EXPECT_EQ(metrics::iou(mask_bbox(mask, spec.canvas, spec.canvas), s.labels[k].bbox), 1.0);
      EXPECT_EQ(s.labels[k].class_id, static_cast<std::size_t>(scene.shapes[k].kind));
      classes.insert(s.labels[k].class_id);
    }
    // one object per cell of the exclusive grid
    std::set<std::size_t> cells;
    for (const auto& g : s.labels)
      cells.insert(responsible_cell(g.bbox.cy, spec.exclusive_grid) * spec.exclusive_grid +
                   responsible_cell(g.bbox.cx, spec.exclusive_grid));
    EXPECT_EQ(cells.size(), s.labels.size());
  }
  EXPECT_EQ(classes.size(), 2u);
}

TEST(Synthetic, MaskBoxOfEmptyMask) {
  std::vector<std::uint8_t> mask(16, 0);
  const BBox b = mask_bbox(mask, 4, 4);
  EXPECT_EQ(b.w, 0.0);
  EXPECT_EQ(b.h, 0.0);
  mask[1 * 4 + 2] = 1;
  EXPECT_EQ(mask_bbox(mask, 4, 4), BBox::from_corners(0.5, 0.25, 0.75, 0.5));
}

TEST(Split, SizesPartitionAndDeterminism) {
  auto samples = generate_synthetic(12, 10, SceneSpec{});
  auto [train, test] = split_dataset(samples, 0.8, 3);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
  std::multiset<std::string> all, parts;
  for (const auto& s : samples) all.insert(s.source_id);
  for (const auto& s : train) parts.insert(s.source_id);
  for (const auto& s : test) parts.insert(s.source_id);
  EXPECT_EQ(all, parts);

  auto [train2, test2] = split_dataset(samples, 0.8, 3);
  for (std::size_t i = 0; i < train.size(); ++i) EXPECT_EQ(train[i].source_id, train2[i].source_id);
  int differing = 0;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    auto [t3, _] = split_dataset(samples, 0.8, seed);
    for (std::size_t i = 0; i < t3.size(); ++i)
      if (t3[i].source_id != train[i].source_id) {
        ++differing;
        break;
      }
  }
  EXPECT_GE(differing, 9);

  auto [tiny_train, tiny_test] = split_dataset(generate_synthetic(1, 2, SceneSpec{}), 0.1, 1);
  EXPECT_EQ(tiny_train.size(), 1u);
  EXPECT_EQ(tiny_test.size(), 1u);
  EXPECT_THROW(split_dataset(generate_synthetic(1, 1, SceneSpec{}), 0.5, 1), std::invalid_argument);
  EXPECT_THROW(split_dataset(samples, 1.0, 1), std::invalid_argument);
}

TEST(Directory, RoundTrip) {
  const auto dir = temp_dir("dir");
  auto samples = generate_synthetic(13, 6, SceneSpec{});
  samples[2].labels.clear();
  save_dataset_dir(dir, samples);
  std::filesystem::remove(dir / "labels" / (samples[2].source_id + ".txt"));  // missing file reads as no objects
  auto back = load_dataset_dir(dir);
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].source_id, samples[i].source_id);
    EXPECT_EQ(back[i].labels, samples[i].labels);
    Tensor quantized = load_image_ppm(encode_ppm(samples[i].image));
    EXPECT_TRUE(bitwise_equal(back[i].image, quantized));
  }
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_dataset_dir(dir), FormatError);
}
