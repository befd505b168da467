#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hdet/tensor.hpp"

using hdet::Shape;
using hdet::ShapeError;
using hdet::Tensor;

TEST(Tensor, DefaultIsZeroScalar) {
  Tensor t;
  EXPECT_EQ(t.rank(), 0u);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.item(), 0.0);
}

TEST(Tensor, FillAndShape) {
  Tensor t({2, 3, 4}, 1.5);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.dim(1), 3u);
  for (double v : t.data()) EXPECT_EQ(v, 1.5);
  EXPECT_THROW(t.dim(3), ShapeError);
  EXPECT_EQ(hdet::to_string(t.shape()), "[2, 3, 4]");
}

TEST(Tensor, DataSizeMustMatchShape) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_NO_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3, 4}));
}

TEST(Tensor, ItemNeedsOneElement) {
  EXPECT_THROW(Tensor({2}).item(), ShapeError);
  EXPECT_EQ(Tensor::scalar(4.25).item(), 4.25);
  EXPECT_EQ(Tensor({1, 1}, 3.0).item(), 3.0);
}

TEST(Tensor, Rank4Indexing) {
  Tensor t({2, 3, 4, 5});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  EXPECT_EQ(t.at(1, 2, 3, 4), 119.0);
  EXPECT_EQ(t.at(0, 1, 0, 2), 22.0);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.storage(), t.storage());
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, Finiteness) {
  Tensor t({3}, 1.0);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  t[1] = -std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, BitwiseEqualSeparatesSignedZero) {
  Tensor a({1}, 0.0), b({1}, -0.0);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(hdet::bitwise_equal(a, b));
  Tensor n1({1}, std::numeric_limits<double>::quiet_NaN());
  Tensor n2 = n1;
  EXPECT_TRUE(hdet::bitwise_equal(n1, n2));
  EXPECT_FALSE(hdet::bitwise_equal(Tensor({2}), Tensor({1, 2})));
}
