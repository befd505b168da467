#include <gtest/gtest.h>

#include <cmath>

#include "hdet/autodiff.hpp"
#include "hdet/gradcheck.hpp"
#include "hdet/rng.hpp"

using namespace hdet;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Var x = tape.parameter("x", Tensor({2, 3}, 0.7));
  auto grads = tape.backward(sum(x));
  ASSERT_EQ(grads.count("x"), 1u);
  for (double g : grads["x"].data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Rng rng(11);
  Tape tape;
  Tensor xv = random_tensor({4, 5}, rng);
  Var x = tape.parameter("x", xv);
  auto grads = backward(tape, sum(square(x)));
  for (std::size_t i = 0; i < xv.size(); ++i) EXPECT_EQ(grads["x"][i], 2.0 * xv[i]);
}

TEST(Backward, SharedInputAccumulates) {
  Tape tape;
  Var x = tape.variable(Tensor({3}, 2.0));
  Var y = sum(add(mul(x, x), scale(x, 3.0)));
  tape.backward(y);
  const Tensor g = tape.grad(x);
  for (double v : g.data()) EXPECT_EQ(v, 2 * 2.0 + 3.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  Var x = tape.variable(Tensor({3}, 1.0));
  EXPECT_THROW(tape.backward(square(x)), ShapeError);
}

TEST(Backward, DetachedLossThrows) {
  Tape tape;
  Var c = tape.constant(Tensor({3}, 1.0));
  EXPECT_THROW(tape.backward(sum(c)), DetachedError);

  Tape other;
  Var foreign = sum(other.variable(Tensor({2}, 1.0)));
  EXPECT_THROW(tape.backward(foreign), DetachedError);
  EXPECT_THROW(tape.backward(Var{}), DetachedError);
}

TEST(Backward, UnreachedNodeHasZeroGrad) {
  Tape tape;
  Var a = tape.variable(Tensor({2}, 1.0));
  Var b = tape.variable(Tensor({2}, 5.0));
  tape.backward(sum(a));
  const Tensor g = tape.grad(b);
  ASSERT_EQ(g.shape(), (Shape{2}));
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MixedTapesRejected) {
  Tape t1, t2;
  Var a = t1.variable(Tensor({2}, 1.0));
  Var b = t2.variable(Tensor({2}, 1.0));
  EXPECT_THROW(add(a, b), DetachedError);
}

TEST(LeakyRelu, ValuesAndSlopes) {
  Tape tape;
  Var x = tape.variable(Tensor({2}, std::vector<double>{3.0, -2.0}));
  Var y = leaky_relu(x, 0.1);
  EXPECT_EQ(y.value()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.value()[1], -0.2);
  tape.backward(sum(y));
  EXPECT_EQ(tape.grad(x)[0], 1.0);
  EXPECT_DOUBLE_EQ(tape.grad(x)[1], 0.1);
}

TEST(Sigmoid, KnownValues) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(50.0), 1.0, 1e-15);
  EXPECT_NEAR(sigmoid(-50.0), 0.0, 1e-15);
  Tape tape;
  Var x = tape.variable(Tensor({1}, 0.0));
  tape.backward(sum(sigmoid(x)));
  EXPECT_EQ(tape.grad(x)[0], 0.25);
}

TEST(Sigmoid, StableAtExtremes) {
  for (double x : {-700.0, -745.0, 700.0, 800.0}) {
    const double s = sigmoid(x);
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  Tape tape;
  Var x = tape.variable(Tensor({2}, std::vector<double>{-700.0, 700.0}));
  tape.backward(sum(sigmoid(x)));
  EXPECT_TRUE(tape.grad(x).all_finite());
}

TEST(BatchNormOp, TrainUpdatesRunningStatsInferDoesNot) {
  Tape tape;
  Var x = tape.variable(Tensor({2, 1, 1, 1}, std::vector<double>{1.0, 3.0}));
  Var g = tape.variable(Tensor({1}, 1.0)), b = tape.variable(Tensor({1}, 0.0));
  BatchNormState st = BatchNormState::fresh(1);
  batchnorm(x, g, b, st, Mode::train);
  EXPECT_DOUBLE_EQ(st.running_mean[0], 0.1 * 2.0);
  // population variance of {1, 3} is 1
  EXPECT_DOUBLE_EQ(st.running_var[0], 0.9 * 1.0 + 0.1 * 1.0);
  const BatchNormState before = st;
  Var y1 = batchnorm(x, g, b, st, Mode::infer);
  Var y2 = batchnorm(x, g, b, static_cast<const BatchNormState&>(st));
  EXPECT_TRUE(bitwise_equal(st.running_mean, before.running_mean));
  EXPECT_TRUE(bitwise_equal(st.running_var, before.running_var));
  EXPECT_TRUE(bitwise_equal(y1.value(), y2.value()));
}

TEST(Tape, NonRecordingTapeStillComputes) {
  Tape tape(false);
  Var x = tape.variable(Tensor({2}, 3.0));
  Var y = sum(square(x));
  EXPECT_EQ(y.value().item(), 18.0);
  EXPECT_THROW(tape.backward(y), DetachedError);
}

TEST(GradCheck, LinearIsExact) {
  Rng rng(12);
  auto report = gradcheck::finite_diff_check(
      [](Tape&, std::span<const Var> in) { return sum(scale(in[0], 3.0)); }, {random_tensor({3, 4}, rng)});
  EXPECT_TRUE(report.pass);
  EXPECT_LE(report.max_rel_err, 1e-10);
  EXPECT_EQ(report.checked, 12u);
}

TEST(GradCheck, Conv2dPasses) {
  Rng rng(13);
  Tensor x = random_tensor({1, 2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor proj = random_tensor({1, 3, 5, 5}, rng);
  auto report = gradcheck::finite_diff_check(
      [&](Tape& t, std::span<const Var> in) {
        return sum(mul(conv2d(in[0], in[1], std::nullopt, {1, 1}), t.constant(proj)));
      },
      {x, w});
  EXPECT_TRUE(report.pass) << report.max_rel_err;
  EXPECT_LE(report.max_rel_err, 1e-4);
}

// An op whose recorded gradient is twice the truth must be caught.
TEST(GradCheck, DetectsCorruptedGradient) {
  auto doubled_square = [](Var x) {
    Tape& t = *x.tape();
    Tensor v = x.value();
    for (double& e : v.data()) e = e * e;
    return t.record(std::move(v), {x},
                    [x](Tape& tp, const Tensor& g) {
                      Tensor dx = x.value();
                      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = 2.0 * (2.0 * dx[i]) * g[i];
                      tp.accumulate(x, std::move(dx));
                    },
                    "bad_square");
  };
  Rng rng(14);
  auto report = gradcheck::finite_diff_check(
      [&](Tape&, std::span<const Var> in) { return sum(doubled_square(in[0])); }, {random_tensor({5}, rng)});
  EXPECT_FALSE(report.pass);
  EXPECT_GT(report.max_rel_err, 0.3);
}

TEST(GradCheck, ComposedChainMatchesFiniteDifferences) {
  Rng rng(15);
  Tensor x = random_tensor({2, 2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng);
  Tensor gamma = random_tensor({3}, rng), beta = random_tensor({3}, rng);
  auto report = gradcheck::finite_diff_check(
      [](Tape&, std::span<const Var> in) {
        BatchNormState st = BatchNormState::fresh(3);
        return sum(leaky_relu(batchnorm(conv2d(in[0], in[1], std::nullopt, {1, 1}), in[2], in[3], st, Mode::train)));
      },
      {x, w, gamma, beta});
  EXPECT_TRUE(report.pass) << report.max_rel_err;
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(gradcheck::relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(gradcheck::relative_error(1.0, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(gradcheck::relative_error(1e-12, 0.0), 1e-12 / 1e-8);
}
