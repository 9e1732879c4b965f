#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "kinit/nn.hpp"
#include "kinit/rng.hpp"

using namespace kinit;
using nn::Tensor;

// ---------------------------------------------------------------------------
// conv2d examples.

TEST(Conv2d, OneByOneIdentityKernel) {
  Rng rng(1);
  Tensor<double> in = gradcheck::random_tensor(rng, {4, 5, 1});
  Tensor<double> w({1, 1, 1, 1});
  w.data[0] = 1.0;
  Tensor<double> b({1});
  Tensor<double> out;
  nn::conv2d_forward(in, w, b, out);
  EXPECT_EQ(out.data, in.data);
}

TEST(Conv2d, HandConvolvedOnesGiveNeighborCounts) {
  Tensor<double> in({3, 3, 1});
  in.fill(1.0);
  Tensor<double> w({3, 3, 1, 1});
  w.fill(1.0);
  Tensor<double> b({1});
  Tensor<double> out;
  nn::conv2d_forward(in, w, b, out);
  // center sees all 9 taps, corners see 4, edges see 6
  EXPECT_DOUBLE_EQ(out.data[4], 9.0);
  EXPECT_DOUBLE_EQ(out.data[0], 4.0);
  EXPECT_DOUBLE_EQ(out.data[2], 4.0);
  EXPECT_DOUBLE_EQ(out.data[6], 4.0);
  EXPECT_DOUBLE_EQ(out.data[8], 4.0);
  EXPECT_DOUBLE_EQ(out.data[1], 6.0);
}

TEST(Conv2d, EvenKernelPadsBottomRight) {
  // 2x2 kernel selecting the bottom-right tap: output y,x = input y+1,x+1,
  // zero past the edge
  Tensor<double> in({2, 2, 1});
  in.data = {1.0, 2.0, 3.0, 4.0};
  Tensor<double> w({2, 2, 1, 1});
  w.data = {0.0, 0.0, 0.0, 1.0};
  Tensor<double> b({1});
  Tensor<double> out;
  nn::conv2d_forward(in, w, b, out);
  EXPECT_DOUBLE_EQ(out.data[0], 4.0);
  EXPECT_DOUBLE_EQ(out.data[1], 0.0);
  EXPECT_DOUBLE_EQ(out.data[2], 0.0);
  EXPECT_DOUBLE_EQ(out.data[3], 0.0);
}

TEST(Conv2d, GradientCheckOnRandomTensors) {
  Rng rng(20250101);
  for (int trial = 0; trial < 20; ++trial) {
    const double err = gradcheck::check_conv2d(rng, 5, 5, 2, 3, 3);
    EXPECT_LT(err, 1e-4) << "trial " << trial;
  }
  for (int trial = 0; trial < 20; ++trial) {
    const double err = gradcheck::check_conv2d(rng, 4, 3, 3, 2, 2);
    EXPECT_LT(err, 1e-4) << "2x2 trial " << trial;
  }
}

TEST(Conv2d, ShapeMismatchRejected) {
  Tensor<double> in({3, 3, 2});
  Tensor<double> w({3, 3, 1, 4});  // wrong input channels
  Tensor<double> b({4});
  Tensor<double> out;
  try {
    nn::conv2d_forward(in, w, b, out);
    FAIL() << "expected ShapeMismatch";
  } catch (const KinitError& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

// ---------------------------------------------------------------------------
// maxpool examples.

TEST(Maxpool, SizeOneIsIdentity) {
  Rng rng(3);
  Tensor<double> in = gradcheck::random_tensor(rng, {7, 5, 3});
  Tensor<double> out;
  Tensor<std::int64_t> argmax;
  nn::maxpool_forward(in, 1, out, argmax);
  EXPECT_EQ(out.shape, in.shape);
  EXPECT_EQ(out.data, in.data);
}

TEST(Maxpool, HandEvaluatedRamp) {
  Tensor<double> in({4, 4, 1});
  for (int i = 0; i < 16; ++i) in.data[static_cast<std::size_t>(i)] = i + 1;
  Tensor<double> out;
  Tensor<std::int64_t> argmax;
  nn::maxpool_forward(in, 2, out, argmax);
  ASSERT_EQ(out.shape, (std::vector<int>{2, 2, 1}));
  EXPECT_DOUBLE_EQ(out.data[0], 6.0);
  EXPECT_DOUBLE_EQ(out.data[1], 8.0);
  EXPECT_DOUBLE_EQ(out.data[2], 14.0);
  EXPECT_DOUBLE_EQ(out.data[3], 16.0);
}

TEST(Maxpool, CeilSemanticsTruncateEdgeWindows) {
  Tensor<double> in({5, 4, 1});
  for (std::size_t i = 0; i < in.data.size(); ++i) in.data[i] = static_cast<double>(i);
  Tensor<double> out;
  Tensor<std::int64_t> argmax;
  nn::maxpool_forward(in, 3, out, argmax);
  EXPECT_EQ(out.shape, (std::vector<int>{2, 2, 1}));
  // bottom band is rows 3..4 only, right band is column 3 only
  EXPECT_DOUBLE_EQ(out.data[3], 19.0);  // max of rows 3..4 x col 3
}

TEST(Maxpool, TiesBreakTowardFirstInRowMajorOrder) {
  Tensor<double> in({2, 2, 1});
  in.fill(7.0);
  Tensor<double> out;
  Tensor<std::int64_t> argmax;
  nn::maxpool_forward(in, 2, out, argmax);
  EXPECT_EQ(argmax.data[0], 0);
}

TEST(Maxpool, GradientCheckRoutesToArgmax) {
  Rng rng(20250202);
  for (int trial = 0; trial < 20; ++trial) {
    const double err = gradcheck::check_maxpool(rng, 6, 6, 2, 3);
    EXPECT_LT(err, 1e-6) << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// ReLU.

TEST(Relu, ClampsNegativesPassesPositives) {
  Tensor<double> in({4});
  in.data = {-3.0, -0.1, 0.0, 2.5};
  Tensor<double> out;
  nn::relu_forward(in, out);
  EXPECT_EQ(out.data, (std::vector<double>{0.0, 0.0, 0.0, 2.5}));
}

TEST(Relu, GradientCheckAwayFromZero) {
  Rng rng(20250303);
  for (int trial = 0; trial < 20; ++trial) {
    const double err = gradcheck::check_relu(rng, 32);
    EXPECT_LT(err, 1e-6) << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// dense.

TEST(Dense, IdentityPassthrough) {
  Tensor<double> in({3});
  in.data = {0.5, -1.0, 2.0};
  Tensor<double> w({3, 3});
  for (int i = 0; i < 3; ++i) w.data[static_cast<std::size_t>(i * 3 + i)] = 1.0;
  Tensor<double> b({3});
  Tensor<double> out;
  nn::dense_forward(in, w, b, out);
  EXPECT_EQ(out.data, in.data);
}

TEST(Dense, HandEvaluatedAffine) {
  Tensor<double> in({2});
  in.data = {1.0, 2.0};
  Tensor<double> w({2, 2});
  w.data = {1.0, 0.0, 0.0, 1.0};
  Tensor<double> b({2});
  b.data = {1.0, 1.0};
  Tensor<double> out;
  nn::dense_forward(in, w, b, out);
  EXPECT_DOUBLE_EQ(out.data[0], 2.0);
  EXPECT_DOUBLE_EQ(out.data[1], 3.0);
}

TEST(Dense, GradientCheck) {
  Rng rng(20250404);
  for (int trial = 0; trial < 20; ++trial) {
    const double err = gradcheck::check_dense(rng, 24, 6);
    EXPECT_LT(err, 1e-4) << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// softmax cross-entropy.

TEST(SoftmaxCe, UniformLogitsGiveLogFour) {
  Tensor<double> logits({4});
  Tensor<double> probs;
  const double loss = nn::softmax_cross_entropy_index(logits, 2, probs);
  EXPECT_NEAR(loss, std::log(4.0), 1e-12);
  for (const double p : probs.data) EXPECT_NEAR(p, 0.25, 1e-12);
}

TEST(SoftmaxCe, ProbsSumToOneAndShiftInvariant) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> logits = gradcheck::random_tensor(rng, {4}, -15.0, 15.0);
    Tensor<double> probs;
    nn::softmax_cross_entropy_index(logits, 0, probs);
    double sum = 0.0;
    for (const double p : probs.data) {
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);

    Tensor<double> shifted = logits;
    for (auto& v : shifted.data) v += 123.456;
    Tensor<double> probs2;
    nn::softmax_cross_entropy_index(shifted, 0, probs2);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(probs2.data[i], probs.data[i], 1e-12);
  }
}

TEST(SoftmaxCe, OneHotInterfaceMatchesIndexInterface) {
  Tensor<double> logits({4});
  logits.data = {0.1, 0.9, -0.4, 0.2};
  Tensor<double> one_hot({4});
  one_hot.data[3] = 1.0;
  const auto [loss, probs] = nn::softmax_cross_entropy(logits, one_hot);
  Tensor<double> probs2;
  const double loss2 = nn::softmax_cross_entropy_index(logits, 3, probs2);
  EXPECT_DOUBLE_EQ(loss, loss2);
  EXPECT_EQ(probs.data, probs2.data);
}

TEST(SoftmaxCe, RejectsNonOneHotTargets) {
  Tensor<double> logits({4});
  Tensor<double> bad({4});
  bad.data = {0.5, 0.5, 0.0, 0.0};
  EXPECT_THROW(nn::softmax_cross_entropy(logits, bad), KinitError);
}

TEST(SoftmaxCe, GradientEqualsProbsMinusTarget) {
  Rng rng(20250505);
  for (int trial = 0; trial < 20; ++trial) {
    const double err = gradcheck::check_softmax_ce(rng, 4);
    EXPECT_LT(err, 1e-6) << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// Adam.

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor<float> params({8});
  for (std::size_t i = 0; i < 8; ++i) params.data[i] = static_cast<float>(i) * 0.25f;
  const Tensor<float> before = params;
  Tensor<float> grad({8});
  nn::AdamState<float> state(params.shape);
  for (int step = 0; step < 5; ++step) nn::adam_step(params, grad, state);
  EXPECT_EQ(params.data, before.data);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  // bias-corrected first step: theta1 = theta0 - lr * g / (|g| + eps)
  Tensor<double> params({3});
  params.data = {1.0, -2.0, 0.5};
  Tensor<double> grad({3});
  grad.data = {0.3, -0.7, 0.0001};
  nn::AdamState<double> state(params.shape, 1e-3);
  nn::adam_step(params, grad, state);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected =
        (i == 0 ? 1.0 : i == 1 ? -2.0 : 0.5) -
        1e-3 * grad.data[i] / (std::abs(grad.data[i]) + 1e-8);
    EXPECT_NEAR(params.data[i], expected, 1e-12);
  }
}

TEST(Adam, IdenticalGradientsUpdateIdentically) {
  Tensor<double> a({4}), b({4});
  a.data = b.data = {0.1, 0.2, 0.3, 0.4};
  Tensor<double> grad({4});
  grad.data = {1.0, -1.0, 0.5, 0.0};
  nn::AdamState<double> sa(a.shape), sb(b.shape);
  for (int step = 0; step < 7; ++step) {
    nn::adam_step(a, grad, sa);
    nn::adam_step(b, grad, sb);
  }
  EXPECT_EQ(a.data, b.data);
}

TEST(Adam, ShapeMismatchRejected) {
  Tensor<double> params({4});
  Tensor<double> grad({5});
  nn::AdamState<double> state(params.shape);
  EXPECT_THROW(nn::adam_step(params, grad, state), KinitError);
}

// ---------------------------------------------------------------------------
// Initialization.

TEST(SeededInit, DeterministicPerSeed) {
  const auto a = nn::seeded_init<float>({3, 3, 2, 4}, 18, 99);
  const auto b = nn::seeded_init<float>({3, 3, 2, 4}, 18, 99);
  EXPECT_EQ(a.data, b.data);
  const auto c = nn::seeded_init<float>({3, 3, 2, 4}, 18, 100);
  EXPECT_NE(a.data, c.data);
}

TEST(SeededInit, BoundsRespected) {
  const int fan_in = 50;
  const double bound = std::sqrt(6.0 / fan_in);
  const auto t = nn::seeded_init<double>({1000}, fan_in, 7);
  for (const double v : t.data) {
    EXPECT_GE(v, -bound);
    EXPECT_LT(v, bound);
  }
}

TEST(SeededInit, MeanNearZero) {
  const int n = 100000;
  const int fan_in = 24;
  const double bound = std::sqrt(6.0 / fan_in);
  const auto t = nn::seeded_init<double>({n}, fan_in, 11);
  double mean = 0.0;
  for (const double v : t.data) mean += v;
  mean /= n;
  const double sigma_of_mean = bound / std::sqrt(3.0 * n);
  EXPECT_LT(std::abs(mean), 3.0 * sigma_of_mean);
}

// ---------------------------------------------------------------------------
// Composite model gradient.

TEST(EkmComposite, FullChainGradientCheck) {
  Rng rng(20250606);
  for (int trial = 0; trial < 5; ++trial) {
    const double err = gradcheck::check_ekm_composite(rng);
    EXPECT_LT(err, 1e-4) << "trial " << trial;
  }
}

TEST(CheckedMode, FlagsNonFiniteActivations) {
  nn::set_checked_mode(true);
  Tensor<double> in({2, 2, 1});
  in.data = {1.0, std::numeric_limits<double>::infinity(), 0.0, 0.0};
  Tensor<double> w({1, 1, 1, 1});
  w.data[0] = 1.0;
  Tensor<double> b({1});
  Tensor<double> out;
  EXPECT_THROW(nn::conv2d_forward(in, w, b, out), std::runtime_error);
  nn::set_checked_mode(false);
  EXPECT_NO_THROW(nn::conv2d_forward(in, w, b, out));
}
