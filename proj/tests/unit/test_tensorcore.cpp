#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "abpn/error.hpp"
#include "abpn/gradcheck.hpp"
#include "abpn/ops.hpp"
#include "helpers.hpp"

using namespace abpn;
using abpn::testing::leaf;
using abpn::testing::scalar;

namespace {

// Direct seven-loop cross-correlation with zero padding.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                           int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const std::int64_t ho = (xs.h + 2 * pad - ws.h) / stride + 1;
  const std::int64_t wo = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor<double> out(Shape{xs.n, ws.n, ho, wo});
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t o = 0; o < ws.n; ++o)
      for (std::int64_t i = 0; i < ho; ++i)
        for (std::int64_t j = 0; j < wo; ++j) {
          double acc = b[static_cast<std::size_t>(o)];
          for (std::int64_t c = 0; c < xs.c; ++c)
            for (std::int64_t ki = 0; ki < ws.h; ++ki)
              for (std::int64_t kj = 0; kj < ws.w; ++kj) {
                const std::int64_t y = i * stride - pad + ki, xx = j * stride - pad + kj;
                if (y < 0 || y >= xs.h || xx < 0 || xx >= xs.w) continue;
                acc += x.at(n, c, y, xx) * w.at(o, c, ki, kj);
              }
          out.at(n, o, i, j) = acc;
        }
  return out;
}

double adjoint_gap(int k, int s, int p, std::int64_t n_lr, std::uint64_t seed) {
  Tape<double> tape;
  const std::int64_t n_hr = ops::deconv_out_extent(n_lr, k, s, p);
  auto x = make_var(random_tensor<double>(Shape{2, 3, n_hr, n_hr}, seed));
  auto y = make_var(random_tensor<double>(Shape{2, 4, n_lr, n_lr}, seed + 1));
  auto w = make_var(random_tensor<double>(Shape{4, 3, k, k}, seed + 2));
  auto wt = make_var(w->value);  // conv weight Cout×Cin is the deconv weight Cin×Cout of the adjoint
  const double lhs = dot(ops::conv2d(tape, x, w, Var<double>{}, s, p)->value, y->value);
  const double rhs = dot(x->value, ops::deconv2d(tape, y, wt, Var<double>{}, s, p)->value);
  return std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
}

}  // namespace

TEST(Conv2d, SingleMultiply) {
  Tape<float> tape;
  auto y = ops::conv2d(tape, leaf<float>({1, 1, 1, 1}, {2}), leaf<float>({1, 1, 1, 1}, {3}),
                       leaf<float>({1, 1, 1, 1}, {0}), 1, 0);
  EXPECT_EQ(y->value[0], 6.0f);
}

TEST(Conv2d, ProjectionOutputSize) {
  Tape<float> tape;
  auto x = make_var(Tensor<float>(Shape{1, 32, 8, 8}));
  auto w = make_var(Tensor<float>(Shape{32, 32, 6, 6}));
  auto b = make_var(Tensor<float>(Shape{1, 32, 1, 1}));
  EXPECT_EQ(ops::conv2d(tape, x, w, b, 4, 1)->value.shape(), (Shape{1, 32, 2, 2}));
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  for (auto [k, s, p] : {std::tuple{3, 1, 1}, {6, 4, 1}, {1, 1, 0}, {2, 2, 0}}) {
    const auto x = random_tensor<double>(Shape{2, 3, 5, 5}, 11);
    const auto w = random_tensor<double>(Shape{4, 3, k, k}, 12);
    const auto b = random_tensor<double>(Shape{1, 4, 1, 1}, 13);
    const auto expected = conv_oracle(x, w, b, s, p);
    Tape<float> tape;
    auto y = ops::conv2d(tape, make_var(x.cast<float>()), make_var(w.cast<float>()), make_var(b.cast<float>()), s, p);
    ASSERT_EQ(y->value.shape(), expected.shape());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(y->value[i], expected[i], 1e-5) << "k=" << k;
    // Same check in float64 at the tight tolerance.
    Tape<double> t64;
    auto y64 = ops::conv2d(t64, make_var(x), make_var(w), make_var(b), s, p);
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(y64->value[i], expected[i], 1e-12);
  }
}

TEST(Conv2d, ChannelMismatchNamesAxis) {
  Tape<float> tape;
  auto x = make_var(Tensor<float>(Shape{1, 2, 4, 4}));
  auto w = make_var(Tensor<float>(Shape{3, 5, 3, 3}));
  try {
    ops::conv2d(tape, x, w, Var<float>{}, 1, 1);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "channels");
    EXPECT_EQ(e.op(), "conv2d");
  }
}

TEST(Conv2d, InvalidGeometryNamesAxis) {
  Tape<float> tape;
  auto x = make_var(Tensor<float>(Shape{1, 1, 4, 4}));
  auto w = make_var(Tensor<float>(Shape{1, 1, 3, 3}));
  try {
    ops::conv2d(tape, x, w, Var<float>{}, 0, 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "stride");
  }
  try {
    ops::conv2d(tape, x, w, Var<float>{}, 1, -1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "pad");
  }
  auto bad_bias = make_var(Tensor<float>(Shape{1, 2, 1, 1}));
  try {
    ops::conv2d(tape, x, w, bad_bias, 1, 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.axis(), "bias");
  }
}

TEST(Deconv2d, OutputSize) {
  Tape<float> tape;
  auto x = make_var(Tensor<float>(Shape{1, 32, 3, 3}));
  auto w = make_var(Tensor<float>(Shape{32, 32, 6, 6}));
  EXPECT_EQ(ops::deconv2d(tape, x, w, Var<float>{}, 4, 1)->value.shape(), (Shape{1, 32, 12, 12}));
}

TEST(Deconv2d, KernelStamping) {
  Tape<float> tape;
  auto y = ops::deconv2d(tape, leaf<float>({1, 1, 1, 1}, {1.5f}), leaf<float>({1, 1, 2, 2}, {1, 1, 1, 1}),
                         leaf<float>({1, 1, 1, 1}, {0}), 2, 0);
  ASSERT_EQ(y->value.shape(), (Shape{1, 1, 2, 2}));
  for (float v : y->value.data()) EXPECT_EQ(v, 1.5f);
}

TEST(Deconv2d, AdjointOfConvForEveryNetworkGeometry) {
  for (auto [k, s, p] : {std::tuple{6, 2, 2}, {6, 4, 1}, {10, 8, 1}, {3, 1, 1}, {1, 1, 0}})
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      EXPECT_LT(adjoint_gap(k, s, p, 3, 100 * seed), 1e-10) << k << "/" << s << "/" << p << " seed " << seed;
}

TEST(ShapeAlgebra, ConvOfDeconvRestoresExtent) {
  for (auto [alpha, k, s, p] : {std::tuple{2, 6, 2, 2}, {4, 6, 4, 1}, {8, 10, 8, 1}})
    for (std::int64_t n : {1, 3, 8, 16, 32}) {
      EXPECT_EQ(ops::deconv_out_extent(n, k, s, p), alpha * n);
      EXPECT_EQ(ops::conv_out_extent(alpha * n, k, s, p), n);
    }
}

TEST(Softmax, UniformRow) {
  Tape<double> tape;
  auto y = ops::softmax_rows(tape, leaf<double>({1, 1, 1, 4}, {0, 0, 0, 0}));
  for (double v : y->value.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, HandEvaluatedRatio) {
  Tape<double> tape;
  auto y = ops::softmax_rows(tape, leaf<double>({1, 1, 1, 2}, {0, std::log(2.0)}));
  EXPECT_NEAR(y->value[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y->value[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, RowStochasticAndShiftInvariant) {
  const auto logits = random_tensor<double>(Shape{2, 3, 5, 7}, 4, 5.0);
  Tape<double> tape;
  auto y = ops::softmax_rows(tape, make_var(logits));
  Tensor<double> shifted = logits;
  for (std::int64_t r = 0; r < 2 * 3 * 5; ++r)
    for (int j = 0; j < 7; ++j) shifted[static_cast<std::size_t>(r * 7 + j)] += static_cast<double>(r) * 3.5 - 20.0;
  auto z = ops::softmax_rows(tape, make_var(shifted));
  for (std::int64_t r = 0; r < 30; ++r) {
    double total = 0.0;
    for (int j = 0; j < 7; ++j) {
      const std::size_t i = static_cast<std::size_t>(r * 7 + j);
      EXPECT_GE(y->value[i], 0.0);
      EXPECT_NEAR(y->value[i], z->value[i], 1e-12);
      total += y->value[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tape<float> tape;
  auto y = ops::softmax_rows(tape, leaf<float>({1, 1, 1, 3}, {1000.0f, 999.0f, -1000.0f}));
  EXPECT_TRUE(y->value.all_finite());
  EXPECT_NEAR(y->value[0] + y->value[1] + y->value[2], 1.0f, 1e-6);
}

TEST(Matmul, HandArithmetic) {
  Tape<double> tape;
  auto y = ops::matmul(tape, leaf<double>({1, 1, 2, 2}, {1, 2, 3, 4}), leaf<double>({1, 1, 2, 1}, {1, 1}));
  ASSERT_EQ(y->value.shape(), (Shape{1, 1, 2, 1}));
  EXPECT_EQ(y->value[0], 3.0);
  EXPECT_EQ(y->value[1], 7.0);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tape<double> tape;
  auto b = leaf<double>({1, 1, 2, 2}, {5, -1, 2.5, 7});
  auto y = ops::matmul(tape, leaf<double>({1, 1, 2, 2}, {1, 0, 0, 1}), b);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y->value[i], b->value[i]);
}

TEST(Matmul, InnerDimensionMismatch) {
  Tape<double> tape;
  EXPECT_THROW(ops::matmul(tape, make_var(Tensor<double>(Shape{1, 1, 2, 3})), make_var(Tensor<double>(Shape{1, 1, 2, 2}))),
               DimensionError);
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  Tape<double> tape;
  auto a = make_var(random_tensor<double>(Shape{1, 1, 3, 4}, 1), true);
  auto b = make_var(random_tensor<double>(Shape{1, 1, 4, 2}, 2), true);
  tape.backward(ops::sum(tape, ops::matmul(tape, a, b)));
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k) {
      const double expected = b->value.at(0, 0, k, 0) + b->value.at(0, 0, k, 1);
      EXPECT_NEAR(a->grad.at(0, 0, i, k), expected, 1e-14);
    }
  const auto r = grad_check(
      [](Tape<double>& t, const std::vector<Var<double>>& in) { return ops::sum(t, ops::matmul(t, in[0], in[1])); },
      {a->value, b->value});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Prelu, Definition) {
  Tape<double> tape;
  auto slope = leaf<double>({1, 1, 1, 1}, {0.25});
  EXPECT_EQ(ops::prelu(tape, scalar(3.0), slope)->value[0], 3.0);
  EXPECT_EQ(ops::prelu(tape, scalar(-2.0), slope)->value[0], -0.5);
}

TEST(Prelu, SlopeGradientAtMinusTwo) {
  Tape<double> tape;
  auto x = scalar(-2.0);
  auto slope = leaf<double>({1, 1, 1, 1}, {0.25});
  tape.backward(ops::prelu(tape, x, slope));
  EXPECT_DOUBLE_EQ(slope->grad[0], -2.0);
  const auto r = grad_check(
      [](Tape<double>& t, const std::vector<Var<double>>& in) { return ops::prelu(t, in[0], in[1]); },
      {x->value, slope->value});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  auto x = make_var(random_tensor<double>(Shape{2, 3, 4, 5}, 9), true);
  tape.backward(ops::sum(tape, x));
  for (double g : x->grad.data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, DisconnectedLeafGetsZeros) {
  Tape<double> tape;
  auto x = make_var(random_tensor<double>(Shape{1, 1, 2, 2}, 1), true);
  auto unused = make_var(random_tensor<double>(Shape{1, 1, 2, 2}, 2), true);
  auto other = make_var(random_tensor<double>(Shape{1, 1, 2, 2}, 3), true);
  auto loss = ops::sum(tape, ops::mul(tape, x, other));
  ops::add(tape, unused, other);  // recorded but not on the loss path
  tape.backward(loss);
  ASSERT_FALSE(unused->grad.empty());
  for (double g : unused->grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, AccumulatesUntilReset) {
  Tape<double> tape;
  auto x = make_var(random_tensor<double>(Shape{1, 1, 2, 2}, 1), true);
  auto loss = ops::sum(tape, ops::scale(tape, x, 3.0));
  tape.backward(loss);
  tape.backward(loss);
  for (double g : x->grad.data()) EXPECT_EQ(g, 6.0);
  x->zero_grad();
  tape.backward(loss);
  for (double g : x->grad.data()) EXPECT_EQ(g, 3.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape<double> tape;
  auto x = make_var(random_tensor<double>(Shape{1, 1, 2, 2}, 1), true);
  EXPECT_THROW(tape.backward(ops::scale(tape, x, 2.0)), std::invalid_argument);
}

TEST(Backward, CompositeChainMatchesCentralDifferences) {
  auto fn = [](Tape<double>& t, const std::vector<Var<double>>& in) {
    auto x = ops::prelu(t, ops::conv2d(t, in[0], in[1], in[2], 1, 1), in[3]);
    auto rows = ops::softmax_rows(t, ops::reshape(t, x, Shape{1, 1, 3, 16}));
    return ops::l1_loss(t, ops::matmul(t, rows, in[4]), in[5]);
  };
  std::vector<Tensor<double>> inputs{random_tensor<double>({1, 2, 4, 4}, 1), random_tensor<double>({3, 2, 3, 3}, 2),
                                     random_tensor<double>({1, 3, 1, 1}, 3), random_tensor<double>({1, 3, 1, 1}, 4),
                                     random_tensor<double>({1, 1, 16, 2}, 5), random_tensor<double>({1, 1, 3, 2}, 6)};
  EXPECT_LT(grad_check(fn, inputs, 1e-5).max_rel_error, 1e-4);
}

TEST(GradCheck, LinearOpIsExact) {
  const auto r = grad_check(
      [](Tape<double>& t, const std::vector<Var<double>>& in) {
        return random_projection(t, ops::matmul(t, in[0], in[1]), 5);
      },
      {random_tensor<double>({1, 1, 3, 4}, 1), random_tensor<double>({1, 1, 4, 2}, 2)});
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, ProjectionConvolution) {
  auto fn = [](Tape<double>& t, const std::vector<Var<double>>& in) {
    return random_projection(t, ops::conv2d(t, in[0], in[1], in[2], 4, 1), 7);
  };
  const std::vector<Tensor<double>> inputs{random_tensor<double>({1, 2, 8, 8}, 1),
                                           random_tensor<double>({2, 2, 6, 6}, 2),
                                           random_tensor<double>({1, 2, 1, 1}, 3)};
  EXPECT_LT(grad_check(fn, inputs).max_rel_error, 1e-6);
}

TEST(GradCheck, DetectsCorruptedBackwardRule) {
  auto fn = [](Tape<double>& t, const std::vector<Var<double>>& in) {
    return random_projection(t, ops::conv2d(t, in[0], in[1], in[2], 4, 1), 7);
  };
  const std::vector<Tensor<double>> inputs{random_tensor<double>({1, 2, 8, 8}, 1),
                                           random_tensor<double>({2, 2, 6, 6}, 2),
                                           random_tensor<double>({1, 2, 1, 1}, 3)};
  EXPECT_GT(grad_check(fn, inputs, 1e-5, "conv2d").max_rel_error, 1e-2);
}

TEST(GradCheck, Float32AgainstFloat64) {
  auto fn = [](auto& t, const auto& in) { return random_projection(t, ops::softmax_rows(t, in[0]), 3); };
  const auto r = grad_check_mixed(ScalarFunction<float>(fn), ScalarFunction<double>(fn),
                                  {random_tensor<double>({1, 2, 3, 4}, 8)});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(FiniteSentinel, NamesTheOp) {
  Tape<double> tape;
  tape.set_check_finite(true);
  auto x = leaf<double>({1, 1, 1, 2}, {1.0, std::numeric_limits<double>::infinity()});
  try {
    ops::scale(tape, x, 2.0);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.op(), "scale");
  }
}

TEST(Tensor, LengthInvariant) {
  EXPECT_THROW(Tensor<float>(Shape{1, 2, 2, 2}, std::vector<float>(7)), std::invalid_argument);
  Tensor<float> t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_THROW(t.reshaped(Shape{1, 1, 1, 7}), std::invalid_argument);
}

TEST(Determinism, RepeatedOpsAreBitIdentical) {
  auto run = [] {
    Tape<float> tape;
    auto x = make_var(random_tensor<float>({2, 3, 12, 12}, 4), true);
    auto w = make_var(random_tensor<float>({3, 3, 6, 6}, 5), true);
    auto y = ops::deconv2d(tape, ops::conv2d(tape, x, w, Var<float>{}, 4, 1), w, Var<float>{}, 4, 1);
    tape.backward(ops::sum(tape, ops::mul(tape, y, y)));
    std::vector<float> out(y->value.data().begin(), y->value.data().end());
    out.insert(out.end(), w->grad.data().begin(), w->grad.data().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}
