/* Copyright 2026 The dfnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include "dfnet/ops.hpp"
#include "dfnet/tensor_core.hpp"
#include "oracles.hpp"

namespace dfnet {
namespace {

using tensor_core::grad_check;
using tensor_core::random_tensor;

tensor_core::InputSampler shapes(std::vector<Shape> s, std::uint64_t seed,
                                 double lo = -1.0, double hi = 1.0) {
  return [=](int attempt) {
    std::mt19937_64 rng(seed + 131 * attempt);
    std::vector<Tensor> out;
    for (const Shape& sh : s) out.push_back(random_tensor(sh, rng, lo, hi));
    return out;
  };
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  Var x(Tensor({1, 1, 1, 1}, 3.0), true);
  Var y = ops::mul(x, x);
  Var z = ops::add(y, x);  // x^2 + x
  backward(z);
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Autograd, NoGradGuardBuildsConstants) {
  Var x(Tensor({1, 1, 2, 2}, 1.0), true);
  {
    NoGradGuard guard;
    Var y = ops::scale(x, 2.0);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(ops::scale(x, 2.0).requires_grad());
}

TEST(Autograd, DetachStopsGradient) {
  Var x(Tensor({1, 1, 1, 1}, 2.0), true);
  Var y = ops::add(ops::mul(x.detach(), x), x);  // d/dx = 2 + 1
  backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}

TEST(Ops, BroadcastMultiplyMatchesLoop) {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({2, 3, 4, 5}, rng);
  const Tensor m = random_tensor({2, 1, 4, 5}, rng);
  const Var out = ops::mul(Var(a), Var(m));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x)
          EXPECT_DOUBLE_EQ(out.value().at(n, c, y, x),
                           a.at(n, c, y, x) * m.at(n, 0, y, x));
  EXPECT_THROW(ops::mul(Var(a), Var(Tensor({2, 2, 4, 5}))),
               std::invalid_argument);
}

TEST(Ops, ConvSingleTapMatchesHand) {
  // 1x1x3x3 input, identity-centred 3x3 kernel plus bias 0.5.
  Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 2.0;
  const Var y = ops::conv2d(Var(x), Var(w), Var(Tensor({1, 1, 1, 1}, 0.5)), 1, 1);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y.value()[i], 2 * x[i] + 0.5);
  const Var s = ops::conv2d(Var(x), Var(w), Var(), 2, 1);
  EXPECT_EQ(s.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_DOUBLE_EQ(s.value().at(0, 0, 1, 1), 18.0);
}

TEST(Ops, ResizeMatchesReference) {
  std::mt19937_64 rng(2);
  const Tensor t = random_tensor({1, 2, 3, 5}, rng);
  const Var up = ops::resize_bilinear(Var(t), 12, 10);
  EXPECT_LT(oracle::max_abs_diff(up.value(), oracle::resample(t, 12, 10)), 1e-12);
}

struct OpCase {
  const char* name;
  std::function<Var(std::span<const Var>)> fn;
  std::vector<Shape> shapes;
  double lo = -1.0;
  double hi = 1.0;
};

void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase& c = GetParam();
  const auto r = grad_check(c.fn, shapes(c.shapes, 7, c.lo, c.hi));
  EXPECT_LT(r.max_relative_error, 1e-5) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    Ops, OpGradient,
    ::testing::Values(
        OpCase{"conv3x3_pad1",
               [](std::span<const Var> v) {
                 return ops::conv2d(v[0], v[1], v[2], 1, 1);
               },
               {{2, 3, 5, 4}, {4, 3, 3, 3}, {1, 4, 1, 1}}},
        OpCase{"conv3x3_stride2",
               [](std::span<const Var> v) {
                 return ops::conv2d(v[0], v[1], v[2], 2, 1);
               },
               {{1, 2, 6, 5}, {3, 2, 3, 3}, {1, 3, 1, 1}}},
        OpCase{"conv1x1",
               [](std::span<const Var> v) {
                 return ops::conv2d(v[0], v[1], v[2], 1, 0);
               },
               {{2, 3, 4, 4}, {5, 3, 1, 1}, {1, 5, 1, 1}}},
        OpCase{"broadcast_div",
               [](std::span<const Var> v) { return ops::div(v[0], v[1]); },
               {{1, 3, 3, 3}, {1, 1, 3, 3}},
               0.5,
               1.5},
        OpCase{"sigmoid_elu",
               [](std::span<const Var> v) {
                 return ops::elu(ops::sigmoid(ops::scale(v[0], 3.0)));
               },
               {{1, 2, 3, 3}}},
        OpCase{"log_sqrt_exp",
               [](std::span<const Var> v) {
                 return ops::log(ops::add(ops::sqrt(v[0]), ops::exp(v[0])));
               },
               {{1, 1, 3, 4}},
               0.2,
               2.0},
        OpCase{"resize_up",
               [](std::span<const Var> v) {
                 return ops::resize_bilinear(v[0], 7, 9);
               },
               {{1, 2, 3, 4}}},
        OpCase{"resize_down",
               [](std::span<const Var> v) {
                 return ops::resize_bilinear(v[0], 2, 3);
               },
               {{1, 1, 5, 7}}},
        OpCase{"nearest_up",
               [](std::span<const Var> v) { return ops::upsample_nearest2(v[0]); },
               {{1, 2, 2, 3}}},
        OpCase{"pool2",
               [](std::span<const Var> v) { return ops::avg_pool2(v[0]); },
               {{1, 2, 4, 6}}},
        OpCase{"pool3_reflect",
               [](std::span<const Var> v) { return ops::avg_pool3_reflect(v[0]); },
               {{1, 2, 4, 5}}},
        OpCase{"diffs",
               [](std::span<const Var> v) {
                 return ops::add(ops::mean(ops::square(ops::diff_x(v[0]))),
                                 ops::mean(ops::square(ops::diff_y(v[0]))));
               },
               {{1, 2, 4, 5}}},
        OpCase{"concat_slice",
               [](std::span<const Var> v) {
                 std::vector<Var> parts{v[0], v[1]};
                 return ops::slice_channels(ops::concat_channels(parts), 1, 3);
               },
               {{1, 2, 3, 3}, {1, 3, 3, 3}}},
        OpCase{"reductions",
               [](std::span<const Var> v) {
                 return ops::add(ops::mean_channels(ops::square(v[0])),
                                 ops::mul(ops::global_avg_pool(v[0]),
                                          ops::mean_per_item(v[0])));
               },
               {{2, 3, 3, 2}}}),
    [](const ::testing::TestParamInfo<OpCase>& info) {
      return std::string(info.param.name);
    });

}  // namespace
}  // namespace dfnet
