#include <doctest.h>

#include <cmath>
#include <map>

#include "support.hpp"
#include "tcm/errors.hpp"
#include "tcm/kernels/kernels.hpp"

using namespace tcm;
using namespace tcm::ag;
using tcm::testing::gradcheck;
using tcm::testing::random_tensor;

namespace {

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  static std::map<std::pair<std::size_t, std::uint64_t>, Tensor> cache;
  auto& w = cache[{y.size(), seed}];
  if (!w.defined()) w = random_tensor({y.size()}, seed, 1.0, false);
  return sum(mul(reshape(y, {y.size()}), w));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("matmul and linear gradients") {
  Tensor a = random_tensor({3, 4}, 1), b = random_tensor({4, 5}, 2), bias = random_tensor({5}, 3);
  CHECK(gradcheck([&] { return probe(matmul(a, b)); }, {a, b}) < kTol);
  Tensor x = random_tensor({2, 3, 4}, 4);
  CHECK(gradcheck([&] { return probe(linear(x, b, bias)); }, {x, b, bias}) < kTol);
}

TEST_CASE("elementwise op gradients") {
  Tensor a = random_tensor({2, 5}, 5), b = random_tensor({2, 5}, 6), v = random_tensor({5}, 7);
  Tensor s = random_tensor({1}, 8);
  CHECK(gradcheck([&] { return probe(add(a, b)); }, {a, b}) < kTol);
  CHECK(gradcheck([&] { return probe(sub(a, b)); }, {a, b}) < kTol);
  CHECK(gradcheck([&] { return probe(mul(a, b)); }, {a, b}) < kTol);
  CHECK(gradcheck([&] { return probe(scale(a, -0.3)); }, {a}) < kTol);
  CHECK(gradcheck([&] { return probe(add_rowvec(a, v)); }, {a, v}) < kTol);
  CHECK(gradcheck([&] { return probe(mul_scalar(a, s)); }, {a, s}) < kTol);
  CHECK(gradcheck([&] { return probe(div_scalar(a, exp(s))); }, {a, s}) < kTol);
  CHECK(gradcheck([&] { return probe(add_scalars(s, sum(a))); }, {a, s}) < kTol);
  CHECK(gradcheck([&] { return probe(sigmoid(a)); }, {a}) < kTol);
  CHECK(gradcheck([&] { return probe(exp(a)); }, {a}) < kTol);
  // Away from the kinks the piecewise ops are smooth.
  CHECK(gradcheck([&] { return probe(relu(a)); }, {a}) < kTol);
  CHECK(gradcheck([&] { return probe(clamp(a, -0.8, 0.9)); }, {a}) < kTol);
}

TEST_CASE("normalization and reshaping gradients") {
  Tensor x = random_tensor({3, 6}, 9), g = random_tensor({6}, 10), b = random_tensor({6}, 11);
  CHECK(gradcheck([&] { return probe(layer_norm(x, g, b, 1e-5)); }, {x, g, b}) < kTol);
  CHECK(gradcheck([&] { return probe(softmax_rows(x)); }, {x}) < kTol);
  CHECK(gradcheck([&] { return probe(transpose(x)); }, {x}) < kTol);
  CHECK(gradcheck([&] { return probe(slice_cols(x, 1, 4)); }, {x}) < kTol);
  CHECK(gradcheck([&] { return probe(slice_rows(x, 1, 3)); }, {x}) < kTol);
  Tensor y = random_tensor({3, 2}, 12);
  CHECK(gradcheck([&] { return probe(concat_cols({x, y})); }, {x, y}) < kTol);
  Tensor z = random_tensor({2, 6}, 13);
  CHECK(gradcheck([&] { return probe(concat_rows({x, z})); }, {x, z}) < kTol);
  CHECK(gradcheck([&] { return probe(mean_rows(x)); }, {x}) < kTol);
  CHECK(gradcheck([&] { return mean(x); }, {x}) < kTol);
}

TEST_CASE("conv2d and bilinear upsampling gradients") {
  Tensor x = random_tensor({5, 6, 2}, 14);
  Tensor w = random_tensor({3 * 3 * 2, 3}, 15), bias = random_tensor({3}, 16);
  for (std::size_t stride : {1u, 2u}) {
    CAPTURE(stride);
    CHECK(gradcheck([&] { return probe(conv2d(x, w, bias, 3, stride, 1)); }, {x, w, bias}) < kTol);
  }
  Tensor w1 = random_tensor({2, 4}, 17);
  CHECK(gradcheck([&] { return probe(conv2d(x, w1, Tensor{}, 1, 1, 0)); }, {x, w1}) < kTol);
  Tensor u = random_tensor({2, 3, 2}, 18);
  CHECK(gradcheck([&] { return probe(upsample_bilinear(u, 8, 12)); }, {u}) < kTol);
  CHECK(gradcheck([&] { return probe(upsample_bilinear(u, 3, 5)); }, {u}) < kTol);
}

TEST_CASE("masked BCE and Dice gradients") {
  Tensor logits = random_tensor({4, 4, 1}, 19);
  std::vector<double> y(16), mask(16, 1.0);
  for (std::size_t i = 0; i < 16; ++i) y[i] = (i * 7 % 5) < 2 ? 1.0 : 0.0;
  mask[3] = mask[9] = 0.0;
  CHECK(gradcheck([&] { return bce_mean(sigmoid(logits), y, mask, 1e-7); }, {logits}) < kTol);
  CHECK(gradcheck([&] { return dice_loss(sigmoid(logits), y, mask, 1.0); }, {logits}) < kTol);
}

TEST_CASE("conv2d matches a direct convolution") {
  Tensor x = random_tensor({4, 5, 2}, 20, 1.0, false);
  Tensor w = random_tensor({9 * 2, 3}, 21, 1.0, false), b = random_tensor({3}, 22, 1.0, false);
  const Tensor y = conv2d(x, w, b, 3, 2, 1);
  REQUIRE(y.shape() == Shape{2, 3, 3});
  for (std::size_t oy = 0; oy < 2; ++oy)
    for (std::size_t ox = 0; ox < 3; ++ox)
      for (std::size_t co = 0; co < 3; ++co) {
        double acc = b[co];
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const long iy = static_cast<long>(oy * 2 + ky) - 1, ix = static_cast<long>(ox * 2 + kx) - 1;
            if (iy < 0 || ix < 0 || iy >= 4 || ix >= 5) continue;
            for (std::size_t ci = 0; ci < 2; ++ci)
              acc += x[(static_cast<std::size_t>(iy) * 5 + static_cast<std::size_t>(ix)) * 2 + ci] *
                     w[((ky * 3 + kx) * 2 + ci) * 3 + co];
          }
        CHECK(y[(oy * 3 + ox) * 3 + co] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("bilinear upsampling of a constant is constant and identity at equal size") {
  Tensor c = Tensor::full({2, 3, 1}, 0.25);
  const Tensor up = upsample_bilinear(c, 7, 5);
  for (double v : up.values()) CHECK(v == doctest::Approx(0.25));
  Tensor x = random_tensor({3, 4, 2}, 23, 1.0, false);
  const Tensor same = upsample_bilinear(x, 3, 4);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);
}

TEST_CASE("softmax rows sum to one and sigmoid is stable at extremes") {
  Tensor x = random_tensor({3, 5}, 24, 30.0, false);
  const Tensor s = softmax_rows(x);
  for (std::size_t r = 0; r < 3; ++r) {
    double t = 0;
    for (std::size_t c = 0; c < 5; ++c) t += s[r * 5 + c];
    CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Tensor p = sigmoid(Tensor::from({2}, {-800.0, 800.0}));
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 1.0);
}

TEST_CASE("gradients accumulate across backward calls and zero_grad clears them") {
  Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  sum(mul(a, a)).backward();
  sum(a).backward();
  CHECK(a.grad() == std::vector<double>{3.0, 5.0});
  a.zero_grad();
  CHECK(a.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("shared subexpressions receive the sum of their uses") {
  Tensor a = Tensor::from({1}, {3.0}, true);
  const Tensor b = mul(a, a);  // 9, d/da = 6
  add(b, b).backward();        // 2 a^2, d/da = 12
  CHECK(a.grad()[0] == 12.0);
}

TEST_CASE("NoGradGuard stops graph recording") {
  Tensor a = Tensor::from({1}, {2.0}, true);
  Tensor y;
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    y = mul(a, a);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->inputs.empty());
}

TEST_CASE("frozen leaves get no gradient and prune their branch") {
  Tensor a = Tensor::from({2}, {1.0, 2.0}, false);
  Tensor b = Tensor::from({2}, {3.0, 4.0}, true);
  sum(mul(a, b)).backward();
  CHECK_FALSE(a.has_grad());
  CHECK(b.grad() == std::vector<double>{1.0, 2.0});
}

TEST_CASE("shape errors are reported as DimensionMismatch") {
  Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(matmul(a, b), DimensionMismatch);
  CHECK_THROWS_AS(add(a, b), DimensionMismatch);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0}), DimensionMismatch);
  CHECK_THROWS_AS(a.backward(), DimensionMismatch);
}

TEST_CASE("ops give identical results under either kernel table") {
  const std::string before = kernels::active().name;
  auto run = [] {
    Tensor x = random_tensor({6, 7, 3}, 30, 1.0, false);
    Tensor w = random_tensor({27, 5}, 31, 1.0, false);
    Tensor y = relu(conv2d(x, w, Tensor{}, 3, 1, 1));
    Tensor z = linear(y, random_tensor({5, 4}, 32, 1.0, false), Tensor{});
    return std::vector<double>(z.values().begin(), z.values().end());
  };
  REQUIRE(kernels::select("scalar"));
  const auto ref = run();
  if (kernels::select("avx2")) CHECK(run() == ref);
  kernels::select(before);
}
