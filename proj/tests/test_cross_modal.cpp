#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "tcm/cross_modal.hpp"
#include "tcm/errors.hpp"

using namespace tcm;

namespace {

VisualPromptConfig tiny_vg() { return VisualPromptConfig{1, 2, 8, 16, true}; }

FeatureMap fmap(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed, bool grad = false) {
  return FeatureMap{testing::random_tensor({h, w, c}, seed, 1.0, grad), 4, h * 4, w * 4};
}

std::vector<double> vals(const ag::Tensor& t) { return {t.values().begin(), t.values().end()}; }

FeatureMap permute_positions(const FeatureMap& fm, const std::vector<std::size_t>& perm) {
  const std::size_t c = fm.channels();
  std::vector<double> out(fm.data.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(fm.data.values().begin() + static_cast<long>(perm[i] * c), c,
                out.begin() + static_cast<long>(i * c));
  return FeatureMap{ag::Tensor::from(fm.data.shape(), out), fm.stride, fm.source_h, fm.source_w};
}

double bce(double p, double y) { return -(y * std::log(p) + (1 - y) * std::log(1 - p)); }

}  // namespace

TEST_CASE("cross-attention over the single text token has weight exactly 1") {
  nn::Rng rng(0);
  VisualPromptConfig cfg{3, 4, 16, 32, true};
  const VisualPromptGenerator vg(8, cfg, rng);
  nn::AttentionTrace trace;
  vg(fmap(3, 4, 8, 1), TextEmbedding{testing::random_tensor({1, 8}, 2, 1.0, false)}, &trace);
  REQUIRE(trace.weights.size() == 3 * 4);
  for (const auto& w : trace.weights) {
    CHECK(w.shape() == ag::Shape{12, 1});
    for (double v : w.values()) CHECK(v == 1.0);
  }
}

TEST_CASE("zero-initialized out_proj gives a zero visual prompt and identity fusion") {
  nn::Rng rng(3);
  const VisualPromptGenerator vg(8, VisualPromptConfig{3, 4, 16, 32, true}, rng);
  const FeatureMap fm = fmap(2, 3, 8, 4);
  const FeatureMap vp = vg(fm, TextEmbedding{testing::random_tensor({1, 8}, 5, 1.0, false)});
  CHECK(vp.data.shape() == fm.data.shape());
  for (double v : vp.data.values()) CHECK(v == 0.0);
  CHECK(vals(fuse(fm, vp).data) == vals(fm.data));
}

TEST_CASE("fuse is elementwise addition") {
  const FeatureMap a = fmap(3, 3, 4, 6), b = fmap(3, 3, 4, 7);
  const auto f = vals(fuse(a, b).data);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] - a.data[i] == doctest::Approx(b.data[i]));
  // Cropping the first row commutes with fusion.
  auto crop = [](const FeatureMap& m) {
    return FeatureMap{ag::reshape(ag::slice_rows(ag::reshape(m.data, {3, 12}), 0, 1), {1, 3, 4}),
                      m.stride, 4, 12};
  };
  CHECK(vals(crop(fuse(a, b)).data) == vals(fuse(crop(a), crop(b)).data));
  CHECK_THROWS_AS(fuse(a, fmap(3, 2, 4, 8)), DimensionMismatch);
}

TEST_CASE("visual prompt gradients match finite differences") {
  nn::Rng rng(8);
  VisualPromptGenerator vg(8, tiny_vg(), rng);
  testing::randomize(vg.out_proj().weight, 9, 0.5);
  testing::randomize(vg.out_proj().bias, 10, 0.5);
  FeatureMap fm = fmap(2, 2, 8, 11, true);
  ag::Tensor t = testing::random_tensor({1, 8}, 12);
  const ag::Tensor w = testing::random_tensor({2 * 2 * 8}, 13, 1.0, false);
  nn::ParamList params;
  vg.collect(params);
  std::vector<ag::Tensor> wrt = testing::tensors_of(params);
  wrt.push_back(fm.data);
  wrt.push_back(t);
  const double err = testing::gradcheck(
      [&] { return ag::sum(ag::mul(ag::reshape(vg(fm, {t}).data, {32}), w)); }, wrt);
  CHECK(err < 1e-4);
}

TEST_CASE("spatial permutation commutes with the generator only without positions") {
  nn::Rng rng(14);
  VisualPromptGenerator vg(8, VisualPromptConfig{2, 2, 8, 16, true}, rng);
  testing::randomize(vg.out_proj().weight, 15, 0.5);
  const FeatureMap fm = fmap(2, 3, 8, 16);
  const TextEmbedding t{testing::random_tensor({1, 8}, 17, 1.0, false)};
  const std::vector<std::size_t> perm{4, 0, 5, 2, 1, 3};

  auto check = [&](bool positional) {
    vg.set_positional(positional);
    const FeatureMap out = vg(fm, t);
    const FeatureMap out_of_permuted = vg(permute_positions(fm, perm), t);
    const FeatureMap permuted_out = permute_positions(out, perm);
    double worst = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      worst = std::max(worst, std::abs(out_of_permuted.data[i] - permuted_out.data[i]));
    return worst;
  };
  CHECK(check(false) < 1e-12);
  CHECK(check(true) > 1e-6);
}

TEST_CASE("sinusoidal positions are distinct per cell and bounded") {
  const ag::Tensor p = sinusoidal_positions(3, 4, 8);
  CHECK(p.shape() == ag::Shape{12, 8});
  for (double v : p.values()) CHECK(std::abs(v) <= 1.0);
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = a + 1; b < 12; ++b) {
      double d = 0;
      for (std::size_t k = 0; k < 8; ++k) d += std::abs(p[a * 8 + k] - p[b * 8 + k]);
      CHECK(d > 1e-3);
    }
}

TEST_CASE("generator rejects mismatched channel counts and indivisible widths") {
  nn::Rng rng(18);
  const VisualPromptGenerator vg(8, tiny_vg(), rng);
  CHECK_THROWS_AS(vg(fmap(2, 2, 6, 1), {ag::Tensor::zeros({1, 8})}), DimensionMismatch);
  CHECK_THROWS_AS(VisualPromptGenerator(8, VisualPromptConfig{1, 3, 8, 16, true}, rng), InvalidConfig);
}

TEST_CASE("match closed forms") {
  // Orthogonal features and text give P = 0.5.
  std::vector<double> f(2 * 2 * 4, 0.0);
  for (std::size_t i = 0; i < 4; ++i) f[i * 4 + 1] = static_cast<double>(i) + 1.0;
  const FeatureMap fm{ag::Tensor::from({2, 2, 4}, f), 4, 8, 8};
  const TextEmbedding t{ag::Tensor::from({1, 4}, {1.0, 0.0, 0.0, 0.0})};
  const ScoreMap half = match(fm, t, 0.07);
  for (double v : half.probs.values()) CHECK(v == 0.5);

  const FeatureMap e1{ag::Tensor::from({1, 1, 4}, {1.0, 0.0, 0.0, 0.0}), 4, 4, 4};
  const ScoreMap s = match(e1, t, 1.0);
  CHECK(s.probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(s.probs[0] == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(s.temperature_used == 1.0);
  CHECK(s.stride == 4);
  CHECK(s.probs.shape() == ag::Shape{1, 1, 1});
}

TEST_CASE("scaling t and tau by the same factor leaves P bitwise unchanged") {
  const FeatureMap fm = fmap(3, 3, 8, 20);
  const ag::Tensor t = testing::random_tensor({1, 8}, 21, 1.0, false);
  const auto base = vals(match(fm, {t}, 0.5).probs);
  // Powers of two scale exactly in binary floating point.
  for (double k : {0.25, 2.0, 8.0}) {
    CAPTURE(k);
    CHECK(vals(match(fm, {ag::scale(t, k)}, 0.5 * k).probs) == base);
  }
}

TEST_CASE("score map stays inside [eps, 1-eps] for extreme logits") {
  const FeatureMap fm{ag::Tensor::from({1, 2, 1}, {1e6, -1e6}), 4, 4, 8};
  const ScoreMap s = match(fm, {ag::Tensor::from({1, 1}, {1.0})}, 1.0);
  CHECK(s.probs[0] == 1.0 - kProbEps);
  CHECK(s.probs[1] == kProbEps);
  CHECK_THROWS_AS(match(fm, {ag::Tensor::from({1, 1}, {1.0})}, 0.0), InvalidConfig);
  CHECK_THROWS_AS(match(fm, {ag::Tensor::from({1, 2}, {1.0, 1.0})}, 1.0), DimensionMismatch);
}

TEST_CASE("aux loss of a constant one-half score map is ln 2") {
  const ScoreMap p{ag::Tensor::full({3, 5, 1}, 0.5), 4, 1.0};
  std::mt19937_64 rng(22);
  std::vector<double> y(15);
  for (double& v : y) v = static_cast<double>(rng() % 2);
  CHECK(std::abs(aux_loss(p, y).item() - std::log(2.0)) <= 1e-9);
}

TEST_CASE("aux loss of a perfect score map is within the clamp bound") {
  const std::vector<double> y{1, 0, 0, 1};
  const FeatureMap fm{ag::Tensor::from({2, 2, 1}, {1e3, -1e3, -1e3, 1e3}), 4, 8, 8};
  const ScoreMap p = match(fm, {ag::Tensor::from({1, 1}, {1.0})}, 1.0);
  CHECK(aux_loss(p, y).item() <= kProbEps * std::abs(std::log(kProbEps)));
}

TEST_CASE("aux loss equals a per-pixel loop") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<double> p(16), y(16), ignore(16, 0.0);
  for (std::size_t i = 0; i < 16; ++i) {
    p[i] = u(rng);
    y[i] = static_cast<double>(rng() % 2);
  }
  ignore[2] = ignore[11] = 1.0;
  const ScoreMap s{ag::Tensor::from({4, 4, 1}, p), 4, 1.0};

  double all = 0, kept = 0;
  std::size_t n_kept = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    all += bce(p[i], y[i]);
    if (ignore[i] == 0.0) {
      kept += bce(p[i], y[i]);
      ++n_kept;
    }
  }
  CHECK(std::abs(aux_loss(s, y).item() - all / 16.0) <= 1e-12);
  CHECK(std::abs(aux_loss(s, y, ignore).item() - kept / static_cast<double>(n_kept)) <= 1e-12);
}

TEST_CASE("aux loss rejects non-binary labels and mismatched sizes") {
  const ScoreMap s{ag::Tensor::full({2, 2, 1}, 0.3), 4, 1.0};
  CHECK_THROWS_AS(aux_loss(s, std::vector<double>{0, 1, 0.5, 1}), InvalidLabel);
  CHECK_THROWS_AS(aux_loss(s, std::vector<double>{0, 1, 1}), DimensionMismatch);
}

TEST_CASE("match plus aux loss gradients match finite differences") {
  FeatureMap fm = fmap(2, 2, 8, 24, true);
  ag::Tensor t = testing::random_tensor({1, 8}, 25, 0.3);
  ag::Tensor log_tau = ag::Tensor::scalar(std::log(0.7), true);
  const std::vector<double> y{1, 0, 1, 0}, ignore{0, 0, 0, 1};
  const double err = testing::gradcheck(
      [&] { return aux_loss(match(fm, {t}, ag::exp(log_tau)), y, ignore); }, {fm.data, t, log_tau});
  CHECK(err < 1e-4);
}

TEST_CASE("total loss assembly") {
  const LossBundle a = total_loss(0.3, 0.2, 1.0);
  CHECK(a.total == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(total_loss(0.3, 0.2, 0.0).total == 0.3);
  CHECK(total_loss(0.0, 0.0, 1.0).total == 0.0);
  const LossBundle b = total_loss(0.4, 0.25, 2.0);
  CHECK(b.total == b.det_loss + b.lambda * b.aux_loss);
  CHECK_THROWS_AS(total_loss(std::nan(""), 0.1, 1.0), NumericError);
  CHECK_THROWS_AS(total_loss(0.1, 0.1, -1.0), InvalidConfig);

  const ag::Tensor det = ag::Tensor::scalar(0.3, true), aux = ag::Tensor::scalar(0.2, true);
  const ag::Tensor off = total_loss(det, aux, 0.0);
  CHECK(off.item() == 0.3);
  off.backward();
  CHECK_FALSE(aux.has_grad());
}
