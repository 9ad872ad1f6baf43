#include <doctest.h>

#include "support.hpp"
#include "tcm/errors.hpp"
#include "tcm/prompting.hpp"

using namespace tcm;

namespace {

EncoderConfig tiny() {
  EncoderConfig c = EncoderConfig::toy();
  c.embed_dim = 8;
  c.word_dim = 6;
  c.stride = 4;
  c.text_heads = 2;
  c.pool_heads = 2;
  return c;
}

std::vector<double> vals(const ag::Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("predefined prompt lookups") {
  nn::Rng rng(0);
  const TextEncoder enc(EncoderConfig::reference(), rng);
  const ag::Tensor a = embed_predefined("Text", enc), b = embed_predefined("Text", enc);
  CHECK(a.size() == 512);
  CHECK(vals(a) == vals(b));
  CHECK_THROWS_AS(embed_predefined("NotInVocab", enc), VocabularyError);
  CHECK_THROWS_AS(embed_predefined("<start>", enc), VocabularyError);
  CHECK(vals(embed_predefined("Word", enc)) != vals(a));
}

TEST_CASE("assemble_prompt stacks learnable rows above the class row") {
  nn::Rng rng(1);
  const ag::Tensor cls = nn::normal_param({1, 512}, 1.0, rng);
  for (std::size_t n : {4u, 32u}) {
    const PromptSequence p = assemble_prompt(init_learnable_prompts(n, 512, rng), cls);
    CHECK(p.tokens.shape() == ag::Shape{n + 1, 512});
    CHECK(p.n == n);
    CHECK(vals(ag::slice_rows(p.tokens, n, n + 1)) == vals(cls));
  }
  const PromptSequence only = assemble_prompt(init_learnable_prompts(0, 512, rng), cls);
  CHECK(only.tokens.shape() == ag::Shape{1, 512});
  CHECK(only.n == 0);
  CHECK(vals(only.tokens) == vals(cls));
  CHECK_THROWS_AS(assemble_prompt(nn::normal_param({2, 511}, 1.0, rng), cls), DimensionMismatch);
}

TEST_CASE("learnable prompt init is zero-mean with std 0.02") {
  nn::Rng rng(2);
  const ag::Tensor t = init_learnable_prompts(200, 50, rng);
  double m = 0, s = 0;
  for (double v : t.values()) m += v;
  m /= static_cast<double>(t.size());
  for (double v : t.values()) s += (v - m) * (v - m);
  s = std::sqrt(s / static_cast<double>(t.size()));
  CHECK(std::abs(m) < 0.002);
  CHECK(s == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("conditional cue of a constant embedding reduces to LN(ReLU(b1)) W2 + b2") {
  nn::Rng rng(3);
  LanguagePromptGenerator lg(8, 6, rng);
  testing::randomize(lg.fc1.bias, 4, 1.0);
  testing::randomize(lg.fc2.bias, 5, 1.0);
  const GlobalEmbedding g{ag::Tensor::full({1, 8}, 2.5)};
  const ag::Tensor expected =
      lg.fc2(lg.ln_mid(ag::relu(ag::reshape(lg.fc1.bias, {1, 8}))));
  const auto cc = generate_conditional_cue(g, lg).data;
  REQUIRE(cc.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(cc[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("zero W2 makes the cue equal b2 for every image") {
  nn::Rng rng(6);
  LanguagePromptGenerator lg(8, 6, rng);
  for (double& v : lg.fc2.weight.mutable_values()) v = 0.0;
  testing::randomize(lg.fc2.bias, 7, 1.0);
  for (std::uint64_t seed : {8u, 9u}) {
    const GlobalEmbedding g{testing::random_tensor({1, 8}, seed, 1.0, false)};
    CHECK(vals(generate_conditional_cue(g, lg).data) == vals(lg.fc2.bias));
  }
}

TEST_CASE("language generator gradients match finite differences") {
  nn::Rng rng(10);
  LanguagePromptGenerator lg(8, 6, rng);
  // Move LN affine parameters off their identity init so they are exercised.
  testing::randomize(lg.ln_in.gamma, 11, 1.0);
  testing::randomize(lg.ln_mid.beta, 12, 0.5);
  testing::randomize(lg.fc1.bias, 13, 0.5);
  ag::Tensor g = testing::random_tensor({1, 8}, 14);
  const ag::Tensor w = testing::random_tensor({6}, 15, 1.0, false);
  nn::ParamList params;
  lg.collect(params);
  std::vector<ag::Tensor> wrt = testing::tensors_of(params);
  wrt.push_back(g);
  const double err = testing::gradcheck(
      [&] {
        return ag::sum(ag::mul(ag::reshape(generate_conditional_cue({g}, lg).data, {6}), w));
      },
      wrt);
  CHECK(err < 1e-4);
}

TEST_CASE("condition_prompt broadcast-adds the cue to every row") {
  nn::Rng rng(16);
  const PromptSequence p{nn::normal_param({5, 6}, 1.0, rng), 4};
  const ConditionalCue zero{ag::Tensor::zeros({1, 6})};
  CHECK(vals(condition_prompt(p, zero).tokens) == vals(p.tokens));

  const ConditionalCue v{nn::normal_param({1, 6}, 1.0, rng)};
  const PromptSequence z{ag::Tensor::zeros({5, 6}), 4};
  const auto rows = vals(condition_prompt(z, v).tokens);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c) CHECK(rows[r * 6 + c] == v.data[c]);

  const auto out = vals(condition_prompt(p, v).tokens);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c)
      CHECK(out[r * 6 + c] - p.tokens[r * 6 + c] == doctest::Approx(out[c] - p.tokens[c]));
  CHECK_THROWS_AS(condition_prompt(p, ConditionalCue{ag::Tensor::zeros({1, 5})}), DimensionMismatch);
}

TEST_CASE("condition_prompt is affine in the cue") {
  nn::Rng rng(17);
  const PromptSequence p{nn::normal_param({3, 6}, 1.0, rng), 2};
  const ag::Tensor c1 = nn::normal_param({1, 6}, 1.0, rng), c2 = nn::normal_param({1, 6}, 1.0, rng);
  const double a = 0.7, b = -1.3;
  const auto lhs = vals(condition_prompt(p, {ag::add(ag::scale(c1, a), ag::scale(c2, b))}).tokens);
  const auto r1 = vals(condition_prompt(p, {c1}).tokens), r2 = vals(condition_prompt(p, {c2}).tokens);
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(lhs[i] == doctest::Approx(a * r1[i] + b * r2[i] - (a + b - 1) * p.tokens[i]).epsilon(1e-12));
}

TEST_CASE("cue length is D whatever the feature map size") {
  nn::Rng rng(18);
  const ImageEncoder img(tiny(), rng);
  const LanguagePromptGenerator lg(8, 6, rng);
  for (auto [h, w] : {std::pair{1u, 1u}, {2u, 3u}, {5u, 4u}}) {
    const FeatureMap fm{testing::random_tensor({h, w, 8}, h * 10 + w, 1.0, false), 4, h * 4, w * 4};
    CHECK(generate_conditional_cue(img.attention_pool(fm), lg).data.size() == 6);
  }
}

TEST_CASE("every generator parameter and prompt row gets a gradient") {
  nn::Rng rng(19);
  const EncoderConfig cfg = tiny();
  const ImageEncoder img(cfg, rng);
  const TextEncoder txt(cfg, rng);
  const LanguagePromptGenerator lg(8, 6, rng);
  const ag::Tensor learnable = init_learnable_prompts(4, 6, rng);
  const FeatureMap fm{testing::random_tensor({2, 3, 8}, 20, 1.0, false), 4, 8, 12};
  const ag::Tensor w = testing::random_tensor({8}, 21, 1.0, false);

  const ConditionalCue cc = generate_conditional_cue(img.attention_pool(fm), lg);
  const PromptSequence p =
      condition_prompt(assemble_prompt(learnable, embed_predefined("Text", txt)), cc);
  ag::sum(ag::mul(ag::reshape(txt.encode(p).data, {8}), w)).backward();

  nn::ParamList params;
  lg.collect(params);
  for (const auto& prm : params) {
    CAPTURE(prm.name);
    const auto g = prm.tensor.grad();
    CHECK(std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; }));
  }
  const auto g = learnable.grad();
  for (std::size_t r = 0; r < 4; ++r) {
    CAPTURE(r);
    CHECK(std::any_of(g.begin() + static_cast<long>(r * 6), g.begin() + static_cast<long>(r * 6 + 6),
                      [](double v) { return v != 0.0; }));
  }
}
