#include "tcm/prompting.hpp"

#include <cmath>

#include "tcm/errors.hpp"

namespace tcm {

ag::Tensor embed_predefined(std::string_view class_name, const TextEncoder& encoder) {
  return encoder.word_embedding(class_name);
}

PromptSequence assemble_prompt(const ag::Tensor& learnable, const ag::Tensor& predefined) {
  if (predefined.size() == 0 || ag::rows_of(predefined) != 1)
    throw DimensionMismatch("assemble_prompt: predefined embedding must be a single row, got " +
                            ag::shape_str(predefined.shape()));
  const std::size_t d = ag::cols_of(predefined);
  const ag::Tensor last = ag::reshape(predefined, {1, d});
  if (!learnable.defined() || learnable.size() == 0) return PromptSequence{last, 0};
  if (learnable.rank() != 2 || learnable.dim(1) != d)
    throw DimensionMismatch("assemble_prompt: learnable prompts " +
                            ag::shape_str(learnable.shape()) + " vs predefined dimension " +
                            std::to_string(d));
  return PromptSequence{ag::concat_rows({learnable, last}), learnable.dim(0)};
}

ag::Tensor init_learnable_prompts(std::size_t n, std::size_t dim, nn::Rng& rng) {
  if (n == 0) return ag::Tensor();
  return nn::normal_param({n, dim}, 0.02, rng);
}

LanguagePromptGenerator::LanguagePromptGenerator(std::size_t embed_dim, std::size_t word_dim,
                                                 nn::Rng& rng)
    : ln_in(embed_dim),
      fc1(embed_dim, embed_dim, rng),
      ln_mid(embed_dim),
      fc2(embed_dim, word_dim, rng) {}

void LanguagePromptGenerator::collect(nn::ParamList& out) const {
  const auto g = nn::ParamGroup::LanguageGen;
  ln_in.collect(out, "language_generator.ln_in", g);
  fc1.collect(out, "language_generator.fc1", g);
  ln_mid.collect(out, "language_generator.ln_mid", g);
  fc2.collect(out, "language_generator.fc2", g);
}

ConditionalCue generate_conditional_cue(const GlobalEmbedding& g,
                                        const LanguagePromptGenerator& lg) {
  const std::size_t c = lg.fc1.weight.dim(0);
  if (g.data.size() != c)
    throw DimensionMismatch("generate_conditional_cue: global embedding has " +
                            std::to_string(g.data.size()) + " entries, generator expects " +
                            std::to_string(c));
  const ag::Tensor x = ag::reshape(g.data, {1, c});
  const ag::Tensor hidden = ag::relu(lg.fc1(lg.ln_in(x)));
  ag::Tensor cc = lg.fc2(lg.ln_mid(hidden));
  for (double v : cc.values())
    if (!std::isfinite(v)) throw NumericError("conditional cue has non-finite entries");
  return ConditionalCue{cc};
}

PromptSequence condition_prompt(const PromptSequence& p, const ConditionalCue& cc) {
  if (cc.data.size() != ag::cols_of(p.tokens))
    throw DimensionMismatch("condition_prompt: cue of length " + std::to_string(cc.data.size()) +
                            " for prompt rows of dimension " +
                            std::to_string(ag::cols_of(p.tokens)));
  return PromptSequence{ag::add_rowvec(p.tokens, cc.data), p.n};
}

}  // namespace tcm
