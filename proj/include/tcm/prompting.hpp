#pragma once

// Text-encoder input assembly: the class token, learnable context rows, and
// the image-conditioned cue that is broadcast-added to every row.

#include <string_view>

#include "tcm/encoders.hpp"

namespace tcm {

// Word embedding of the predefined class string, [1, D].
ag::Tensor embed_predefined(std::string_view class_name, const TextEncoder& encoder);

// Learnable rows first (may be undefined when n = 0), class row last.
PromptSequence assemble_prompt(const ag::Tensor& learnable, const ag::Tensor& predefined);

// Zero-mean Gaussian rows with stddev 0.02.
ag::Tensor init_learnable_prompts(std::size_t n, std::size_t dim, nn::Rng& rng);

// cc = LN(ReLU(LN(g) W1 + b1)) W2 + b2
struct LanguagePromptGenerator {
  nn::LayerNorm ln_in;   // over C
  nn::Linear fc1;        // C -> C
  nn::LayerNorm ln_mid;  // over C
  nn::Linear fc2;        // C -> D

  LanguagePromptGenerator() = default;
  LanguagePromptGenerator(std::size_t embed_dim, std::size_t word_dim, nn::Rng& rng);

  void collect(nn::ParamList& out) const;
};

ConditionalCue generate_conditional_cue(const GlobalEmbedding& g,
                                        const LanguagePromptGenerator& lg);

// Adds cc to every row of the prompt, learnable rows included.
PromptSequence condition_prompt(const PromptSequence& p, const ConditionalCue& cc);

}  // namespace tcm
