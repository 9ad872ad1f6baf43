#pragma once

// Visual prompt generation (image queries cross-attending to the text
// embedding), residual fusion, pixel-text matching, and loss assembly.

#include <span>

#include "tcm/nn.hpp"
#include "tcm/types.hpp"

namespace tcm {

struct VisualPromptConfig {
  std::size_t depth = 3;
  std::size_t heads = 4;
  std::size_t width = 256;
  std::size_t ffn_dim = 1024;
  bool positional = true;
};

// Transformer decoder over H*W image tokens with the single text token as
// memory. Pre-norm layers: self-attention, cross-attention, feed-forward.
// in_proj maps both streams from C to the decoder width; out_proj maps back
// and is zero-initialized so the generator starts as the zero map.
class VisualPromptGenerator {
 public:
  VisualPromptGenerator() = default;
  VisualPromptGenerator(std::size_t embed_dim, const VisualPromptConfig& cfg, nn::Rng& rng);

  // Cross-attention weights are appended to `cross_trace` when given.
  FeatureMap operator()(const FeatureMap& fm, const TextEmbedding& t,
                        nn::AttentionTrace* cross_trace = nullptr) const;

  void collect(nn::ParamList& out) const;
  const VisualPromptConfig& config() const { return cfg_; }
  void set_positional(bool on) { cfg_.positional = on; }

  nn::Linear& out_proj() { return out_proj_; }

 private:
  struct Layer {
    nn::LayerNorm ln_self, ln_cross, ln_ffn;
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::Linear fc1, fc2;
  };

  std::size_t embed_dim_ = 0;
  VisualPromptConfig cfg_;
  nn::Linear in_proj_;
  std::vector<Layer> layers_;
  nn::LayerNorm ln_out_;
  nn::Linear out_proj_;
};

// 2-D sinusoidal table, [h*w, width]: first half of the channels encodes the
// row, second half the column.
ag::Tensor sinusoidal_positions(std::size_t h, std::size_t w, std::size_t width);

FeatureMap generate_visual_prompt(const FeatureMap& fm, const TextEmbedding& t,
                                  const VisualPromptGenerator& vg);

// Elementwise I + I~.
FeatureMap fuse(const FeatureMap& fm, const FeatureMap& vp);

inline constexpr double kProbEps = 1e-7;

// P = clamp(sigmoid(<I^, t> / tau), eps, 1 - eps). tau is a single-element
// tensor so it can be learned.
ScoreMap match(const FeatureMap& fm_hat, const TextEmbedding& t, const ag::Tensor& tau);
ScoreMap match(const FeatureMap& fm_hat, const TextEmbedding& t, double tau);

// Mean binary cross-entropy of P against y in {0,1} over positions whose
// ignore flag is 0 (all positions when `ignore` is empty).
ag::Tensor aux_loss(const ScoreMap& p, std::span<const double> y,
                    std::span<const double> ignore = {});

struct LossBundle {
  double det_loss = 0.0;
  double aux_loss = 0.0;
  double lambda = 1.0;
  double total = 0.0;
};

LossBundle total_loss(double det, double aux, double lambda);
// Differentiable form: det + lambda * aux.
ag::Tensor total_loss(const ag::Tensor& det, const ag::Tensor& aux, double lambda);

}  // namespace tcm
