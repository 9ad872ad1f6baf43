#pragma once

// Image and text encoders. Toy mode builds small randomly initialized
// networks from a seed: a strided convolution stack for images and a
// pre-norm transformer for prompts. Real CLIP-R50 weights can be imported
// through the checkpoint format when the tensor names and shapes line up.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tcm/nn.hpp"
#include "tcm/types.hpp"

namespace tcm {

struct EncoderConfig {
  std::size_t embed_dim = 1024;  // C
  std::size_t word_dim = 512;    // D
  std::size_t stride = 32;       // s, a power of two
  double image_lr_factor = 0.1;
  double text_lr_factor = 0.0;
  bool toy_mode = true;
  std::size_t text_layers = 1;
  std::size_t text_heads = 4;
  std::size_t pool_heads = 4;
  std::size_t context_length = 77;
  std::uint64_t seed = 0;

  static EncoderConfig reference();
  // C=32, D=16, s=32; small enough for unit tests.
  static EncoderConfig toy();

  void validate() const;
};

// Toy normalization: (v - kPixelMean) / kPixelStd per channel, applied to
// [0, 1] pixels before zero padding.
inline constexpr double kPixelMean = 0.5;
inline constexpr double kPixelStd = 0.25;

std::size_t padded_extent(std::size_t pixels, std::size_t stride);

class ImageEncoder {
 public:
  ImageEncoder(const EncoderConfig& cfg, nn::Rng& rng);

  FeatureMap encode(const Image& image) const;
  GlobalEmbedding attention_pool(const FeatureMap& fm) const;

  // Conv backbone only; the pooling head is listed separately because only
  // the language prompt generator consumes it.
  void collect_backbone(nn::ParamList& out) const;
  void collect_pool(nn::ParamList& out) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<nn::Conv2d> stages_;
  nn::MultiHeadAttention pool_;
};

// Built-in single-token vocabulary used in toy mode.
const std::vector<std::string>& toy_vocabulary();

class TextEncoder {
 public:
  static constexpr double kProjectionStd = 0.01;

  TextEncoder(const EncoderConfig& cfg, nn::Rng& rng);

  TextEmbedding encode(const PromptSequence& prompt) const;
  // Row of the token table for a class string, [1, D].
  ag::Tensor word_embedding(std::string_view token) const;

  void collect(nn::ParamList& out) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    nn::LayerNorm ln1, ln2;
    nn::MultiHeadAttention attn;
    nn::Linear fc1, fc2;
  };

  EncoderConfig cfg_;
  ag::Tensor token_table_;  // [vocab, D]
  ag::Tensor positional_;   // [context_length, D]
  std::vector<Block> blocks_;
  nn::LayerNorm ln_final_;
  nn::Linear projection_;  // D -> C, no bias
};

FeatureMap encode_image(const Image& image, const ImageEncoder& encoder);
GlobalEmbedding attention_pool(const FeatureMap& fm, const ImageEncoder& encoder);
TextEmbedding encode_text(const PromptSequence& prompt, const TextEncoder& encoder);

struct LoadManifest {
  std::string source;
  std::string encoder_kind;
  std::size_t embed_dim = 0;
  std::size_t word_dim = 0;
  std::size_t stride = 0;
  std::size_t tensors_loaded = 0;
};

// Installs image_encoder.* and text_encoder.* tensors from a checkpoint.
// Throws NotFound for a missing file and LoadError naming the offending
// header field or tensor on any mismatch.
LoadManifest load_pretrained(const std::string& path, ImageEncoder& image,
                             TextEncoder& text);

}  // namespace tcm
