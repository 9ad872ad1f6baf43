#pragma once

// Value types passed between pipeline stages. Each wraps an autograd tensor
// so gradients can flow across stage boundaries.

#include <cstddef>
#include <vector>

#include "tcm/tensor.hpp"

namespace tcm {

// RGB image, row-major H x W x 3, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
};

// Spatial embedding grid: data has shape [grid_h, grid_w, channels].
struct FeatureMap {
  ag::Tensor data;
  std::size_t stride = 1;
  std::size_t source_h = 0;  // unpadded input size in pixels
  std::size_t source_w = 0;

  std::size_t grid_h() const { return data.dim(0); }
  std::size_t grid_w() const { return data.dim(1); }
  std::size_t channels() const { return data.dim(2); }
};

struct GlobalEmbedding {
  ag::Tensor data;  // [1, C]
};

// Embedding of the single text class, [1, C].
struct TextEmbedding {
  ag::Tensor data;
};

// Text-encoder input: n learnable rows followed by the class row, [n+1, D].
struct PromptSequence {
  ag::Tensor tokens;
  std::size_t n = 0;
};

struct ConditionalCue {
  ag::Tensor data;  // [1, D]
};

// Per-cell text probability at feature resolution, [grid_h, grid_w, 1].
struct ScoreMap {
  ag::Tensor probs;
  std::size_t stride = 1;
  double temperature_used = 0.0;
};

}  // namespace tcm
