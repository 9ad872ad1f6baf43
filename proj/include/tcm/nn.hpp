#pragma once

// Parameterized building blocks shared by the encoders, prompt generators,
// and detection head. Each block owns its parameter tensors and can list
// them under a dotted name prefix.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tcm/ops.hpp"

namespace tcm::nn {

// Learning-rate group a parameter belongs to.
enum class ParamGroup { ImageEncoder, TextEncoder, Prompt, LanguageGen, VisualGen, Matching, Head };

const char* group_name(ParamGroup g);

struct NamedParam {
  std::string name;
  ag::Tensor tensor;
  ParamGroup group;
};
using ParamList = std::vector<NamedParam>;

std::size_t count_elements(const ParamList& params);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double normal(double stddev);
  double uniform(double lo, double hi);
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

ag::Tensor normal_param(ag::Shape shape, double stddev, Rng& rng);
ag::Tensor uniform_param(ag::Shape shape, double bound, Rng& rng);

struct Linear {
  ag::Tensor weight;  // [in, out]
  ag::Tensor bias;    // [out]; undefined when built without bias

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  static Linear zeros(std::size_t in, std::size_t out);

  ag::Tensor operator()(const ag::Tensor& x) const { return ag::linear(x, weight, bias); }
  void collect(ParamList& out, const std::string& prefix, ParamGroup g) const;
};

struct LayerNorm {
  static constexpr double kEps = 1e-5;
  ag::Tensor gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  ag::Tensor operator()(const ag::Tensor& x) const {
    return ag::layer_norm(x, gamma, beta, kEps);
  }
  void collect(ParamList& out, const std::string& prefix, ParamGroup g) const;
};

// Per-head attention probabilities recorded during a forward pass, one
// [queries, keys] tensor per head.
struct AttentionTrace {
  std::vector<ag::Tensor> weights;
};

struct MultiHeadAttention {
  std::size_t heads = 1;
  Linear q, k, v, o;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t width, std::size_t heads, Rng& rng);

  // query [Nq, width], memory [Nk, width] -> [Nq, width]
  ag::Tensor operator()(const ag::Tensor& query, const ag::Tensor& memory,
                        AttentionTrace* trace = nullptr) const;
  void collect(ParamList& out, const std::string& prefix, ParamGroup g) const;
};

struct Conv2d {
  std::size_t kernel = 3, stride = 1, pad = 1;
  ag::Tensor weight;  // [kernel*kernel*in, out]
  ag::Tensor bias;    // [out]

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng);

  ag::Tensor operator()(const ag::Tensor& x) const {
    return ag::conv2d(x, weight, bias, kernel, stride, pad);
  }
  void collect(ParamList& out, const std::string& prefix, ParamGroup g) const;
};

}  // namespace tcm::nn
