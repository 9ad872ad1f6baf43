#include "tcm/nn.hpp"

#include <cmath>

#include "tcm/errors.hpp"

namespace tcm::nn {

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::ImageEncoder: return "image_encoder";
    case ParamGroup::TextEncoder: return "text_encoder";
    case ParamGroup::Prompt: return "prompt";
    case ParamGroup::LanguageGen: return "language_generator";
    case ParamGroup::VisualGen: return "visual_generator";
    case ParamGroup::Matching: return "matching";
    case ParamGroup::Head: return "head";
  }
  return "unknown";
}

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

double Rng::normal(double stddev) {
  std::normal_distribution<double> d(0.0, stddev);
  return d(engine_);
}

double Rng::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(engine_);
}

ag::Tensor normal_param(ag::Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = rng.normal(stddev);
  return ag::Tensor::from(std::move(shape), std::move(v), true);
}

ag::Tensor uniform_param(ag::Shape shape, double bound, Rng& rng) {
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return ag::Tensor::from(std::move(shape), std::move(v), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(uniform_param({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)) {
  if (with_bias) bias = ag::Tensor::zeros({out}, true);
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  Linear l;
  l.weight = ag::Tensor::zeros({in, out}, true);
  l.bias = ag::Tensor::zeros({out}, true);
  return l;
}

void Linear::collect(ParamList& out, const std::string& prefix, ParamGroup g) const {
  out.push_back({prefix + ".weight", weight, g});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, g});
}

LayerNorm::LayerNorm(std::size_t dim)
    : gamma(ag::Tensor::full({dim}, 1.0, true)), beta(ag::Tensor::zeros({dim}, true)) {}

void LayerNorm::collect(ParamList& out, const std::string& prefix, ParamGroup g) const {
  out.push_back({prefix + ".gamma", gamma, g});
  out.push_back({prefix + ".beta", beta, g});
}

MultiHeadAttention::MultiHeadAttention(std::size_t width, std::size_t heads_, Rng& rng)
    : heads(heads_),
      q(width, width, rng),
      k(width, width, rng),
      v(width, width, rng),
      o(width, width, rng) {
  if (heads == 0 || width % heads != 0)
    throw InvalidConfig("attention width " + std::to_string(width) +
                        " is not divisible by head count " + std::to_string(heads));
}

ag::Tensor MultiHeadAttention::operator()(const ag::Tensor& query, const ag::Tensor& memory,
                                          AttentionTrace* trace) const {
  const std::size_t width = q.weight.dim(0);
  if (query.rank() != 2 || memory.rank() != 2 || query.dim(1) != width ||
      memory.dim(1) != width)
    throw DimensionMismatch("attention: query " + ag::shape_str(query.shape()) + ", memory " +
                            ag::shape_str(memory.shape()) + ", width " + std::to_string(width));
  const std::size_t dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const ag::Tensor qa = q(query), ka = k(memory), va = v(memory);
  std::vector<ag::Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const ag::Tensor qh = ag::slice_cols(qa, h * dh, (h + 1) * dh);
    const ag::Tensor kh = ag::slice_cols(ka, h * dh, (h + 1) * dh);
    const ag::Tensor vh = ag::slice_cols(va, h * dh, (h + 1) * dh);
    const ag::Tensor weights =
        ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt));
    if (trace) trace->weights.push_back(weights);
    outs.push_back(ag::matmul(weights, vh));
  }
  return o(heads == 1 ? outs.front() : ag::concat_cols(outs));
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix, ParamGroup g) const {
  q.collect(out, prefix + ".q", g);
  k.collect(out, prefix + ".k", g);
  v.collect(out, prefix + ".v", g);
  o.collect(out, prefix + ".o", g);
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel_, std::size_t stride_, Rng& rng)
    : kernel(kernel_),
      stride(stride_),
      pad(kernel_ / 2),
      weight(uniform_param({kernel_ * kernel_ * in, out},
                           std::sqrt(6.0 / static_cast<double>(kernel_ * kernel_ * in)), rng)),
      bias(ag::Tensor::zeros({out}, true)) {}

void Conv2d::collect(ParamList& out, const std::string& prefix, ParamGroup g) const {
  out.push_back({prefix + ".weight", weight, g});
  out.push_back({prefix + ".bias", bias, g});
}

}  // namespace tcm::nn
