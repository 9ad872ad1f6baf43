#include "tcm/cross_modal.hpp"

#include <cmath>

#include "tcm/errors.hpp"

namespace tcm {

VisualPromptGenerator::VisualPromptGenerator(std::size_t embed_dim, const VisualPromptConfig& cfg,
                                             nn::Rng& rng)
    : embed_dim_(embed_dim), cfg_(cfg) {
  if (cfg_.depth == 0 || cfg_.width == 0 || cfg_.ffn_dim == 0)
    throw InvalidConfig("visual prompt generator needs positive depth, width and ffn_dim");
  if (cfg_.width % cfg_.heads != 0)
    throw InvalidConfig("decoder width " + std::to_string(cfg_.width) +
                        " is not divisible by heads " + std::to_string(cfg_.heads));
  in_proj_ = nn::Linear(embed_dim, cfg_.width, rng);
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    Layer l;
    l.ln_self = nn::LayerNorm(cfg_.width);
    l.ln_cross = nn::LayerNorm(cfg_.width);
    l.ln_ffn = nn::LayerNorm(cfg_.width);
    l.self_attn = nn::MultiHeadAttention(cfg_.width, cfg_.heads, rng);
    l.cross_attn = nn::MultiHeadAttention(cfg_.width, cfg_.heads, rng);
    l.fc1 = nn::Linear(cfg_.width, cfg_.ffn_dim, rng);
    l.fc2 = nn::Linear(cfg_.ffn_dim, cfg_.width, rng);
    layers_.push_back(std::move(l));
  }
  ln_out_ = nn::LayerNorm(cfg_.width);
  out_proj_ = nn::Linear::zeros(cfg_.width, embed_dim);
}

ag::Tensor sinusoidal_positions(std::size_t h, std::size_t w, std::size_t width) {
  std::vector<double> table(h * w * width, 0.0);
  const std::size_t half = width / 2;
  auto encode = [](double pos, std::size_t k, std::size_t dims) {
    // Channel pairs (2j, 2j+1) share frequency 1 / 10000^(2j/dims).
    const double freq = std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(dims));
    return k % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double* row = table.data() + (y * w + x) * width;
      for (std::size_t k = 0; k < half; ++k) row[k] = encode(static_cast<double>(y), k, half);
      for (std::size_t k = half; k < width; ++k)
        row[k] = encode(static_cast<double>(x), k - half, width - half);
    }
  return ag::Tensor::from({h * w, width}, std::move(table));
}

FeatureMap VisualPromptGenerator::operator()(const FeatureMap& fm, const TextEmbedding& t,
                                             nn::AttentionTrace* cross_trace) const {
  if (fm.channels() != embed_dim_ || t.data.size() != embed_dim_)
    throw DimensionMismatch("visual prompt generator expects C=" + std::to_string(embed_dim_) +
                            ", got feature map with " + std::to_string(fm.channels()) +
                            " channels and text embedding of length " +
                            std::to_string(t.data.size()));
  const std::size_t h = fm.grid_h(), w = fm.grid_w();
  ag::Tensor x = in_proj_(ag::reshape(fm.data, {h * w, embed_dim_}));
  if (cfg_.positional) x = ag::add(x, sinusoidal_positions(h, w, cfg_.width));
  const ag::Tensor memory = in_proj_(ag::reshape(t.data, {1, embed_dim_}));
  for (const Layer& l : layers_) {
    const ag::Tensor q = l.ln_self(x);
    x = ag::add(x, l.self_attn(q, q));
    x = ag::add(x, l.cross_attn(l.ln_cross(x), memory, cross_trace));
    x = ag::add(x, l.fc2(ag::relu(l.fc1(l.ln_ffn(x)))));
  }
  const ag::Tensor out = out_proj_(ln_out_(x));
  return FeatureMap{ag::reshape(out, {h, w, embed_dim_}), fm.stride, fm.source_h, fm.source_w};
}

void VisualPromptGenerator::collect(nn::ParamList& out) const {
  const auto g = nn::ParamGroup::VisualGen;
  in_proj_.collect(out, "visual_generator.in_proj", g);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "visual_generator.layer" + std::to_string(i);
    layers_[i].ln_self.collect(out, p + ".ln_self", g);
    layers_[i].self_attn.collect(out, p + ".self_attn", g);
    layers_[i].ln_cross.collect(out, p + ".ln_cross", g);
    layers_[i].cross_attn.collect(out, p + ".cross_attn", g);
    layers_[i].ln_ffn.collect(out, p + ".ln_ffn", g);
    layers_[i].fc1.collect(out, p + ".fc1", g);
    layers_[i].fc2.collect(out, p + ".fc2", g);
  }
  ln_out_.collect(out, "visual_generator.ln_out", g);
  out_proj_.collect(out, "visual_generator.out_proj", g);
}

FeatureMap generate_visual_prompt(const FeatureMap& fm, const TextEmbedding& t,
                                  const VisualPromptGenerator& vg) {
  return vg(fm, t);
}

FeatureMap fuse(const FeatureMap& fm, const FeatureMap& vp) {
  if (fm.data.shape() != vp.data.shape())
    throw DimensionMismatch("fuse: " + ag::shape_str(fm.data.shape()) + " vs " +
                            ag::shape_str(vp.data.shape()));
  return FeatureMap{ag::add(fm.data, vp.data), fm.stride, fm.source_h, fm.source_w};
}

ScoreMap match(const FeatureMap& fm_hat, const TextEmbedding& t, const ag::Tensor& tau) {
  if (tau.size() != 1 || !(tau[0] > 0.0))
    throw InvalidConfig("matching temperature must be a positive scalar");
  const std::size_t c = fm_hat.channels();
  if (t.data.size() != c)
    throw DimensionMismatch("match: feature map has " + std::to_string(c) +
                            " channels, text embedding has " + std::to_string(t.data.size()));
  const std::size_t h = fm_hat.grid_h(), w = fm_hat.grid_w();
  const ag::Tensor logits = ag::div_scalar(
      ag::matmul(ag::reshape(fm_hat.data, {h * w, c}), ag::reshape(t.data, {c, 1})), tau);
  const ag::Tensor probs = ag::clamp(ag::sigmoid(logits), kProbEps, 1.0 - kProbEps);
  return ScoreMap{ag::reshape(probs, {h, w, 1}), fm_hat.stride, tau[0]};
}

ScoreMap match(const FeatureMap& fm_hat, const TextEmbedding& t, double tau) {
  return match(fm_hat, t, ag::Tensor::scalar(tau));
}

ag::Tensor aux_loss(const ScoreMap& p, std::span<const double> y, std::span<const double> ignore) {
  const std::size_t n = p.probs.size();
  if (y.size() != n || (!ignore.empty() && ignore.size() != n))
    throw DimensionMismatch("aux_loss: score map has " + std::to_string(n) +
                            " cells, mask has " + std::to_string(y.size()));
  std::vector<double> keep(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0)
      throw InvalidLabel("aux_loss: mask value " + std::to_string(y[i]) + " is not 0 or 1");
    if (!ignore.empty() && ignore[i] != 0.0) keep[i] = 0.0;
  }
  return ag::bce_mean(p.probs, y, keep, kProbEps);
}

LossBundle total_loss(double det, double aux, double lambda) {
  if (!std::isfinite(det) || !std::isfinite(aux) || !std::isfinite(lambda))
    throw NumericError("total_loss: non-finite input");
  if (lambda < 0.0) throw InvalidConfig("total_loss: lambda must be >= 0");
  return LossBundle{det, aux, lambda, det + lambda * aux};
}

ag::Tensor total_loss(const ag::Tensor& det, const ag::Tensor& aux, double lambda) {
  total_loss(det.item(), aux.item(), lambda);  // same validation as the scalar form
  if (lambda == 0.0) return det;
  return ag::add_scalars(det, ag::scale(aux, lambda));
}

}  // namespace tcm
