#include "tcm/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "tcm/checkpoint.hpp"
#include "tcm/errors.hpp"

namespace tcm {

EncoderConfig EncoderConfig::reference() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c;
  c.embed_dim = 32;
  c.word_dim = 16;
  c.stride = 32;
  c.text_heads = 2;
  c.pool_heads = 2;
  return c;
}

void EncoderConfig::validate() const {
  if (embed_dim == 0 || word_dim == 0 || stride == 0)
    throw InvalidConfig("encoder dims C, D and stride s must be positive");
  if ((stride & (stride - 1)) != 0 || stride < 2)
    throw InvalidConfig("encoder stride must be a power of two >= 2, got " +
                        std::to_string(stride));
  if (!(image_lr_factor >= 0.0) || !(text_lr_factor >= 0.0))
    throw InvalidConfig("learning-rate factors must be >= 0");
  if (embed_dim % pool_heads != 0)
    throw InvalidConfig("C must be divisible by pool_heads");
  if (word_dim % text_heads != 0)
    throw InvalidConfig("D must be divisible by text_heads");
}

std::size_t padded_extent(std::size_t pixels, std::size_t stride) {
  return (pixels + stride - 1) / stride * stride;
}

ImageEncoder::ImageEncoder(const EncoderConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t levels = 0;
  for (std::size_t s = cfg_.stride; s > 1; s >>= 1) ++levels;
  std::size_t in = 3;
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t out =
        i + 1 == levels ? cfg_.embed_dim : std::min<std::size_t>(16u << i, cfg_.embed_dim);
    stages_.emplace_back(in, out, 3, 2, rng);
    in = out;
  }
  pool_ = nn::MultiHeadAttention(cfg_.embed_dim, cfg_.pool_heads, rng);
}

FeatureMap ImageEncoder::encode(const Image& image) const {
  const std::size_t s = cfg_.stride;
  if (image.height < s || image.width < s)
    throw InvalidInput("image " + std::to_string(image.height) + "x" +
                       std::to_string(image.width) + " is smaller than one stride cell (" +
                       std::to_string(s) + ")");
  if (image.pixels.size() != image.height * image.width * 3)
    throw InvalidInput("image pixel buffer does not match its size");
  const std::size_t ph = padded_extent(image.height, s);
  const std::size_t pw = padded_extent(image.width, s);
  std::vector<double> buf(ph * pw * 3, 0.0);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = image.at(y, x, c);
        if (!std::isfinite(v)) throw InvalidInput("image contains non-finite pixel values");
        buf[(y * pw + x) * 3 + c] = (v - kPixelMean) / kPixelStd;
      }
  ag::Tensor x = ag::Tensor::from({ph, pw, 3}, std::move(buf));
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    x = stages_[i](x);
    if (i + 1 < stages_.size()) x = ag::relu(x);
  }
  return FeatureMap{x, s, image.height, image.width};
}

GlobalEmbedding ImageEncoder::attention_pool(const FeatureMap& fm) const {
  if (fm.channels() != cfg_.embed_dim)
    throw DimensionMismatch("attention_pool: feature map has " + std::to_string(fm.channels()) +
                            " channels, encoder expects " + std::to_string(cfg_.embed_dim));
  const ag::Tensor tokens = ag::reshape(fm.data, {fm.grid_h() * fm.grid_w(), fm.channels()});
  return GlobalEmbedding{pool_(ag::mean_rows(tokens), tokens)};
}

void ImageEncoder::collect_backbone(nn::ParamList& out) const {
  for (std::size_t i = 0; i < stages_.size(); ++i)
    stages_[i].collect(out, "image_encoder.stage" + std::to_string(i),
                       nn::ParamGroup::ImageEncoder);
}

void ImageEncoder::collect_pool(nn::ParamList& out) const {
  pool_.collect(out, "image_encoder.attnpool", nn::ParamGroup::ImageEncoder);
}

const std::vector<std::string>& toy_vocabulary() {
  static const std::vector<std::string> vocab{"<start>", "<end>",   "Text",   "text",
                                              "Word",    "Character", "Sign", "Letter"};
  return vocab;
}

TextEncoder::TextEncoder(const EncoderConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.word_dim;
  token_table_ = nn::normal_param({toy_vocabulary().size(), d}, 0.02, rng);
  positional_ = nn::normal_param({cfg_.context_length, d}, 0.01, rng);
  for (std::size_t i = 0; i < cfg_.text_layers; ++i) {
    Block b;
    b.ln1 = nn::LayerNorm(d);
    b.ln2 = nn::LayerNorm(d);
    b.attn = nn::MultiHeadAttention(d, cfg_.text_heads, rng);
    b.fc1 = nn::Linear(d, 4 * d, rng);
    b.fc2 = nn::Linear(4 * d, d, rng);
    blocks_.push_back(std::move(b));
  }
  ln_final_ = nn::LayerNorm(d);
  // Small enough that <I, t> / tau starts near unit scale at tau = 0.07;
  // with a wider projection the score map saturates before training and the
  // clamped sigmoid passes no gradient.
  projection_.weight = nn::normal_param({d, cfg_.embed_dim}, kProjectionStd, rng);
}

TextEmbedding TextEncoder::encode(const PromptSequence& prompt) const {
  const ag::Tensor& t = prompt.tokens;
  if (t.rank() != 2 || t.dim(1) != cfg_.word_dim)
    throw DimensionMismatch("encode_text: prompt tokens " + ag::shape_str(t.shape()) +
                            ", expected rows of dimension D=" + std::to_string(cfg_.word_dim));
  const std::size_t len = t.dim(0);
  if (len == 0 || len > cfg_.context_length)
    throw DimensionMismatch("encode_text: prompt length " + std::to_string(len) +
                            " outside [1, " + std::to_string(cfg_.context_length) + "]");
  ag::Tensor x = ag::add(t, ag::slice_rows(positional_, 0, len));
  for (const Block& b : blocks_) {
    const ag::Tensor h = b.ln1(x);
    x = ag::add(x, b.attn(h, h));
    x = ag::add(x, b.fc2(ag::relu(b.fc1(b.ln2(x)))));
  }
  // The class token sits in the last row; its state summarizes the prompt.
  return TextEmbedding{projection_(ln_final_(ag::slice_rows(x, len - 1, len)))};
}

ag::Tensor TextEncoder::word_embedding(std::string_view token) const {
  const auto& vocab = toy_vocabulary();
  const auto it = std::find(vocab.begin(), vocab.end(), token);
  if (it == vocab.end() || it->front() == '<')
    throw VocabularyError("class name '" + std::string(token) + "' is not in the vocabulary");
  const auto id = static_cast<std::size_t>(it - vocab.begin());
  return ag::slice_rows(token_table_, id, id + 1);
}

void TextEncoder::collect(nn::ParamList& out) const {
  const auto g = nn::ParamGroup::TextEncoder;
  out.push_back({"text_encoder.token_table", token_table_, g});
  out.push_back({"text_encoder.positional", positional_, g});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "text_encoder.block" + std::to_string(i);
    blocks_[i].ln1.collect(out, p + ".ln1", g);
    blocks_[i].attn.collect(out, p + ".attn", g);
    blocks_[i].ln2.collect(out, p + ".ln2", g);
    blocks_[i].fc1.collect(out, p + ".fc1", g);
    blocks_[i].fc2.collect(out, p + ".fc2", g);
  }
  ln_final_.collect(out, "text_encoder.ln_final", g);
  projection_.collect(out, "text_encoder.projection", g);
}

FeatureMap encode_image(const Image& image, const ImageEncoder& encoder) {
  return encoder.encode(image);
}

GlobalEmbedding attention_pool(const FeatureMap& fm, const ImageEncoder& encoder) {
  return encoder.attention_pool(fm);
}

TextEmbedding encode_text(const PromptSequence& prompt, const TextEncoder& encoder) {
  return encoder.encode(prompt);
}

LoadManifest load_pretrained(const std::string& path, ImageEncoder& image, TextEncoder& text) {
  if (!std::filesystem::exists(path)) throw NotFound("checkpoint not found: " + path);
  const Checkpoint ckpt = read_checkpoint(path);
  const EncoderConfig& cfg = image.config();
  auto check_field = [](const char* field, std::size_t got, std::size_t want) {
    if (got != want)
      throw LoadError("checkpoint field " + std::string(field) + " is " + std::to_string(got) +
                      " but the encoder is configured for " + std::to_string(want));
  };
  check_field("C", ckpt.header.embed_dim, cfg.embed_dim);
  check_field("D", ckpt.header.word_dim, cfg.word_dim);
  check_field("s", ckpt.header.stride, cfg.stride);

  nn::ParamList params;
  image.collect_backbone(params);
  image.collect_pool(params);
  text.collect(params);
  LoadManifest manifest{path, ckpt.header.encoder_kind, ckpt.header.embed_dim,
                        ckpt.header.word_dim, ckpt.header.stride, 0};
  for (auto& p : params) {
    const TensorBlob* blob = ckpt.find(p.name);
    if (blob == nullptr) throw LoadError("checkpoint is missing tensor " + p.name);
    if (blob->shape != p.tensor.shape())
      throw LoadError("tensor " + p.name + " has shape " + ag::shape_str(blob->shape) +
                      " in the checkpoint, expected " + ag::shape_str(p.tensor.shape()));
    std::copy(blob->data.begin(), blob->data.end(), p.tensor.mutable_values().begin());
    ++manifest.tensors_loaded;
  }
  return manifest;
}

}  // namespace tcm
