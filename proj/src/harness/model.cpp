#include "tcm/harness/model.hpp"

#include <cmath>

#include "tcm/checkpoint.hpp"
#include "tcm/errors.hpp"

namespace tcm::harness {

namespace {

// Each component draws from its own stream so toggling one component never
// changes another's initialization.
nn::Rng stream(std::uint64_t seed, std::uint64_t component) {
  return nn::Rng(seed * 0x9E3779B97F4A7C15ull + component * 0xBF58476D1CE4E5B9ull + 1);
}

template <typename T>
T build(std::uint64_t seed, std::uint64_t component, auto&& make) {
  nn::Rng rng = stream(seed, component);
  return make(rng);
}

}  // namespace

TcmModel::TcmModel(const ModelConfig& cfg)
    : cfg_(cfg),
      image_(build<ImageEncoder>(cfg.encoder.seed, 1,
                                 [&](nn::Rng& r) { return ImageEncoder(cfg.encoder, r); })),
      text_(build<TextEncoder>(cfg.encoder.seed, 2,
                               [&](nn::Rng& r) { return TextEncoder(cfg.encoder, r); })) {
  const std::size_t c = cfg.encoder.embed_dim, d = cfg.encoder.word_dim;
  {
    nn::Rng r = stream(cfg.prompt_seed, 3);
    learnable_ = init_learnable_prompts(cfg.effective_n(), d, r);
    class_row_ = init_learnable_prompts(1, d, r);
  }
  if (cfg.use_pp) embed_predefined(cfg.predefined, text_);  // validates the class name
  lg_ = build<LanguagePromptGenerator>(cfg.encoder.seed, 4, [&](nn::Rng& r) {
    return LanguagePromptGenerator(c, d, r);
  });
  vg_ = build<VisualPromptGenerator>(cfg.encoder.seed, 5, [&](nn::Rng& r) {
    return VisualPromptGenerator(c, cfg.vg, r);
  });
  log_tau_ = ag::Tensor::scalar(std::log(cfg.tau_init), true);
  head_ = build<DetectionHead>(cfg.encoder.seed, 6, [&](nn::Rng& r) {
    return DetectionHead(c + (cfg.text_branch() ? 1 : 0), cfg.head, r);
  });
}

ForwardResult TcmModel::forward(const Image& image) const {
  ForwardResult out;
  out.image = image_.encode(image);
  out.fused = out.image;
  if (!cfg_.text_branch()) {
    out.prob = head_(out.fused, nullptr);
    return out;
  }
  const ag::Tensor class_row = cfg_.use_pp ? embed_predefined(cfg_.predefined, text_) : class_row_;
  PromptSequence prompt = assemble_prompt(learnable_, class_row);
  if (cfg_.use_lg) {
    out.cue = generate_conditional_cue(image_.attention_pool(out.image), lg_);
    prompt = condition_prompt(prompt, *out.cue);
  }
  out.text = text_.encode(prompt);
  if (cfg_.use_vg) {
    out.visual_prompt = vg_(out.image, *out.text);
    out.fused = fuse(out.image, *out.visual_prompt);
  }
  out.score = match(out.fused, *out.text, ag::exp(log_tau_));
  out.prob = head_(out.fused, &*out.score);
  return out;
}

LossTerms TcmModel::loss(const ForwardResult& fwd, const TargetMasks& targets) const {
  const ag::Tensor det = det_loss(fwd.prob, targets);
  ag::Tensor aux = ag::Tensor::scalar(0.0);
  if (fwd.score) aux = aux_loss(*fwd.score, targets.text_mask, targets.ignore_mask);
  LossTerms t;
  t.values = total_loss(det.item(), aux.item(), cfg_.lambda);
  t.total = total_loss(det, aux, cfg_.lambda);
  return t;
}

nn::ParamList TcmModel::parameters() const {
  nn::ParamList out;
  image_.collect_backbone(out);
  if (cfg_.text_branch()) {
    text_.collect(out);
    if (learnable_.defined()) out.push_back({"prompt.learnable", learnable_, nn::ParamGroup::Prompt});
    if (!cfg_.use_pp) out.push_back({"prompt.class_row", class_row_, nn::ParamGroup::Prompt});
    if (cfg_.use_lg) {
      image_.collect_pool(out);
      lg_.collect(out);
    }
    if (cfg_.use_vg) vg_.collect(out);
    out.push_back({"matching.log_tau", log_tau_, nn::ParamGroup::Matching});
  }
  head_.collect(out);
  return out;
}

void TcmModel::save(const std::string& path, const std::string& config_text) const {
  CheckpointHeader h;
  h.embed_dim = cfg_.encoder.embed_dim;
  h.word_dim = cfg_.encoder.word_dim;
  h.stride = cfg_.encoder.stride;
  h.encoder_kind = cfg_.encoder.toy_mode ? "toy" : "clip-r50";
  h.config_text = config_text;
  nn::ParamList params = parameters();
  // Encoder tensors are always written so the file doubles as an encoder
  // checkpoint for load_pretrained.
  if (!cfg_.text_branch()) text_.collect(params);
  if (!(cfg_.text_branch() && cfg_.use_lg)) image_.collect_pool(params);
  write_checkpoint(path, h, params);
}

TcmModel TcmModel::load(const std::string& path, std::string* config_text) {
  const Checkpoint ckpt = read_checkpoint(path);
  const ExperimentConfig cfg = ExperimentConfig::from(Config::parse(ckpt.header.config_text, path));
  TcmModel model(cfg.model);
  if (model.cfg_.encoder.embed_dim != ckpt.header.embed_dim ||
      model.cfg_.encoder.word_dim != ckpt.header.word_dim ||
      model.cfg_.encoder.stride != ckpt.header.stride)
    throw LoadError(path + ": header dims disagree with the embedded config");
  for (auto& p : model.parameters()) {
    const TensorBlob* blob = ckpt.find(p.name);
    if (blob == nullptr) throw LoadError(path + ": missing tensor " + p.name);
    if (blob->shape != p.tensor.shape())
      throw LoadError(path + ": tensor " + p.name + " has shape " + ag::shape_str(blob->shape) +
                      ", expected " + ag::shape_str(p.tensor.shape()));
    std::copy(blob->data.begin(), blob->data.end(), p.tensor.mutable_values().begin());
  }
  if (config_text) *config_text = ckpt.header.config_text;
  return model;
}

}  // namespace tcm::harness
