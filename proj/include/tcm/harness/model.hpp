#pragma once

// Full detector: encoders, prompt path, visual prompt generator, matching,
// and the segmentation head, wired according to the TCM toggles.

#include <optional>
#include <string>

#include "tcm/cross_modal.hpp"
#include "tcm/detector.hpp"
#include "tcm/encoders.hpp"
#include "tcm/harness/config.hpp"
#include "tcm/prompting.hpp"

namespace tcm::harness {

struct ForwardResult {
  FeatureMap image;                         // I
  std::optional<FeatureMap> visual_prompt;  // I~ (VG on)
  FeatureMap fused;                         // I^ (= I when VG is off)
  std::optional<TextEmbedding> text;
  std::optional<ConditionalCue> cue;
  std::optional<ScoreMap> score;            // P (text branch on)
  ag::Tensor prob;                          // [H_pad, W_pad, 1]
};

struct LossTerms {
  ag::Tensor total;
  LossBundle values;
};

class TcmModel {
 public:
  explicit TcmModel(const ModelConfig& cfg);

  ForwardResult forward(const Image& image) const;
  LossTerms loss(const ForwardResult& fwd, const TargetMasks& targets) const;

  // Parameters that take part in the forward pass under the current toggles.
  nn::ParamList parameters() const;
  std::size_t parameter_count() const { return nn::count_elements(parameters()); }

  const ModelConfig& config() const { return cfg_; }
  ImageEncoder& image_encoder() { return image_; }
  TextEncoder& text_encoder() { return text_; }
  VisualPromptGenerator& visual_generator() { return vg_; }
  LanguagePromptGenerator& language_generator() { return lg_; }
  const ag::Tensor& learnable_prompts() const { return learnable_; }
  const ag::Tensor& log_tau() const { return log_tau_; }

  // Checkpoint of every participating tensor; the config text lets
  // load() rebuild the same architecture.
  void save(const std::string& path, const std::string& config_text) const;
  static TcmModel load(const std::string& path, std::string* config_text = nullptr);

 private:
  ModelConfig cfg_;
  ImageEncoder image_;
  TextEncoder text_;
  ag::Tensor learnable_;  // [n, D] or undefined
  ag::Tensor class_row_;  // [1, D], used when the predefined prompt is off
  LanguagePromptGenerator lg_;
  VisualPromptGenerator vg_;
  ag::Tensor log_tau_;    // [1]
  DetectionHead head_;
};

}  // namespace tcm::harness
