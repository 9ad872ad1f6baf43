#pragma once

// SGD-with-momentum training loop and inference/evaluation over samples.

#include <functional>
#include <vector>

#include "tcm/evalkit.hpp"
#include "tcm/harness/dataset.hpp"
#include "tcm/harness/model.hpp"

namespace tcm::harness {

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  LossBundle loss;  // mean over the batch
};

// Learning-rate multiplier for a parameter group: the encoder factors come
// from EncoderConfig, everything else trains at the base rate.
double lr_factor(const ModelConfig& cfg, nn::ParamGroup g);

class Trainer {
 public:
  Trainer(TcmModel& model, const TrainOptions& opts);

  // One optimizer step over the given samples (a batch). Returns the
  // batch-mean losses.
  LossBundle step(const std::vector<const Sample*>& batch);

  // Runs opts.steps steps, visiting samples in a seeded per-epoch shuffle.
  std::vector<StepRecord> fit(const std::vector<Sample>& data,
                              const std::function<void(const StepRecord&)>& on_log = {});

  std::size_t steps_taken() const { return step_; }
  double current_lr() const;

 private:
  const TargetMasks& targets_for(const Sample& s);

  TcmModel& model_;
  TrainOptions opts_;
  nn::ParamList params_;
  std::vector<double> factors_;
  std::vector<std::vector<double>> velocity_;
  std::vector<std::pair<const Sample*, TargetMasks>> target_cache_;
  std::size_t step_ = 0;
};

// Inference on one image: per-pixel probabilities cropped to the image size.
std::vector<double> predict_probs(const TcmModel& model, const Image& image);
std::vector<TextInstance> predict(const TcmModel& model, const Image& image,
                                  const PostOptions& post);

EvalReport evaluate(const TcmModel& model, const std::vector<Sample>& data,
                    const PostOptions& post, const MatchOptions& match,
                    const std::string& name);

}  // namespace tcm::harness
