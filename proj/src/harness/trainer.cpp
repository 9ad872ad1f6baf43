#include "tcm/harness/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tcm/errors.hpp"

namespace tcm::harness {

double lr_factor(const ModelConfig& cfg, nn::ParamGroup g) {
  switch (g) {
    case nn::ParamGroup::ImageEncoder: return cfg.encoder.image_lr_factor;
    case nn::ParamGroup::TextEncoder: return cfg.encoder.text_lr_factor;
    default: return 1.0;
  }
}

Trainer::Trainer(TcmModel& model, const TrainOptions& opts)
    : model_(model), opts_(opts), params_(model.parameters()) {
  if (opts_.batch == 0) throw InvalidConfig("train.batch must be >= 1");
  if (!(opts_.lr > 0.0)) throw InvalidConfig("train.lr must be positive");
  for (auto& p : params_) {
    const double f = lr_factor(model.config(), p.group);
    factors_.push_back(f);
    // Frozen groups never accumulate gradients, which also prunes their
    // subgraph from backward.
    p.tensor.set_requires_grad(f != 0.0);
    velocity_.emplace_back(f != 0.0 ? p.tensor.size() : 0, 0.0);
  }
}

// Polynomial decay keeps the late steps small enough to settle.
double Trainer::current_lr() const {
  const double progress =
      static_cast<double>(step_) / static_cast<double>(std::max<std::size_t>(opts_.steps, 1));
  return opts_.lr * std::pow(std::max(0.0, 1.0 - progress), 0.9);
}

const TargetMasks& Trainer::targets_for(const Sample& s) {
  for (auto& [ptr, t] : target_cache_)
    if (ptr == &s) return t;
  target_cache_.emplace_back(
      &s, rasterize_targets(s.instances, s.image.height, s.image.width,
                            model_.config().encoder.stride));
  return target_cache_.back().second;
}

LossBundle Trainer::step(const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw InvalidInput("empty training batch");
  for (auto& p : params_) p.tensor.zero_grad();

  LossBundle mean;
  mean.lambda = model_.config().lambda;
  for (const Sample* s : batch) {
    const ForwardResult fwd = model_.forward(s->image);
    const LossTerms terms = model_.loss(fwd, targets_for(*s));
    if (!std::isfinite(terms.values.total))
      throw NumericError("non-finite loss at step " + std::to_string(step_) + " on " + s->name);
    terms.total.backward();
    mean.det_loss += terms.values.det_loss;
    mean.aux_loss += terms.values.aux_loss;
    mean.total += terms.values.total;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  mean.det_loss *= inv;
  mean.aux_loss *= inv;
  mean.total *= inv;

  const double lr = current_lr();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (factors_[i] == 0.0) continue;
    ag::Tensor& w = params_[i].tensor;
    if (!w.has_grad()) continue;
    const std::vector<double> g = w.grad();
    auto vals = w.mutable_values();
    auto& v = velocity_[i];
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double gk = g[k] * inv + opts_.weight_decay * vals[k];
      v[k] = opts_.momentum * v[k] + gk;
      vals[k] -= lr * factors_[i] * v[k];
    }
  }
  ++step_;
  return mean;
}

std::vector<StepRecord> Trainer::fit(const std::vector<Sample>& data,
                                     const std::function<void(const StepRecord&)>& on_log) {
  if (data.empty()) throw InvalidInput("training set is empty");
  std::mt19937_64 rng(opts_.seed);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  std::vector<StepRecord> curve;
  curve.reserve(opts_.steps);
  for (std::size_t k = 0; k < opts_.steps; ++k) {
    std::vector<const Sample*> batch;
    while (batch.size() < opts_.batch) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    StepRecord rec{step_, current_lr(), {}};
    rec.loss = step(batch);
    curve.push_back(rec);
    if (on_log && opts_.log_every != 0 && (rec.step % opts_.log_every == 0 || k + 1 == opts_.steps))
      on_log(rec);
  }
  return curve;
}

std::vector<double> predict_probs(const TcmModel& model, const Image& image) {
  ag::NoGradGuard no_grad;
  const ForwardResult fwd = model.forward(image);
  const std::size_t pw = fwd.prob.dim(1);
  std::vector<double> out(image.height * image.width);
  const auto v = fwd.prob.values();
  for (std::size_t y = 0; y < image.height; ++y)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(y * pw), image.width,
                out.begin() + static_cast<std::ptrdiff_t>(y * image.width));
  return out;
}

std::vector<TextInstance> predict(const TcmModel& model, const Image& image,
                                  const PostOptions& post) {
  return polygonize(predict_probs(model, image), image.height, image.width, post.bin_thresh,
                    post.min_area);
}

EvalReport evaluate(const TcmModel& model, const std::vector<Sample>& data,
                    const PostOptions& post, const MatchOptions& match,
                    const std::string& name) {
  EvalReport report;
  report.name = name;
  for (const Sample& s : data)
    report.add(s.name, match_instances(predict(model, s.image, post), s.instances, match));
  report.finalize();
  return report;
}

}  // namespace tcm::harness
