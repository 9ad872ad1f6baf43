#pragma once

// Flat key/value experiment configuration.
//
// File syntax: one `key = value` per line, `#` starts a comment, blank lines
// are skipped. Keys are dotted (`train.steps`). Every key must be part of the
// schema in ExperimentConfig; unknown keys are rejected so typos surface.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tcm/cross_modal.hpp"
#include "tcm/detector.hpp"
#include "tcm/encoders.hpp"
#include "tcm/evalkit.hpp"

namespace tcm::harness {

class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(std::string_view text, const std::string& origin = "<config>");

  void set(const std::string& key, const std::string& value);
  // Accepts "key=value" as given to --set.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;

  // Sorted `key = value` lines; parse(echo()) reproduces the config.
  std::string echo() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct ModelConfig {
  EncoderConfig encoder;
  VisualPromptConfig vg;
  HeadConfig head;
  std::string predefined = "Text";
  std::size_t n = 4;
  std::uint64_t prompt_seed = 1;
  bool use_pp = true, use_lp = true, use_lg = true, use_vg = true;
  double lambda = 1.0;
  double tau_init = 0.07;

  std::size_t effective_n() const { return use_lp ? n : 0; }
  // The text path (prompts, text encoder, matching) exists iff any TCM
  // component is on; all toggles off is the plain baseline.
  bool text_branch() const { return use_pp || effective_n() > 0 || use_lg || use_vg; }
};

struct TrainOptions {
  std::size_t steps = 2000;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
};

struct PostOptions {
  double bin_thresh = 0.3;
  double min_area = 10.0;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainOptions train;
  PostOptions post;
  MatchOptions match;
  std::string pretrained;  // optional encoder checkpoint
  std::vector<std::string> train_legs;
  std::vector<std::string> eval_legs;  // empty: evaluate on the training set
  std::size_t toy_image_size = 64;
  std::vector<double> fewshot_ratios{0.1, 0.3, 0.5, 1.0};
  std::uint64_t fewshot_seed = 0;
  std::string output_dir = "runs/default";
  // gen-toy
  std::size_t toy_count = 20;
  std::uint64_t toy_seed = 7;
  std::string toy_style = "domainA";

  Config source;  // what the values were read from, echoed into reports

  static ExperimentConfig from(const Config& cfg);
};

// Every key accepted in a config file with its default value.
const std::map<std::string, std::string>& config_schema();

}  // namespace tcm::harness
