#pragma once

// Config-driven orchestration: train/evaluate legs, few-shot sweeps,
// adaptation runs, and feature-map export.
//
// A leg is either `toy:<style>:<count>:<seed>` (generated under
// <output.dir>/data on first use) or the root directory of a dataset laid
// out as described in dataset.hpp.

#include <iosfwd>
#include <string>
#include <vector>

#include "tcm/harness/trainer.hpp"

namespace tcm::harness {

std::string leg_name(const std::string& leg);
std::vector<Sample> load_leg(const std::string& leg, const ExperimentConfig& cfg);
std::vector<Sample> load_legs(const std::vector<std::string>& legs, const ExperimentConfig& cfg);

// Builds the model and applies `pretrained` when set.
TcmModel build_model(const ExperimentConfig& cfg);

struct ExperimentResult {
  std::vector<EvalReport> reports;  // one per eval leg
  std::vector<StepRecord> curve;
  double final_loss = 0.0;
  std::size_t parameter_count = 0;
  std::size_t train_images = 0;
  std::string checkpoint;
};

// Writes into cfg.output_dir: config.txt, model.ckpt, loss_curve.csv,
// report_<leg>.json per eval leg and manifest.json. When a leg fails the
// manifest records the completed legs and the error before rethrowing.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// Same as run_experiment but refuses to run without explicit eval legs.
ExperimentResult run_adaptation(const ExperimentConfig& cfg, std::ostream* log = nullptr);

struct FewshotEntry {
  double ratio = 0.0;
  std::size_t sampled = 0;
  std::vector<std::string> images;
  ExperimentResult result;
};

// One fresh training run per ratio on a subsample of the training legs, each
// in <output.dir>/ratio_<r>, plus sweep.json summarizing all of them.
std::vector<FewshotEntry> fewshot_sweep(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// Evaluates a saved model on the config's eval legs (train legs if none).
std::vector<EvalReport> evaluate_checkpoint(const std::string& checkpoint,
                                            const ExperimentConfig& cfg,
                                            std::ostream* log = nullptr);

struct ExportedMaps {
  std::size_t grid_h = 0, grid_w = 0;
  std::vector<std::string> files;
};

// Channel-norm maps of I and I~ and the score map P at grid resolution,
// written as PGM (min-max scaled; a constant map is written as black) and
// as raw f64 arrays (image_embedding.bin, visual_prompt.bin, score_map.bin).
ExportedMaps export_maps(const std::string& checkpoint, const std::string& image_path,
                         const std::string& out_dir);

std::string report_json(const EvalReport& report, const Config& echo);

}  // namespace tcm::harness
