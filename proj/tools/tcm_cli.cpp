// Command-line entry point: tcm <command> --config FILE [--set key=value]...

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcm/errors.hpp"
#include "tcm/harness/dataset.hpp"
#include "tcm/harness/experiment.hpp"
#include "tcm/harness/image_io.hpp"
#include "tcm/harness/toy_data.hpp"

namespace fs = std::filesystem;
using namespace tcm::harness;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--set", c.overrides, "override a config key (key=value), repeatable");
}

// out_dir is filled in as soon as the raw config is readable so a later
// validation error can still be recorded next to the run.
ExperimentConfig resolve(const Common& c, std::string& out_dir) {
  Config cfg = c.config_path.empty() ? Config{} : Config::load(c.config_path);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  out_dir = cfg.get("output.dir", config_schema().at("output.dir"));
  return ExperimentConfig::from(cfg);
}

int fail(const std::string& command, const std::string& kind, const std::string& message,
         const std::string& out_dir) {
  const nlohmann::json j{
      {"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream(fs::path(out_dir) / "error.json") << j.dump(2) << '\n';
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TCM scene-text detector: training, evaluation and tooling"};
  app.require_subcommand(1);

  Common common;
  std::string checkpoint, image, out;

  auto* train = app.add_subcommand("train", "train on data.train and evaluate");
  add_common(train, common);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on data.eval");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

  auto* predict_cmd = app.add_subcommand("predict", "write predicted polygons for one image");
  add_common(predict_cmd, common);
  predict_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict_cmd->add_option("--image", image, "input image (binary PPM)")->required();
  predict_cmd->add_option("--out", out, "prediction file (default: stdout)");

  auto* sweep = app.add_subcommand("fewshot-sweep", "train on each fewshot.ratios subsample");
  add_common(sweep, common);

  auto* adapt = app.add_subcommand("adapt", "train on data.train, evaluate on each data.eval leg");
  add_common(adapt, common);

  auto* gen = app.add_subcommand("gen-toy", "generate a synthetic dataset");
  add_common(gen, common);
  gen->add_option("--out", out, "dataset root")->required();

  auto* exp = app.add_subcommand("export-maps", "write I, I~ and P maps for one image");
  add_common(exp, common);
  exp->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  exp->add_option("--image", image, "input image (binary PPM)")->required();
  exp->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  std::string out_dir;
  try {
    const ExperimentConfig cfg = resolve(common, out_dir);
    if (command == "train") {
      const auto r = run_experiment(cfg, &std::cout);
      std::cout << "final loss " << r.final_loss << "\ncheckpoint " << r.checkpoint << '\n';
    } else if (command == "evaluate") {
      evaluate_checkpoint(checkpoint, cfg, &std::cout);
    } else if (command == "predict") {
      if (!fs::exists(checkpoint)) throw tcm::NotFound("checkpoint not found: " + checkpoint);
      const TcmModel model = TcmModel::load(checkpoint);
      const auto preds = predict(model, read_ppm(image), cfg.post);
      if (out.empty()) {
        for (const auto& p : preds) std::cout << format_prediction(p) << '\n';
      } else {
        write_predictions(out, preds);
        std::cout << preds.size() << " instances written to " << out << '\n';
      }
    } else if (command == "fewshot-sweep") {
      for (const auto& e : fewshot_sweep(cfg, &std::cout)) {
        std::cout << "ratio " << e.ratio << " sampled " << e.sampled;
        for (const auto& r : e.result.reports) std::cout << " F(" << r.name << ")=" << r.fmeasure;
        std::cout << '\n';
      }
    } else if (command == "adapt") {
      run_adaptation(cfg, &std::cout);
    } else if (command == "gen-toy") {
      out_dir = out;
      const auto spec = generate_toy_data(cfg.toy_count, cfg.toy_seed, cfg.toy_image_size,
                                          cfg.toy_style, out);
      std::cout << cfg.toy_count << " images in " << spec.images_dir << '\n';
    } else if (command == "export-maps") {
      out_dir = out;
      const auto maps = export_maps(checkpoint, image, out);
      std::cout << "maps " << maps.grid_h << "x" << maps.grid_w << '\n';
      for (const auto& f : maps.files) std::cout << f << '\n';
    }
  } catch (const tcm::Error& e) {
    return fail(command, e.kind(), e.what(), out_dir);
  } catch (const std::exception& e) {
    return fail(command, "internal", e.what(), out_dir);
  }
  return 0;
}
