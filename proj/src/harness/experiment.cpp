#include "tcm/harness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tcm/checkpoint.hpp"
#include "tcm/errors.hpp"
#include "tcm/harness/image_io.hpp"
#include "tcm/harness/toy_data.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tcm::harness {

namespace {

struct ToyLeg {
  std::string style;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

bool parse_toy_leg(const std::string& leg, ToyLeg* out) {
  if (leg.rfind("toy:", 0) != 0) return false;
  std::vector<std::string> parts;
  std::stringstream ss(leg.substr(4));
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw InvalidConfig("toy leg must be toy:<style>:<count>:<seed>, got " + leg);
  try {
    out->style = parts[0];
    out->count = std::stoul(parts[1]);
    out->seed = std::stoull(parts[2]);
  } catch (const std::exception&) {
    throw InvalidConfig("toy leg has a non-numeric count or seed: " + leg);
  }
  if (out->count == 0) throw InvalidConfig("toy leg count must be >= 1: " + leg);
  return true;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + path.string());
  f << text;
}

json config_json(const Config& c) {
  json j = json::object();
  for (const auto& [k, v] : c.entries()) j[k] = v;
  return j;
}

json report_object(const EvalReport& r) {
  json per = json::array();
  for (const auto& rec : r.per_image)
    per.push_back({{"image", rec.image}, {"tp", rec.tp}, {"fp", rec.fp}, {"fn", rec.fn}});
  return {{"name", r.name},     {"tp", r.tp},         {"fp", r.fp},
          {"fn", r.fn},         {"precision", r.precision}, {"recall", r.recall},
          {"fmeasure", r.fmeasure}, {"per_image", per}};
}

void log_line(std::ostream* log, const std::string& s) {
  if (log) *log << s << '\n' << std::flush;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

void write_curve(const fs::path& path, const std::vector<StepRecord>& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "step,lr,det_loss,aux_loss,total\n";
  for (const auto& r : curve)
    os << r.step << ',' << r.lr << ',' << r.loss.det_loss << ',' << r.loss.aux_loss << ','
       << r.loss.total << '\n';
  write_text(path, os.str());
}

ExperimentResult run_on(const ExperimentConfig& cfg, const std::vector<Sample>& train,
                        std::ostream* log) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text(dir / "config.txt", cfg.source.echo());

  ExperimentResult result;
  json manifest{{"status", "running"},
                {"config", config_json(cfg.source)},
                {"legs_completed", json::array()}};
  auto flush_manifest = [&] { write_text(dir / "manifest.json", manifest.dump(2) + "\n"); };
  flush_manifest();

  std::string stage = "train";
  try {
    TcmModel model = build_model(cfg);
    result.parameter_count = model.parameter_count();
    result.train_images = train.size();
    log_line(log, "training on " + std::to_string(train.size()) + " images, " +
                      std::to_string(result.parameter_count) + " parameters, " +
                      std::to_string(cfg.train.steps) + " steps");
    Trainer trainer(model, cfg.train);
    const auto t0 = std::chrono::steady_clock::now();
    result.curve = trainer.fit(train, [&](const StepRecord& r) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log_line(log, "step " + std::to_string(r.step) + " loss " + fmt(r.loss.total) + " det " +
                        fmt(r.loss.det_loss) + " aux " + fmt(r.loss.aux_loss) + " (" +
                        fmt(secs, 1) + "s)");
    });
    result.final_loss = result.curve.empty() ? 0.0 : result.curve.back().loss.total;
    write_curve(dir / "loss_curve.csv", result.curve);
    result.checkpoint = (dir / "model.ckpt").string();
    model.save(result.checkpoint, cfg.source.echo());
    manifest["final_loss"] = result.final_loss;
    manifest["checkpoint"] = result.checkpoint;
    manifest["parameter_count"] = result.parameter_count;
    manifest["train_images"] = train.size();

    std::vector<std::string> legs = cfg.eval_legs;
    const bool on_train = legs.empty();
    if (on_train) legs = cfg.train_legs;
    for (const std::string& leg : legs) {
      stage = "eval:" + leg;
      const std::string name = on_train ? "train" : leg_name(leg);
      const std::vector<Sample> data = on_train ? train : load_leg(leg, cfg);
      EvalReport report = evaluate(model, data, cfg.post, cfg.match, name);
      write_text(dir / ("report_" + name + ".json"), report_json(report, cfg.source) + "\n");
      log_line(log, "eval " + name + ": P " + fmt(report.precision) + " R " +
                        fmt(report.recall) + " F " + fmt(report.fmeasure));
      manifest["legs_completed"].push_back(name);
      result.reports.push_back(std::move(report));
      if (on_train) break;
    }
  } catch (const Error& e) {
    manifest["status"] = "failed";
    manifest["failed_stage"] = stage;
    manifest["error"] = {{"kind", e.kind()}, {"message", e.what()}};
    flush_manifest();
    throw;
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["failed_stage"] = stage;
    manifest["error"] = {{"kind", "internal"}, {"message", e.what()}};
    flush_manifest();
    throw;
  }
  manifest["status"] = "ok";
  flush_manifest();
  return result;
}

std::vector<double> channel_norms(const ag::Tensor& t) {
  const std::size_t c = t.dim(2), n = t.dim(0) * t.dim(1);
  std::vector<double> out(n);
  const auto v = t.values();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += v[i * c + k] * v[i * c + k];
    out[i] = std::sqrt(s);
  }
  return out;
}

std::vector<double> minmax_scaled(std::vector<double> v) {
  if (v.empty()) return v;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, b = *hi;
  for (double& x : v) x = b > a ? (x - a) / (b - a) : 0.0;
  return v;
}

}  // namespace

std::string leg_name(const std::string& leg) {
  ToyLeg t;
  if (parse_toy_leg(leg, &t))
    return "toy_" + t.style + "_" + std::to_string(t.count) + "_" + std::to_string(t.seed);
  fs::path p(leg);
  if (!p.has_filename()) p = p.parent_path();
  return p.filename().string();
}

std::vector<Sample> load_leg(const std::string& leg, const ExperimentConfig& cfg) {
  ToyLeg t;
  if (parse_toy_leg(leg, &t)) {
    const fs::path root = fs::path(cfg.output_dir) / "data" / leg_name(leg);
    const DatasetSpec spec =
        fs::exists(root / "images")
            ? DatasetSpec::from_root(root.string(), t.style)
            : generate_toy_data(t.count, t.seed, cfg.toy_image_size, t.style, root.string());
    return ingest_dataset(spec);
  }
  if (!fs::is_directory(leg)) throw NotFound("dataset directory not found: " + leg);
  return ingest_dataset(DatasetSpec::from_root(leg, leg_name(leg)));
}

std::vector<Sample> load_legs(const std::vector<std::string>& legs, const ExperimentConfig& cfg) {
  std::vector<Sample> all;
  for (const auto& leg : legs) {
    auto part = load_leg(leg, cfg);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

TcmModel build_model(const ExperimentConfig& cfg) {
  TcmModel model(cfg.model);
  if (!cfg.pretrained.empty()) load_pretrained(cfg.pretrained, model.image_encoder(), model.text_encoder());
  return model;
}

std::string report_json(const EvalReport& report, const Config& echo) {
  json j = report_object(report);
  j["config"] = config_json(echo);
  return j.dump(2);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  if (cfg.train_legs.empty()) throw InvalidConfig("data.train names no training leg");
  std::vector<Sample> train;
  try {
    train = load_legs(cfg.train_legs, cfg);
  } catch (const Error& e) {
    fs::create_directories(cfg.output_dir);
    const json manifest{{"status", "failed"},
                        {"failed_stage", "load:train"},
                        {"config", config_json(cfg.source)},
                        {"legs_completed", json::array()},
                        {"error", {{"kind", e.kind()}, {"message", e.what()}}}};
    write_text(fs::path(cfg.output_dir) / "manifest.json", manifest.dump(2) + "\n");
    throw;
  }
  return run_on(cfg, train, log);
}

ExperimentResult run_adaptation(const ExperimentConfig& cfg, std::ostream* log) {
  if (cfg.eval_legs.empty())
    throw InvalidConfig("adapt needs at least one target leg in data.eval");
  return run_experiment(cfg, log);
}

std::vector<FewshotEntry> fewshot_sweep(const ExperimentConfig& cfg, std::ostream* log) {
  if (cfg.fewshot_ratios.empty()) throw InvalidConfig("fewshot.ratios is empty");
  const std::vector<Sample> full = load_legs(cfg.train_legs, cfg);
  std::vector<FewshotEntry> entries;
  json sweep = json::array();
  for (double ratio : cfg.fewshot_ratios) {
    FewshotEntry e;
    e.ratio = ratio;
    const std::vector<Sample> subset = subsample_fewshot(full, ratio, cfg.fewshot_seed);
    e.sampled = subset.size();
    for (const auto& s : subset) e.images.push_back(s.name);
    ExperimentConfig leg = cfg;
    leg.output_dir = (fs::path(cfg.output_dir) / ("ratio_" + fmt(ratio, 2))).string();
    // Evaluate on the full training pool unless targets are given, so every
    // ratio is scored on the same images.
    if (leg.eval_legs.empty()) leg.eval_legs = cfg.train_legs;
    log_line(log, "ratio " + fmt(ratio, 2) + ": " + std::to_string(e.sampled) + " of " +
                      std::to_string(full.size()) + " images");
    e.result = run_on(leg, subset, log);
    json reports = json::array();
    for (const auto& r : e.result.reports) reports.push_back(report_object(r));
    sweep.push_back({{"ratio", ratio},
                     {"sampled", e.sampled},
                     {"pool", full.size()},
                     {"images", e.images},
                     {"final_loss", e.result.final_loss},
                     {"reports", reports}});
    entries.push_back(std::move(e));
  }
  fs::create_directories(cfg.output_dir);
  const json doc{{"config", config_json(cfg.source)}, {"seed", cfg.fewshot_seed}, {"runs", sweep}};
  write_text(fs::path(cfg.output_dir) / "sweep.json", doc.dump(2) + "\n");
  return entries;
}

std::vector<EvalReport> evaluate_checkpoint(const std::string& checkpoint,
                                            const ExperimentConfig& cfg, std::ostream* log) {
  if (!fs::exists(checkpoint)) throw NotFound("checkpoint not found: " + checkpoint);
  const TcmModel model = TcmModel::load(checkpoint);
  const std::vector<std::string>& legs = cfg.eval_legs.empty() ? cfg.train_legs : cfg.eval_legs;
  if (legs.empty()) throw InvalidConfig("no legs to evaluate on");
  fs::create_directories(cfg.output_dir);
  std::vector<EvalReport> reports;
  for (const auto& leg : legs) {
    EvalReport r = evaluate(model, load_leg(leg, cfg), cfg.post, cfg.match, leg_name(leg));
    write_text(fs::path(cfg.output_dir) / ("report_" + r.name + ".json"),
               report_json(r, cfg.source) + "\n");
    log_line(log, "eval " + r.name + ": P " + fmt(r.precision) + " R " + fmt(r.recall) + " F " +
                      fmt(r.fmeasure));
    reports.push_back(std::move(r));
  }
  return reports;
}

ExportedMaps export_maps(const std::string& checkpoint, const std::string& image_path,
                         const std::string& out_dir) {
  if (!fs::exists(checkpoint)) throw NotFound("checkpoint not found: " + checkpoint);
  const TcmModel model = TcmModel::load(checkpoint);
  const Image image = read_ppm(image_path);
  ag::NoGradGuard no_grad;
  const ForwardResult fwd = model.forward(image);

  ExportedMaps out;
  out.grid_h = fwd.image.grid_h();
  out.grid_w = fwd.image.grid_w();
  const std::size_t h = out.grid_h, w = out.grid_w;
  fs::create_directories(out_dir);
  auto emit = [&](const std::string& stem, const ag::Tensor& raw, const std::vector<double>& map) {
    const std::string pgm = (fs::path(out_dir) / (stem + ".pgm")).string();
    const std::string bin = (fs::path(out_dir) / (stem + ".bin")).string();
    write_pgm(pgm, h, w, map);
    write_raw_array(bin, raw.shape(), raw.values());
    out.files.push_back(pgm);
    out.files.push_back(bin);
  };
  emit("image_embedding", fwd.image.data, minmax_scaled(channel_norms(fwd.image.data)));
  const ag::Tensor vp = fwd.visual_prompt ? fwd.visual_prompt->data
                                          : ag::Tensor::zeros(fwd.image.data.shape());
  emit("visual_prompt", vp, minmax_scaled(channel_norms(vp)));
  if (fwd.score) {
    const auto p = fwd.score->probs.values();
    emit("score_map", fwd.score->probs, std::vector<double>(p.begin(), p.end()));
  }
  return out;
}

}  // namespace tcm::harness
