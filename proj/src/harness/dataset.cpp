#include "tcm/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "tcm/errors.hpp"
#include "tcm/harness/image_io.hpp"

namespace tcm::harness {

namespace fs = std::filesystem;

DatasetSpec DatasetSpec::from_root(const std::string& root, const std::string& name,
                                   const std::string& split) {
  DatasetSpec s;
  s.name = name;
  s.images_dir = (fs::path(root) / "images").string();
  s.annotations_dir = (fs::path(root) / "annotations").string();
  s.split = split;
  return s;
}

namespace {

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(pos));
      return out;
    }
    out.emplace_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && s[b] == ' ') ++b;
  return s.substr(b);
}

bool parse_number(const std::string& field, double& out) {
  const std::string f = strip(field);
  if (f.empty()) return false;
  char* end = nullptr;
  out = std::strtod(f.c_str(), &end);
  return end == f.c_str() + f.size() && std::isfinite(out);
}

// Shared by annotation and prediction parsing: returns the polygon and the
// trailing field.
std::vector<Point> parse_polygon(std::string_view line, const std::string& origin,
                                 std::size_t line_no, std::string& tail) {
  auto fail = [&](const std::string& why) {
    return ParseError(origin + ":" + std::to_string(line_no) + ": " + why);
  };
  auto fields = split_commas(line);
  if (fields.size() < 2) throw fail("expected coordinates followed by a transcription");
  tail = strip(fields.back());
  fields.pop_back();
  if (fields.size() % 2 != 0)
    throw fail("odd number of coordinates (" + std::to_string(fields.size()) + ")");
  if (fields.size() < 6) throw fail("polygon needs at least 3 vertices");
  std::vector<Point> poly;
  for (std::size_t i = 0; i < fields.size(); i += 2) {
    Point p;
    if (!parse_number(fields[i], p.x) || !parse_number(fields[i + 1], p.y))
      throw fail("non-numeric coordinate near field " + std::to_string(i + 1));
    poly.push_back(p);
  }
  return poly;
}

std::vector<std::string> read_lines(const std::string& path) {
  if (!fs::exists(path)) throw NotFound("annotation file not found: " + path);
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
  return lines;
}

}  // namespace

TextInstance parse_annotation_line(std::string_view line, const std::string& origin,
                                   std::size_t line_no) {
  TextInstance inst;
  inst.polygon = parse_polygon(line, origin, line_no, inst.transcription);
  inst.ignore = inst.transcription == kIgnoreTag;
  return inst;
}

std::vector<TextInstance> read_annotations(const std::string& path) {
  std::vector<TextInstance> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (strip(lines[i]).empty()) continue;
    out.push_back(parse_annotation_line(strip(lines[i]), path, i + 1));
  }
  return out;
}

void write_annotations(const std::string& path, const std::vector<TextInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path);
  for (const auto& inst : instances) {
    for (const Point& p : inst.polygon) out << std::lround(p.x) << ',' << std::lround(p.y) << ',';
    out << (inst.ignore ? std::string(kIgnoreTag) : inst.transcription) << '\n';
  }
}

std::string format_prediction(const TextInstance& inst) {
  std::ostringstream os;
  for (const Point& p : inst.polygon) os << std::lround(p.x) << ',' << std::lround(p.y) << ',';
  char score[32];
  std::snprintf(score, sizeof score, "%.4f", inst.score);
  os << score;
  return os.str();
}

void write_predictions(const std::string& path, const std::vector<TextInstance>& preds) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path);
  for (const auto& p : preds) out << format_prediction(p) << '\n';
}

std::vector<TextInstance> read_predictions(const std::string& path) {
  std::vector<TextInstance> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (strip(lines[i]).empty()) continue;
    TextInstance inst;
    std::string tail;
    inst.polygon = parse_polygon(strip(lines[i]), path, i + 1, tail);
    if (!parse_number(tail, inst.score))
      throw ParseError(path + ":" + std::to_string(i + 1) + ": score is not a number");
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Sample> ingest_dataset(const DatasetSpec& spec) {
  if (spec.format != "icdar") throw InvalidConfig("unsupported dataset format '" + spec.format + "'");
  if (!fs::is_directory(spec.images_dir))
    throw NotFound("dataset '" + spec.name + "': images directory not found: " + spec.images_dir);
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(spec.images_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") images.push_back(entry.path());
  std::sort(images.begin(), images.end());
  std::vector<Sample> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    Sample s;
    s.name = img.stem().string();
    s.image = read_ppm(img.string());
    const auto ann = fs::path(spec.annotations_dir) / ("gt_" + s.name + ".txt");
    if (!fs::exists(ann))
      throw NotFound("dataset '" + spec.name + "': missing annotation " + ann.string());
    s.instances = read_annotations(ann.string());
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t fewshot_count(std::size_t n, double ratio) {
  // The epsilon absorbs representation error such as 0.3 * 200 = 60.000000000000007
  // or 0.29 * 100 = 28.999999999999996.
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

std::vector<Sample> subsample_fewshot(const std::vector<Sample>& data, double ratio,
                                      std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw InvalidConfig("few-shot ratio must lie in (0, 1], got " + std::to_string(ratio));
  if (ratio == 1.0) return data;
  const std::size_t k = fewshot_count(data.size(), ratio);
  if (k == 0)
    throw InvalidConfig("few-shot ratio " + std::to_string(ratio) + " of " +
                        std::to_string(data.size()) + " images selects nothing");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<Sample> out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(data[i]);
  return out;
}

}  // namespace tcm::harness
