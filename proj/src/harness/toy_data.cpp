#include "tcm/harness/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "tcm/errors.hpp"
#include "tcm/harness/image_io.hpp"

namespace tcm::harness {

namespace {

struct Style {
  double base_lo, base_hi;   // background gray level
  double noise;              // per-pixel noise stddev
  double texture;            // sinusoid amplitude
  double gradient;           // left-right ramp amplitude
  double plate_shift;        // plate level relative to background
  double stroke;             // stroke gray level
  double tint[3];            // per-channel multiplier
};

Style style_for(const std::string& name) {
  if (name == "domainA") return {0.55, 0.75, 0.02, 0.03, 0.15, 0.2, 0.08, {1.0, 0.97, 0.92}};
  if (name == "domainB") return {0.08, 0.25, 0.07, 0.08, 0.05, -0.05, 0.95, {0.9, 0.95, 1.05}};
  throw InvalidConfig("unknown toy style '" + name + "' (expected domainA or domainB)");
}

struct Rect {
  int x0, y0, x1, y1;  // half-open pixel box
};

bool overlaps(const Rect& a, const Rect& b, int gap) {
  return a.x0 < b.x1 + gap && b.x0 < a.x1 + gap && a.y0 < b.y1 + gap && b.y0 < a.y1 + gap;
}

const char* kWords[] = {"hello", "text", "open", "exit", "cafe", "sale", "stop", "line"};

Sample render_one(std::mt19937_64& rng, std::size_t index, std::size_t size, const Style& st) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, st.noise);
  const int n = static_cast<int>(size);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  Sample s;
  char name[32];
  std::snprintf(name, sizeof name, "img_%04zu", index);
  s.name = name;
  s.image = Image{size, size, std::vector<double>(size * size * 3)};

  const double base = st.base_lo + (st.base_hi - st.base_lo) * u01(rng);
  const double fx = 0.1 + 0.3 * u01(rng), fy = 0.1 + 0.3 * u01(rng);
  const double phase = 6.283185307179586 * u01(rng);
  std::vector<double> gray(size * size);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      gray[y * n + x] = base + st.gradient * (static_cast<double>(x) / n - 0.5) +
                        st.texture * std::sin(fx * x + fy * y + phase);

  // Words: 1-3 non-overlapping rectangles with a clear gap between them.
  const int want = uni(1, 3);
  const int max_w = std::max(18, std::min(40, n - 4));
  const int max_h = std::max(10, std::min(16, n / 3));
  std::vector<Rect> rects;
  for (int attempt = 0; attempt < 200 && static_cast<int>(rects.size()) < want; ++attempt) {
    const int w = uni(std::min(18, max_w), max_w), h = uni(std::min(10, max_h), max_h);
    if (w + 4 > n || h + 4 > n) break;
    const int x0 = uni(2, n - w - 2), y0 = uni(2, n - h - 2);
    const Rect cand{x0, y0, x0 + w, y0 + h};
    bool clash = false;
    for (const Rect& o : rects) clash = clash || overlaps(cand, o, 8);
    if (!clash) rects.push_back(cand);
  }
  for (const Rect& r : rects) {
    const int period = uni(3, 5), bar = uni(1, 2);
    const int row_phase = uni(0, 4);
    const double plate = std::clamp(base + st.plate_shift, 0.0, 1.0);
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) {
        const bool edge = y == r.y0 || y == r.y1 - 1;
        const bool stroke = !edge && (((x - r.x0) % period) < period - bar ||
                                      ((y - r.y0 + row_phase) % 5) == 0);
        gray[y * n + x] = stroke ? st.stroke : plate;
      }
    TextInstance inst;
    inst.polygon = {{double(r.x0), double(r.y0)},
                    {double(r.x1), double(r.y0)},
                    {double(r.x1), double(r.y1)},
                    {double(r.x0), double(r.y1)}};
    inst.ignore = u01(rng) < 0.15;
    inst.transcription = inst.ignore ? "###" : kWords[uni(0, 7)];
    s.instances.push_back(std::move(inst));
  }

  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double g = gray[y * n + x];
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(g * st.tint[c] + noise(rng), 0.0, 1.0);
        // Quantize now so the in-memory sample equals what a PPM round trip gives.
        s.image.pixels[(y * n + x) * 3 + c] = std::round(v * 255.0) / 255.0;
      }
    }
  return s;
}

std::uint64_t style_salt(const std::string& style) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : style) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return h;
}

}  // namespace

std::vector<Sample> render_toy_samples(std::size_t count, std::uint64_t seed,
                                       std::size_t image_size, const std::string& style) {
  if (count == 0) throw InvalidConfig("toy dataset needs at least one image");
  if (image_size < 32) throw InvalidConfig("toy images must be at least 32 pixels wide");
  const Style st = style_for(style);
  std::mt19937_64 rng(seed ^ style_salt(style));
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(render_one(rng, i, image_size, st));
  return out;
}

DatasetSpec generate_toy_data(std::size_t count, std::uint64_t seed, std::size_t image_size,
                              const std::string& style, const std::string& root) {
  const auto samples = render_toy_samples(count, seed, image_size, style);
  const DatasetSpec spec = DatasetSpec::from_root(root, style);
  std::filesystem::create_directories(spec.images_dir);
  std::filesystem::create_directories(spec.annotations_dir);
  for (const auto& s : samples) {
    write_ppm((std::filesystem::path(spec.images_dir) / (s.name + ".ppm")).string(), s.image);
    write_annotations(
        (std::filesystem::path(spec.annotations_dir) / ("gt_" + s.name + ".txt")).string(),
        s.instances);
  }
  return spec;
}

}  // namespace tcm::harness
