#include "tcm/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "tcm/encoders.hpp"
#include "tcm/errors.hpp"

namespace tcm {

double signed_area(const std::vector<Point>& polygon) {
  double a = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = polygon[i];
    const Point& q = polygon[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool point_in_polygon(const std::vector<Point>& polygon, double x, double y) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = polygon[i];
    const Point& b = polygon[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x)
      inside = !inside;
  }
  return inside;
}

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
  const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  auto on_segment = [](const Point& a, const Point& b, const Point& c) {
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
           c.y <= std::max(a.y, b.y);
  };
  return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
         (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

}  // namespace

std::optional<std::string> instance_problem(const TextInstance& inst) {
  const auto& poly = inst.polygon;
  if (poly.size() < 3) return "polygon has fewer than 3 vertices";
  for (const Point& p : poly)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return "polygon has non-finite vertices";
  if (std::abs(signed_area(poly)) <= 0.0) return "polygon has zero area";
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        return "polygon is self-intersecting";
    }
  return std::nullopt;
}

namespace {

void rasterize_polygon(const std::vector<Point>& poly, std::size_t rows, std::size_t cols,
                       double cell, std::vector<double>& mask) {
  double min_x = poly[0].x, max_x = poly[0].x, min_y = poly[0].y, max_y = poly[0].y;
  for (const Point& p : poly) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  auto first = [cell](double v) {
    return static_cast<std::ptrdiff_t>(std::floor(v / cell - 0.5));
  };
  const std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, first(min_y));
  const std::ptrdiff_t r1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(rows) - 1, first(max_y) + 1);
  const std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, first(min_x));
  const std::ptrdiff_t c1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cols) - 1, first(max_x) + 1);
  for (std::ptrdiff_t r = r0; r <= r1; ++r)
    for (std::ptrdiff_t c = c0; c <= c1; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) * cell;
      const double cy = (static_cast<double>(r) + 0.5) * cell;
      if (point_in_polygon(poly, cx, cy)) mask[static_cast<std::size_t>(r) * cols + c] = 1.0;
    }
}

}  // namespace

TargetMasks rasterize_targets(const std::vector<TextInstance>& instances, std::size_t height,
                              std::size_t width, std::size_t stride) {
  if (stride == 0) throw InvalidConfig("rasterize_targets: stride must be positive");
  TargetMasks m;
  m.stride = stride;
  m.height = padded_extent(height, stride);
  m.width = padded_extent(width, stride);
  m.grid_h = m.height / stride;
  m.grid_w = m.width / stride;
  m.text_mask.assign(m.grid_h * m.grid_w, 0.0);
  m.ignore_mask.assign(m.grid_h * m.grid_w, 0.0);
  m.full_res_mask.assign(m.height * m.width, 0.0);
  m.full_res_ignore.assign(m.height * m.width, 0.0);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (inst.polygon.size() < 3 || std::abs(signed_area(inst.polygon)) <= 0.0) {
      m.warnings.push_back("instance " + std::to_string(i) +
                           " skipped: degenerate polygon (fewer than 3 vertices or zero area)");
      continue;
    }
    rasterize_polygon(inst.polygon, m.grid_h, m.grid_w, static_cast<double>(stride),
                      inst.ignore ? m.ignore_mask : m.text_mask);
    rasterize_polygon(inst.polygon, m.height, m.width, 1.0,
                      inst.ignore ? m.full_res_ignore : m.full_res_mask);
  }
  for (std::size_t i = 0; i < m.text_mask.size(); ++i)
    if (m.text_mask[i] != 0.0) m.ignore_mask[i] = 0.0;
  for (std::size_t i = 0; i < m.full_res_mask.size(); ++i)
    if (m.full_res_mask[i] != 0.0) m.full_res_ignore[i] = 0.0;
  return m;
}

DetectionHead::DetectionHead(std::size_t in_channels, const HeadConfig& cfg, nn::Rng& rng)
    : in_channels_(in_channels),
      reduce_(in_channels, cfg.hidden, 3, 1, rng),
      refine_(cfg.hidden, cfg.hidden, 3, 1, rng),
      predict_(cfg.hidden, 1, 1, 1, rng) {}

ag::Tensor DetectionHead::operator()(const FeatureMap& fused, const ScoreMap* score) const {
  ag::Tensor x = fused.data;
  if (score != nullptr) {
    if (score->stride != fused.stride || score->probs.dim(0) != fused.grid_h() ||
        score->probs.dim(1) != fused.grid_w())
      throw DimensionMismatch("head: score map (stride " + std::to_string(score->stride) + ", " +
                              ag::shape_str(score->probs.shape()) +
                              ") does not align with features (stride " +
                              std::to_string(fused.stride) + ", " +
                              ag::shape_str(fused.data.shape()) + ")");
    x = ag::concat_cols({x, score->probs});
  }
  if (ag::cols_of(x) != in_channels_)
    throw DimensionMismatch("head expects " + std::to_string(in_channels_) +
                            " input channels, got " + std::to_string(ag::cols_of(x)));
  const std::size_t s = fused.stride;
  const std::size_t mid = s >= 4 ? s / 4 : 1;  // upsampling factor to stride 4
  x = ag::relu(reduce_(x));
  if (mid > 1) x = ag::upsample_bilinear(x, fused.grid_h() * mid, fused.grid_w() * mid);
  x = ag::relu(refine_(x));
  x = predict_(x);
  x = ag::upsample_bilinear(x, fused.grid_h() * s, fused.grid_w() * s);
  return ag::sigmoid(x);
}

void DetectionHead::collect(nn::ParamList& out) const {
  const auto g = nn::ParamGroup::Head;
  reduce_.collect(out, "head.reduce", g);
  refine_.collect(out, "head.refine", g);
  predict_.collect(out, "head.predict", g);
}

ag::Tensor head_forward(const DetectionHead& head, const FeatureMap& fused, const ScoreMap& p) {
  return head(fused, &p);
}

ag::Tensor det_loss(const ag::Tensor& pred, const TargetMasks& targets,
                    std::vector<std::string>* warnings) {
  if (pred.size() != targets.full_res_mask.size())
    throw DimensionMismatch("det_loss: prediction " + ag::shape_str(pred.shape()) + " vs target " +
                            std::to_string(targets.height) + "x" + std::to_string(targets.width));
  std::vector<double> keep(pred.size());
  double kept = 0.0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    keep[i] = targets.full_res_ignore[i] != 0.0 ? 0.0 : 1.0;
    kept += keep[i];
  }
  if (kept == 0.0) {
    if (warnings) warnings->push_back("det_loss: every pixel is ignored; loss is 0");
    return ag::Tensor::scalar(0.0);
  }
  const ag::Tensor bce = ag::bce_mean(pred, targets.full_res_mask, keep, 1e-7);
  const ag::Tensor dice = ag::dice_loss(pred, targets.full_res_mask, keep, 1.0);
  return ag::add_scalars(bce, dice);
}

namespace {

struct Edge {
  std::int64_t x0, y0, x1, y1;
  std::size_t owner;  // pixel index the edge borders
};

std::uint64_t vkey(std::int64_t x, std::int64_t y) {
  return (static_cast<std::uint64_t>(x) << 32) | static_cast<std::uint64_t>(y);
}

std::vector<Point> simplify_collinear(const std::vector<Point>& loop) {
  std::vector<Point> out;
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& prev = loop[(i + n - 1) % n];
    const Point& cur = loop[i];
    const Point& next = loop[(i + 1) % n];
    if (cross(prev, cur, next) != 0.0) out.push_back(cur);
  }
  return out;
}

// Outer boundary of a pixel set along pixel edges. Where two diagonal pixels
// meet at a corner, the walk stays with the pixel it arrived along, which
// matches 4-connectivity.
std::vector<Point> trace_outer_contour(const std::vector<std::size_t>& pixels,
                                       const std::vector<std::int32_t>& label, std::int32_t id,
                                       std::size_t width, std::size_t height) {
  auto inside = [&](std::int64_t x, std::int64_t y) {
    return x >= 0 && y >= 0 && x < static_cast<std::int64_t>(width) &&
           y < static_cast<std::int64_t>(height) &&
           label[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] == id;
  };
  std::vector<Edge> edges;
  for (std::size_t idx : pixels) {
    const auto x = static_cast<std::int64_t>(idx % width);
    const auto y = static_cast<std::int64_t>(idx / width);
    if (!inside(x, y - 1)) edges.push_back({x, y, x + 1, y, idx});
    if (!inside(x + 1, y)) edges.push_back({x + 1, y, x + 1, y + 1, idx});
    if (!inside(x, y + 1)) edges.push_back({x + 1, y + 1, x, y + 1, idx});
    if (!inside(x - 1, y)) edges.push_back({x, y + 1, x, y, idx});
  }
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> outgoing;
  for (std::size_t i = 0; i < edges.size(); ++i)
    outgoing[vkey(edges[i].x0, edges[i].y0)].push_back(i);

  std::vector<bool> used(edges.size(), false);
  std::vector<Point> best;
  double best_area = -1.0;
  for (std::size_t start = 0; start < edges.size(); ++start) {
    if (used[start]) continue;
    std::vector<Point> loop;
    std::size_t cur = start;
    while (true) {
      used[cur] = true;
      loop.push_back({static_cast<double>(edges[cur].x0), static_cast<double>(edges[cur].y0)});
      const auto& cands = outgoing[vkey(edges[cur].x1, edges[cur].y1)];
      std::size_t next = edges.size();
      for (std::size_t c : cands) {
        if (used[c] && c != start) continue;
        if (next == edges.size() || edges[c].owner == edges[cur].owner) next = c;
      }
      if (next == edges.size() || next == start) break;
      cur = next;
    }
    const double area = std::abs(signed_area(loop));
    if (area > best_area) {
      best_area = area;
      best = std::move(loop);
    }
  }
  return simplify_collinear(best);
}

}  // namespace

std::vector<TextInstance> polygonize(std::span<const double> prob, std::size_t height,
                                     std::size_t width, double bin_thresh, double min_area) {
  if (!(bin_thresh > 0.0 && bin_thresh < 1.0))
    throw InvalidConfig("polygonize: bin_thresh must lie in (0, 1)");
  if (prob.size() != height * width)
    throw DimensionMismatch("polygonize: map has " + std::to_string(prob.size()) +
                            " values for " + std::to_string(height) + "x" + std::to_string(width));
  std::vector<std::int32_t> label(prob.size(), -1);
  std::vector<TextInstance> out;
  std::int32_t next_id = 0;
  std::vector<std::size_t> pixels, queue;
  for (std::size_t seed = 0; seed < prob.size(); ++seed) {
    if (label[seed] != -1 || !(prob[seed] > bin_thresh)) continue;
    const std::int32_t id = next_id++;
    pixels.clear();
    queue.assign(1, seed);
    label[seed] = id;
    double score = 0.0;
    while (!queue.empty()) {
      const std::size_t idx = queue.back();
      queue.pop_back();
      pixels.push_back(idx);
      score += prob[idx];
      const std::size_t x = idx % width, y = idx / width;
      auto visit = [&](std::size_t n) {
        if (label[n] == -1 && prob[n] > bin_thresh) {
          label[n] = id;
          queue.push_back(n);
        }
      };
      if (x > 0) visit(idx - 1);
      if (x + 1 < width) visit(idx + 1);
      if (y > 0) visit(idx - width);
      if (y + 1 < height) visit(idx + width);
    }
    if (static_cast<double>(pixels.size()) < min_area) continue;
    std::sort(pixels.begin(), pixels.end());
    TextInstance inst;
    inst.polygon = trace_outer_contour(pixels, label, id, width, height);
    inst.score = score / static_cast<double>(pixels.size());
    if (inst.polygon.size() >= 3) out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace tcm
