#pragma once

// Shared oracles for the test suites: central finite differences, a
// brute-force maximum matching, and a sampling-based polygon IoU.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tcm/detector.hpp"
#include "tcm/evalkit.hpp"
#include "tcm/nn.hpp"
#include "tcm/ops.hpp"

namespace tcm::testing {

inline ag::Tensor random_tensor(ag::Shape shape, std::uint64_t seed, double scale = 1.0,
                                bool requires_grad = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = n(rng);
  return ag::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline void randomize(ag::Tensor& t, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double& x : t.mutable_values()) x = n(rng);
}

inline constexpr double kZeroGradNorm = 1e-6;

// ||analytic - numeric|| / max(||analytic||, ||numeric||) per tensor, the
// largest over all tensors. `f` must rebuild the graph on every call.
inline double gradcheck(const std::function<ag::Tensor()>& f, std::vector<ag::Tensor> wrt,
                        double h = 1e-6) {
  for (auto& t : wrt) t.zero_grad();
  f().backward();
  double worst = 0.0;
  for (auto& t : wrt) {
    const std::vector<double> analytic = t.grad();
    auto vals = t.mutable_values();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double v = vals[i];
      vals[i] = v + h;
      const double up = f().item();
      vals[i] = v - h;
      const double down = f().item();
      vals[i] = v;
      const double numeric = (up - down) / (2.0 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
    // Some gradients are structurally zero (a key bias under softmax, the
    // query of a one-key attention). Both sides are then rounding noise and
    // the absolute difference is the meaningful error.
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    worst = std::max(worst, scale < kZeroGradNorm ? std::sqrt(diff) : std::sqrt(diff) / scale);
  }
  return worst;
}

inline std::vector<ag::Tensor> tensors_of(const nn::ParamList& params) {
  std::vector<ag::Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

inline TextInstance rect(double x0, double y0, double x1, double y1, bool ignore = false) {
  TextInstance t;
  t.polygon = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  t.ignore = ignore;
  t.transcription = ignore ? "###" : "word";
  return t;
}

// Largest number of (pred, gt) pairs with IoU >= thresh, found by trying
// every assignment. Ignore handling mirrors match_instances.
inline std::size_t brute_force_matches(const std::vector<TextInstance>& preds,
                                       const std::vector<TextInstance>& gts, double thresh) {
  std::vector<std::size_t> live_preds, care_gts;
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!gts[g].ignore) care_gts.push_back(g);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    bool dropped = false;
    for (const auto& g : gts)
      if (g.ignore && polygon_iou(preds[p], g) > thresh) dropped = true;
    if (!dropped) live_preds.push_back(p);
  }
  std::vector<std::vector<bool>> ok(live_preds.size(), std::vector<bool>(care_gts.size()));
  for (std::size_t i = 0; i < live_preds.size(); ++i)
    for (std::size_t j = 0; j < care_gts.size(); ++j)
      ok[i][j] = polygon_iou(preds[live_preds[i]], gts[care_gts[j]]) >= thresh;
  std::vector<bool> used(care_gts.size(), false);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
    if (i == live_preds.size()) return 0;
    std::size_t b = best(i + 1);  // leave pred i unmatched
    for (std::size_t j = 0; j < care_gts.size(); ++j)
      if (ok[i][j] && !used[j]) {
        used[j] = true;
        b = std::max(b, 1 + best(i + 1));
        used[j] = false;
      }
    return b;
  };
  return best(0);
}

// IoU estimated by point sampling on an n x n grid over the joint bounding
// box, using the even-odd inside test.
inline double sampled_iou(const TextInstance& a, const TextInstance& b, std::size_t n = 400) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto* t : {&a, &b})
    for (const auto& p : t->polygon) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = x0 + (x1 - x0) * (static_cast<double>(j) + 0.5) / static_cast<double>(n);
      const double y = y0 + (y1 - y0) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const bool ia = point_in_polygon(a.polygon, x, y), ib = point_in_polygon(b.polygon, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline bool overlaps(const TextInstance& a, const TextInstance& b) {
  auto box = [](const TextInstance& t) {
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (const auto& p : t.polygon) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    return std::array<double, 4>{x0, y0, x1, y1};
  };
  const auto A = box(a), B = box(b);
  return A[0] < B[2] && B[0] < A[2] && A[1] < B[3] && B[1] < A[3];
}

// Random axis-aligned rectangles that do not overlap one another: `count`
// ground truths (some ignore) and predictions that are either jittered
// copies of a ground truth or free-floating boxes.
struct RandomScene {
  std::vector<TextInstance> preds, gts;
};

inline RandomScene random_disjoint_scene(std::mt19937_64& rng, std::size_t max_preds,
                                         std::size_t max_gts) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_box = [&] {
    const double w = 8 + 30 * u(rng), h = 6 + 14 * u(rng);
    const double x = 100 * u(rng), y = 100 * u(rng);
    return rect(x, y, x + w, y + h);
  };
  auto place = [&](std::vector<TextInstance>& set, const std::function<TextInstance()>& make) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      TextInstance c = make();
      if (std::none_of(set.begin(), set.end(), [&](const auto& s) { return overlaps(c, s); })) {
        set.push_back(c);
        return;
      }
    }
  };
  RandomScene s;
  const std::size_t ng = static_cast<std::size_t>(rng() % (max_gts + 1));
  const std::size_t np = static_cast<std::size_t>(rng() % (max_preds + 1));
  for (std::size_t i = 0; i < ng; ++i)
    place(s.gts, [&] {
      TextInstance t = random_box();
      t.ignore = u(rng) < 0.15;
      if (t.ignore) t.transcription = "###";
      return t;
    });
  for (std::size_t i = 0; i < np; ++i)
    place(s.preds, [&] {
      if (!s.gts.empty() && u(rng) < 0.75) {
        const TextInstance& g = s.gts[rng() % s.gts.size()];
        const double w = g.polygon[1].x - g.polygon[0].x, h = g.polygon[2].y - g.polygon[1].y;
        const double j = 0.4 * u(rng);
        auto d = [&](double len) { return (u(rng) * 2 - 1) * j * len; };
        return rect(g.polygon[0].x + d(w), g.polygon[0].y + d(h), g.polygon[2].x + d(w),
                    g.polygon[2].y + d(h));
      }
      return random_box();
    });
  return s;
}

}  // namespace tcm::testing
