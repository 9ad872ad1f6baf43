#pragma once

// IoU-based detection evaluation with ICDAR-style ignore handling.

#include <string>
#include <vector>

#include "tcm/detector.hpp"

namespace tcm {

// Exact polygon IoU. Degenerate polygons score 0 and append a warning;
// self-intersecting input is replaced by its convex hull (also warned).
double polygon_iou(const TextInstance& a, const TextInstance& b,
                   std::vector<std::string>* warnings = nullptr);
// area(a ∩ b) / area(a)
double intersection_over_first(const TextInstance& a, const TextInstance& b,
                               std::vector<std::string>* warnings = nullptr);

enum class IgnoreCriterion { Iou, PredArea };

struct MatchOptions {
  double iou_thresh = 0.5;
  IgnoreCriterion ignore_criterion = IgnoreCriterion::Iou;
};

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred, gt)
  std::vector<std::size_t> ignored_preds;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::vector<std::string> warnings;
};

// Drops predictions overlapping an ignore ground truth above the threshold,
// then matches the rest one-to-one greedily by descending IoU with ties
// broken by (pred index, gt index). Pairs below the threshold stay unmatched.
MatchResult match_instances(const std::vector<TextInstance>& preds,
                            const std::vector<TextInstance>& gts,
                            const MatchOptions& opts = {});

struct Prf {
  double precision = 1.0, recall = 1.0, fmeasure = 1.0;
};

// Empty denominators count as 1 (an image with nothing to find and nothing
// found is perfect).
Prf prf(std::size_t tp, std::size_t fp, std::size_t fn);

struct ImageRecord {
  std::string image;
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct EvalReport {
  std::string name;
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 1.0, recall = 1.0, fmeasure = 1.0;
  std::vector<ImageRecord> per_image;

  void add(const std::string& image, const MatchResult& m);
  void finalize();
  bool operator==(const EvalReport&) const = default;
};

bool operator==(const ImageRecord& a, const ImageRecord& b);

}  // namespace tcm
