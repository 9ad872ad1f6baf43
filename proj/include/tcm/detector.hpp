#pragma once

// Segmentation detection head on top of the prompted features, its loss,
// ground-truth rasterization, and conversion of probability maps back into
// text polygons.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcm/nn.hpp"
#include "tcm/types.hpp"

namespace tcm {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct TextInstance {
  std::vector<Point> polygon;  // image pixels
  bool ignore = false;
  double score = 1.0;  // predictions only
  std::string transcription;
};

double signed_area(const std::vector<Point>& polygon);
bool point_in_polygon(const std::vector<Point>& polygon, double x, double y);
// Reason the instance violates the TextInstance invariants, if any.
std::optional<std::string> instance_problem(const TextInstance& inst);

struct TargetMasks {
  std::size_t stride = 1;
  std::size_t grid_h = 0, grid_w = 0;  // stride-level size
  std::size_t height = 0, width = 0;   // padded pixel size
  std::vector<double> text_mask;        // grid_h * grid_w, {0,1}
  std::vector<double> ignore_mask;      // grid_h * grid_w, {0,1}
  std::vector<double> full_res_mask;    // height * width
  std::vector<double> full_res_ignore;  // height * width
  std::vector<std::string> warnings;
};

// A cell (or pixel) is set iff its center lies inside a polygon. Image size
// is padded up to a multiple of the stride first. Text wins where a text
// polygon and an ignore polygon overlap, keeping the masks disjoint.
TargetMasks rasterize_targets(const std::vector<TextInstance>& instances, std::size_t height,
                              std::size_t width, std::size_t stride);

struct HeadConfig {
  std::size_t hidden = 32;
};

// Concatenates the score map as an extra channel onto the fused features
// (when given), then conv at stride s, bilinear to stride 4, conv, 1x1 conv,
// and bilinear to full resolution.
class DetectionHead {
 public:
  DetectionHead() = default;
  DetectionHead(std::size_t in_channels, const HeadConfig& cfg, nn::Rng& rng);

  // Returns per-pixel text probability, [grid_h * s, grid_w * s, 1].
  ag::Tensor operator()(const FeatureMap& fused, const ScoreMap* score) const;

  std::size_t in_channels() const { return in_channels_; }
  void collect(nn::ParamList& out) const;

 private:
  std::size_t in_channels_ = 0;
  nn::Conv2d reduce_, refine_, predict_;
};

ag::Tensor head_forward(const DetectionHead& head, const FeatureMap& fused, const ScoreMap& p);

// Mean BCE plus Dice (smooth 1) over non-ignored full-resolution pixels.
// Returns 0 and records a warning when every pixel is ignored.
ag::Tensor det_loss(const ag::Tensor& pred, const TargetMasks& targets,
                    std::vector<std::string>* warnings = nullptr);

// Binarize, 4-connected components, drop components with fewer than
// min_area pixels, emit each component's outer pixel-boundary contour with
// collinear vertices removed. Score is the mean probability inside.
std::vector<TextInstance> polygonize(std::span<const double> prob, std::size_t height,
                                     std::size_t width, double bin_thresh, double min_area);

}  // namespace tcm
