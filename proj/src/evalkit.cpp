#include "tcm/evalkit.hpp"

#include <algorithm>
#include <cmath>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

namespace tcm {

namespace bg = boost::geometry;

namespace {

using BPoint = bg::model::d2::point_xy<double>;
using BPolygon = bg::model::polygon<BPoint>;
using BMulti = bg::model::multi_polygon<BPolygon>;

// Zero-area hull. A bow-tie has zero signed area but is not degenerate.
bool degenerate(const TextInstance& t) {
  if (t.polygon.size() < 3) return true;
  bg::model::multi_point<BPoint> pts;
  for (const Point& p : t.polygon) bg::append(pts, BPoint(p.x, p.y));
  BPolygon hull;
  bg::convex_hull(pts, hull);
  return !(bg::area(hull) > 0.0);
}

BPolygon to_boost(const TextInstance& t, std::vector<std::string>* warnings) {
  BPolygon poly;
  for (const Point& p : t.polygon) bg::append(poly.outer(), BPoint(p.x, p.y));
  bg::correct(poly);
  std::string reason;
  if (!bg::is_valid(poly, reason)) {
    if (warnings) warnings->push_back("invalid polygon replaced by its convex hull: " + reason);
    BPolygon hull;
    bg::convex_hull(poly, hull);
    bg::correct(hull);
    return hull;
  }
  return poly;
}

double intersection_area(const BPolygon& a, const BPolygon& b) {
  BMulti out;
  bg::intersection(a, b, out);
  return bg::area(out);
}

}  // namespace

double polygon_iou(const TextInstance& a, const TextInstance& b,
                   std::vector<std::string>* warnings) {
  if (degenerate(a) || degenerate(b)) {
    if (warnings) warnings->push_back("IoU with a degenerate polygon counted as 0");
    return 0.0;
  }
  const BPolygon pa = to_boost(a, warnings), pb = to_boost(b, warnings);
  const double inter = intersection_area(pa, pb);
  const double uni = bg::area(pa) + bg::area(pb) - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double intersection_over_first(const TextInstance& a, const TextInstance& b,
                               std::vector<std::string>* warnings) {
  if (degenerate(a) || degenerate(b)) {
    if (warnings) warnings->push_back("overlap with a degenerate polygon counted as 0");
    return 0.0;
  }
  const BPolygon pa = to_boost(a, warnings), pb = to_boost(b, warnings);
  const double area = bg::area(pa);
  return area > 0.0 ? std::clamp(intersection_area(pa, pb) / area, 0.0, 1.0) : 0.0;
}

MatchResult match_instances(const std::vector<TextInstance>& preds,
                            const std::vector<TextInstance>& gts, const MatchOptions& opts) {
  MatchResult r;
  std::vector<bool> pred_dropped(preds.size(), false);
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (const TextInstance& g : gts) {
      if (!g.ignore) continue;
      const double overlap = opts.ignore_criterion == IgnoreCriterion::Iou
                                 ? polygon_iou(preds[p], g, &r.warnings)
                                 : intersection_over_first(preds[p], g, &r.warnings);
      if (overlap > opts.iou_thresh) {
        pred_dropped[p] = true;
        r.ignored_preds.push_back(p);
        break;
      }
    }

  struct Candidate {
    double iou;
    std::size_t pred, gt;
  };
  std::vector<Candidate> cands;
  for (std::size_t p = 0; p < preds.size(); ++p) {
    if (pred_dropped[p]) continue;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].ignore) continue;
      const double iou = polygon_iou(preds[p], gts[g], &r.warnings);
      if (iou >= opts.iou_thresh) cands.push_back({iou, p, g});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });
  std::vector<bool> pred_used(preds.size(), false), gt_used(gts.size(), false);
  for (const Candidate& c : cands) {
    if (pred_used[c.pred] || gt_used[c.gt]) continue;
    pred_used[c.pred] = gt_used[c.gt] = true;
    r.pairs.emplace_back(c.pred, c.gt);
  }

  std::size_t live_preds = 0, care_gts = 0;
  for (std::size_t p = 0; p < preds.size(); ++p) live_preds += pred_dropped[p] ? 0 : 1;
  for (const TextInstance& g : gts) care_gts += g.ignore ? 0 : 1;
  r.tp = r.pairs.size();
  r.fp = live_preds - r.tp;
  r.fn = care_gts - r.tp;
  return r;
}

Prf prf(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf out;
  out.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  out.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double s = out.precision + out.recall;
  out.fmeasure = s > 0.0 ? 2.0 * out.precision * out.recall / s : 0.0;
  return out;
}

bool operator==(const ImageRecord& a, const ImageRecord& b) {
  return a.image == b.image && a.tp == b.tp && a.fp == b.fp && a.fn == b.fn;
}

void EvalReport::add(const std::string& image, const MatchResult& m) {
  per_image.push_back({image, m.tp, m.fp, m.fn});
  tp += m.tp;
  fp += m.fp;
  fn += m.fn;
}

void EvalReport::finalize() {
  const Prf v = prf(tp, fp, fn);
  precision = v.precision;
  recall = v.recall;
  fmeasure = v.fmeasure;
}

}  // namespace tcm
