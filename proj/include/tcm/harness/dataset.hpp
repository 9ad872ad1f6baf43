#pragma once

// Dataset layout and ICDAR-style annotation files.
//
// A dataset directory holds `images/<stem>.ppm` and
// `annotations/gt_<stem>.txt`. Each annotation line is
// `x1,y1,x2,y2,...,xk,yk,transcription` with k >= 3; the transcription is
// the last comma-separated field and `###` marks an ignore region.
// Prediction files use the same layout with the score in place of the
// transcription.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tcm/detector.hpp"

namespace tcm::harness {

struct DatasetSpec {
  std::string name;
  std::string images_dir;
  std::string annotations_dir;
  std::string format = "icdar";
  std::string split = "train";

  static DatasetSpec from_root(const std::string& root, const std::string& name,
                               const std::string& split = "train");
};

struct Sample {
  std::string name;  // image stem
  Image image;
  std::vector<TextInstance> instances;
};

inline constexpr std::string_view kIgnoreTag = "###";

TextInstance parse_annotation_line(std::string_view line, const std::string& origin,
                                   std::size_t line_no);
std::vector<TextInstance> read_annotations(const std::string& path);
void write_annotations(const std::string& path, const std::vector<TextInstance>& instances);

// Vertices are rounded to integers; the score follows with 4 decimals.
std::string format_prediction(const TextInstance& inst);
void write_predictions(const std::string& path, const std::vector<TextInstance>& preds);
std::vector<TextInstance> read_predictions(const std::string& path);

// Images sorted by file name. Throws NotFound when an annotation file is
// missing and ParseError (with file and line) on malformed lines.
std::vector<Sample> ingest_dataset(const DatasetSpec& spec);

// floor(ratio * N) images drawn uniformly without replacement, returned in
// their original order. ratio = 1 returns the input unchanged.
std::vector<Sample> subsample_fewshot(const std::vector<Sample>& data, double ratio,
                                      std::uint64_t seed);
std::size_t fewshot_count(std::size_t n, double ratio);

}  // namespace tcm::harness
