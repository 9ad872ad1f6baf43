#pragma once

// Synthetic scene-text corpus for desk-scale runs: striped high-contrast
// rectangles ("words") on structured backgrounds, with exact annotations.
// Two style families differ in background statistics and text polarity:
//   domainA  bright smooth gradient, dark strokes on a light plate
//   domainB  dark noisy sinusoidal texture, light strokes on a dark plate

#include <cstdint>
#include <string>

#include "tcm/harness/dataset.hpp"

namespace tcm::harness {

// Writes `count` images plus annotations under `root` (images/, annotations/)
// and returns the spec. Output is a pure function of (count, seed, size,
// style). Roughly one instance in seven is tagged "###".
DatasetSpec generate_toy_data(std::size_t count, std::uint64_t seed, std::size_t image_size,
                              const std::string& style, const std::string& root);

// In-memory variant used by tests.
std::vector<Sample> render_toy_samples(std::size_t count, std::uint64_t seed,
                                       std::size_t image_size, const std::string& style);

}  // namespace tcm::harness
