#pragma once

// Netpbm image files: binary PPM (P6) for RGB inputs, binary PGM (P5) for
// exported single-channel maps. 8 bits per sample.

#include <string>
#include <vector>

#include "tcm/types.hpp"

namespace tcm::harness {

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& image);

// values are scaled by 255 after clamping to [0, 1].
void write_pgm(const std::string& path, std::size_t height, std::size_t width,
               const std::vector<double>& values);
// Returns values / 255.
std::vector<double> read_pgm(const std::string& path, std::size_t& height, std::size_t& width);

}  // namespace tcm::harness
