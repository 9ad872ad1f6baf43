#include "tcm/harness/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tcm/errors.hpp"

namespace tcm::harness {

namespace {

std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(ch);
  }
  if (tok.empty()) throw ParseError(path + ": truncated netpbm header");
  return tok;
}

struct Header {
  std::size_t width, height;
};

Header read_header(std::istream& in, const std::string& path, const char* magic) {
  if (next_token(in, path) != magic)
    throw ParseError(path + ": expected netpbm magic " + std::string(magic));
  Header h{};
  try {
    h.width = std::stoul(next_token(in, path));
    h.height = std::stoul(next_token(in, path));
    if (std::stoul(next_token(in, path)) != 255)
      throw ParseError(path + ": only 8-bit netpbm files are supported");
  } catch (const std::logic_error&) {
    throw ParseError(path + ": malformed netpbm header");
  }
  if (h.width == 0 || h.height == 0) throw ParseError(path + ": empty image");
  return h;
}

std::ifstream open_in(const std::string& path) {
  if (!std::filesystem::exists(path)) throw NotFound("image not found: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path);
  return in;
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in = open_in(path);
  const Header h = read_header(in, path, "P6");
  std::vector<unsigned char> raw(h.width * h.height * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw ParseError(path + ": truncated pixel data");
  Image img{h.height, h.width, std::vector<double>(raw.size())};
  std::transform(raw.begin(), raw.end(), img.pixels.begin(),
                 [](unsigned char b) { return static_cast<double>(b) / 255.0; });
  return img;
}

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), raw.begin(), to_byte);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

void write_pgm(const std::string& path, std::size_t height, std::size_t width,
               const std::vector<double>& values) {
  if (values.size() != height * width) throw DimensionMismatch("write_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<unsigned char> raw(values.size());
  std::transform(values.begin(), values.end(), raw.begin(), to_byte);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

std::vector<double> read_pgm(const std::string& path, std::size_t& height, std::size_t& width) {
  std::ifstream in = open_in(path);
  const Header h = read_header(in, path, "P5");
  std::vector<unsigned char> raw(h.width * h.height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw ParseError(path + ": truncated pixel data");
  height = h.height;
  width = h.width;
  std::vector<double> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(),
                 [](unsigned char b) { return static_cast<double>(b) / 255.0; });
  return out;
}

}  // namespace tcm::harness
