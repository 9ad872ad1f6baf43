#include "tcm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tcm/errors.hpp"

namespace tcm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kCkptMagic[8] = {'T', 'C', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr char kArrMagic[8] = {'T', 'C', 'M', 'A', 'R', 'R', '1', '\0'};
constexpr std::uint32_t kDtypeF64 = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw LoadError("cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f64s(std::span<const double> v) { bytes(v.data(), v.size() * 8); }
  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw LoadError("write failed for " + path);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!std::filesystem::exists(path)) throw NotFound("file not found: " + path);
    if (!in_) throw LoadError("cannot open " + path);
  }
  void bytes(void* p, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw LoadError(path_ + ": truncated while reading " + what);
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    bytes(&v, 8, what);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    if (n > (1u << 26)) throw LoadError(path_ + ": implausible length for " + what);
    std::string s(n, '\0');
    if (n) bytes(s.data(), n, what);
    return s;
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

ag::Shape read_shape(Reader& r, const std::string& name) {
  const std::uint32_t rank = r.u32("rank");
  if (rank > 8) throw LoadError(r.path() + ": tensor " + name + " has implausible rank");
  ag::Shape shape(rank);
  for (auto& d : shape) d = r.u64("dims");
  return shape;
}

}  // namespace

const TensorBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::string& path, const CheckpointHeader& header,
                      const nn::ParamList& params) {
  Writer w(path);
  w.bytes(kCkptMagic, 8);
  w.u32(header.version);
  w.u32(static_cast<std::uint32_t>(header.embed_dim));
  w.u32(static_cast<std::uint32_t>(header.word_dim));
  w.u32(static_cast<std::uint32_t>(header.stride));
  w.str(header.encoder_kind);
  w.str(header.config_text);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) w.u64(d);
    w.bytes(p.tensor.values().data(), p.tensor.size() * 8);
  }
  w.finish(path);
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kCkptMagic, 8) != 0) throw LoadError(path + ": not a TCM checkpoint");
  Checkpoint c;
  c.header.version = r.u32("version");
  if (c.header.version != kCheckpointVersion)
    throw LoadError(path + ": unsupported checkpoint version " + std::to_string(c.header.version));
  c.header.embed_dim = r.u32("C");
  c.header.word_dim = r.u32("D");
  c.header.stride = r.u32("s");
  c.header.encoder_kind = r.str("encoder kind");
  c.header.config_text = r.str("config text");
  const std::uint32_t count = r.u32("tensor count");
  c.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorBlob t;
    t.name = r.str("tensor name");
    t.shape = read_shape(r, t.name);
    t.data.resize(ag::numel(t.shape));
    r.bytes(t.data.data(), t.data.size() * 8, t.name.c_str());
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void write_raw_array(const std::string& path, const ag::Shape& shape,
                     std::span<const double> values) {
  if (values.size() != ag::numel(shape))
    throw DimensionMismatch("raw array values do not match shape " + ag::shape_str(shape));
  Writer w(path);
  w.bytes(kArrMagic, 8);
  w.u32(kDtypeF64);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) w.u64(d);
  w.f64s(values);
  w.finish(path);
}

TensorBlob read_raw_array(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kArrMagic, 8) != 0) throw LoadError(path + ": not a TCM raw array");
  if (r.u32("dtype") != kDtypeF64) throw LoadError(path + ": unsupported dtype");
  TensorBlob t;
  t.name = std::filesystem::path(path).stem().string();
  t.shape = read_shape(r, t.name);
  t.data.resize(ag::numel(t.shape));
  r.bytes(t.data.data(), t.data.size() * 8, "values");
  return t;
}

}  // namespace tcm
