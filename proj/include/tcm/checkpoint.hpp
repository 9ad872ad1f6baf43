#pragma once

// Versioned binary checkpoint. All integers and floats are little-endian.
//
//   offset  size  field
//   0       8     magic "TCMCKPT\0"
//   8       4     u32 format version (currently 1)
//   12      4     u32 C (image/text embedding width)
//   16      4     u32 D (word embedding width)
//   20      4     u32 s (image encoder stride)
//   24      4     u32 length of encoder kind, then that many UTF-8 bytes
//   ..      4     u32 length of config text, then that many UTF-8 bytes
//   ..      4     u32 tensor count N
//   then N records:
//           4     u32 name length, then the name bytes
//           4     u32 rank R
//           8*R   u64 dims
//           8*n   f64 values, row-major, n = product of dims

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcm/nn.hpp"

namespace tcm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::size_t embed_dim = 0;
  std::size_t word_dim = 0;
  std::size_t stride = 0;
  std::string encoder_kind = "toy";
  std::string config_text;
};

struct TensorBlob {
  std::string name;
  ag::Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  CheckpointHeader header;
  std::vector<TensorBlob> tensors;

  const TensorBlob* find(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const CheckpointHeader& header,
                      const nn::ParamList& params);
Checkpoint read_checkpoint(const std::string& path);

// Raw array file used by map export:
//   magic "TCMARR1\0", u32 dtype (1 = f64), u32 rank, u64 dims[rank],
//   f64 values row-major. Little-endian throughout.
void write_raw_array(const std::string& path, const ag::Shape& shape,
                     std::span<const double> values);
TensorBlob read_raw_array(const std::string& path);

}  // namespace tcm
