#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "itowave/nn/tensor.hpp"

namespace itowave::nn {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Checkpoint layout, all integers little-endian:
//   magic "ITWCKPT\0" (8 bytes) | u32 version | u64 count |
//   count x ( u32 name_len | name bytes | u32 rank | rank x u64 dim |
//             prod(dims) x f64 value )
inline constexpr char kCheckpointMagic[8] = {'I', 'T', 'W', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace itowave::nn
