#include "itowave/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "itowave/binary_io.hpp"
#include "itowave/errors.hpp"

namespace itowave::nn {

using binary::read_f64;
using binary::read_le;
using binary::write_f64;
using binary::write_le;

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, tensors.size());
  for (const NamedTensor& t : tensors) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) write_le<std::uint64_t>(out, d);
    for (double v : t.value.data()) write_f64(out, v);
  }
  if (!out) throw DataError("failed writing checkpoint stream");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError("not an itowave checkpoint (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = read_le<std::uint64_t>(in, "parameter count");
  std::vector<NamedTensor> out;
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto name_len = read_le<std::uint32_t>(in, "name length");
    if (name_len > (1u << 16)) throw FormatError("implausible parameter name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("truncated parameter name");
    const auto rank = read_le<std::uint32_t>(in, "rank");
    if (rank > 8) throw FormatError("implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = read_le<std::uint64_t>(in, "dimension");
    const std::size_t size = shape_size(shape);
    if (size > (std::size_t{1} << 32)) throw FormatError("implausible size for '" + name + "'");
    std::vector<double> data(size);
    for (double& v : data) v = read_f64(in, "parameter values");
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace itowave::nn
