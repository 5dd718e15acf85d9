#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "unicorn/datamodel.hpp"
#include "unicorn/errors.hpp"

namespace unicorn {
namespace {

constexpr char kMagic[4] = {'C', 'G', 'V', '1'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

}  // namespace

void FmriVolume::validate() const {
  if (dims.x == 0 || dims.y == 0 || dims.z == 0) throw ValidationError("volume dims must be positive");
  if (voxels.size() != dims.voxel_count()) {
    throw ValidationError("volume has " + std::to_string(voxels.size()) + " voxels, dims require " +
                          std::to_string(dims.voxel_count()));
  }
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    if (!std::isfinite(voxels[i])) throw ValidationError("non-finite voxel at offset " + std::to_string(i));
  }
}

std::string encode_volume(const FmriVolume& volume) {
  volume.validate();
  std::string out;
  out.reserve(kHeaderBytes + 4 * volume.voxels.size());
  out.append(kMagic, 4);
  put_u32(out, volume.dims.x);
  put_u32(out, volume.dims.y);
  put_u32(out, volume.dims.z);
  for (float v : volume.voxels) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

FmriVolume decode_volume(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("volume: bad magic");
  if (bytes.size() < kHeaderBytes) throw CorruptionError("volume: truncated header");
  FmriVolume volume;
  volume.dims = {get_u32(bytes, 4), get_u32(bytes, 8), get_u32(bytes, 12)};
  const std::size_t count = volume.dims.voxel_count();
  if (bytes.size() - kHeaderBytes != 4 * count) {
    throw CorruptionError("volume: dims " + std::to_string(volume.dims.x) + "x" + std::to_string(volume.dims.y) +
                          "x" + std::to_string(volume.dims.z) + " need " + std::to_string(4 * count) +
                          " payload bytes, found " + std::to_string(bytes.size() - kHeaderBytes));
  }
  volume.voxels.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    volume.voxels[i] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i));
  volume.validate();
  return volume;
}

void write_volume(const FmriVolume& volume, const std::filesystem::path& path) {
  const std::string bytes = encode_volume(volume);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing " + path.string());
}

FmriVolume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_volume(buffer.str());
}

}  // namespace unicorn
