#pragma once
// Checkpoint files.
//
//   "QART"  u16 version  u8 stage
//   u32 length, UTF-8 JSON {model, provenance, stage1_hash}
//   u32 parameter count, then per parameter (sorted by name):
//     u16 name length, name, u8 ndim, u32 dims[ndim], float32 values
//   u32 CRC32 of every preceding byte
//
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "quantart/bundle.hpp"

namespace quantart {

inline constexpr std::uint16_t kCheckpointVersion = 1;

template <class T>
std::vector<std::uint8_t> serialize_bundle(ModelBundle<T>& bundle);

// Throws IoError on a bad magic, version, CRC, or a parameter set that does
// not match the embedded config.
template <class T>
ModelBundle<T> deserialize_bundle(const std::vector<std::uint8_t>& bytes);

template <class T>
void save_checkpoint(ModelBundle<T>& bundle, const std::filesystem::path& path);

template <class T>
ModelBundle<T> load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace quantart
