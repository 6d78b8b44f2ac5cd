#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "geotext/model.hpp"
#include "geotext/optim.hpp"

namespace geotext {

// Binary container, all integers little-endian:
//
//   magic        8 bytes  "GTXCKPT\0"
//   version      u32      kCheckpointVersion
//   payload_len  u64      bytes between this field and the checksum
//   payload:
//     config_len u64, config text (ModelConfig::to_text)
//     has_optim  u8; if 1: steps_taken u64
//     count      u32
//     count x { name_len u32, name bytes, rank u32, dims u64[rank], data f64[prod(dims)] }
//   checksum     u64      FNV-1a over every preceding byte
//
// Tensor order is ModelParams::named(), followed by "optim.m.<name>" and
// "optim.v.<name>" pairs when optimizer state is present.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::optional<AdamState> optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// FormatError on bad magic / truncation / malformed layout, VersionError on
/// an unknown version, IntegrityError on checksum mismatch.
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Atomic: writes a sibling temp file, then renames over `path`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` to `path` via temp file + rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace geotext
