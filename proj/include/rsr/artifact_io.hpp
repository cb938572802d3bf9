#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rsr/preprocess.hpp"

namespace rsr {

// bits [0,16) perm_start | [16,32) perm_len | [32,48) pos_mask | [48,64) neg_mask
std::uint64_t pack_group(const GroupRecord& g) noexcept;
GroupRecord unpack_group(std::uint64_t word) noexcept;

// `.rsra` layout, little-endian throughout:
//   "RSRA" | version u8 (=1) | bitwidth u8 | k u8 | reserved u8 |
//   m u32 | n u32 | tile_width u32 | weight_scale f32
// followed by every (tile, block) cell in tile-major order:
//   group_count u32 | perm_len u32 | group_count x u64 | perm_len x u16,
//   zero-padded to a 4-byte boundary.
std::vector<std::uint8_t> serialize_artifact(const RsrArtifact& a);
RsrArtifact parse_artifact(std::span<const std::uint8_t> bytes);

std::size_t save_artifact(const RsrArtifact& a, const std::string& path);
RsrArtifact load_artifact(const std::string& path);

}  // namespace rsr
