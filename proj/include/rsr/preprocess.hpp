#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rsr/matrix.hpp"

namespace rsr {

inline constexpr unsigned kMaxKBinary = 16;
inline constexpr unsigned kMaxKTernary = 10;
// perm_len is a u16, so a tile can hold at most 65535 columns.
inline constexpr std::size_t kMaxTileWidth = 65535;
inline constexpr std::size_t kDefaultWideTileWidth = 32768;

unsigned max_k(Bitwidth bw) noexcept;
std::size_t default_tile_width(std::size_t n) noexcept;

// One distinct nonzero column pattern inside a (tile, block) cell.
struct GroupRecord {
  std::uint16_t perm_start = 0;
  std::uint16_t perm_len = 0;
  std::uint16_t pos_mask = 0;
  std::uint16_t neg_mask = 0;

  friend bool operator==(const GroupRecord&, const GroupRecord&) = default;
};

struct BlockMeta {
  std::vector<std::uint16_t> perm;  // tile-local column indices
  std::vector<GroupRecord> groups;

  friend bool operator==(const BlockMeta&, const BlockMeta&) = default;
};

struct BlockPlan {
  unsigned k = 1;
  std::size_t block_count = 0;
  unsigned last_block_height = 0;
  std::size_t tile_width = 0;
  std::size_t tile_count = 0;

  unsigned block_height(std::size_t block) const noexcept {
    return block + 1 == block_count ? last_block_height : k;
  }
  std::size_t tile_begin(std::size_t tile) const noexcept { return tile * tile_width; }

  friend bool operator==(const BlockPlan&, const BlockPlan&) = default;
};

// Validates caps (KTooLarge / TileTooWide). tile_width == 0 selects the default.
BlockPlan make_plan(std::size_t m, std::size_t n, unsigned k, Bitwidth bw, std::size_t tile_width = 0);

struct ArtifactHeader {
  std::size_t m = 0;
  std::size_t n = 0;
  Bitwidth bitwidth = Bitwidth::Binary;
  float weight_scale = 1.0f;
  BlockPlan plan;

  friend bool operator==(const ArtifactHeader&, const ArtifactHeader&) = default;
};

struct RsrArtifact {
  ArtifactHeader header;
  // tile-major grid: cells[tile * block_count + block]
  std::vector<BlockMeta> cells;

  const BlockMeta& cell(std::size_t tile, std::size_t block) const {
    return cells[tile * header.plan.block_count + block];
  }
  std::size_t tile_cols(std::size_t tile) const noexcept;

  friend bool operator==(const RsrArtifact&, const RsrArtifact&) = default;
};

// Elementary-step counter for the counting sort. One step is one per-column
// visit (key build, count, or scatter), one bucket visited by the dense
// prefix scan, one radix-pass bucket or element in the sparse path, or one
// emitted group / reset bucket.
struct StepCounter {
  std::uint64_t steps = 0;
};

// Reusable bucket storage. Sized for the largest pattern space seen so far
// and kept zeroed between blocks.
class PreprocessScratch {
 public:
  std::vector<std::uint32_t> counts;
  std::vector<std::uint32_t> touched;
  std::vector<std::uint32_t> radix_tmp;
  std::vector<std::uint32_t> keys;

  void ensure(std::size_t buckets, std::size_t cols);
};

std::uint32_t pattern_key(const PackedMatrix& m, std::size_t row_begin, unsigned height,
                          std::size_t col) noexcept;

BlockMeta preprocess_block(const PackedMatrix& m, std::size_t row_begin, unsigned height,
                           std::size_t col_begin, std::size_t col_count,
                           PreprocessScratch& scratch, StepCounter* steps = nullptr);

RsrArtifact preprocess(const PackedMatrix& m, unsigned k, std::size_t tile_width = 0,
                       unsigned threads = 1);

// Throws CorruptArtifact naming the first violated structural invariant.
void validate(const RsrArtifact& a);

PackedMatrix reconstruct(const RsrArtifact& a);

}  // namespace rsr
