#include "rsr/artifact_io.hpp"

#include <algorithm>

#include "rsr/detail/bytes.hpp"
#include "rsr/error.hpp"

namespace rsr {

namespace {

constexpr std::uint8_t kVersion = 1;

[[noreturn]] void corrupt(std::size_t offset, const std::string& what) {
  throw Error(ErrorKind::CorruptArtifact, what + " (offset " + std::to_string(offset) + ")");
}

}  // namespace

std::uint64_t pack_group(const GroupRecord& g) noexcept {
  return static_cast<std::uint64_t>(g.perm_start) | static_cast<std::uint64_t>(g.perm_len) << 16 |
         static_cast<std::uint64_t>(g.pos_mask) << 32 | static_cast<std::uint64_t>(g.neg_mask) << 48;
}

GroupRecord unpack_group(std::uint64_t word) noexcept {
  return {static_cast<std::uint16_t>(word), static_cast<std::uint16_t>(word >> 16),
          static_cast<std::uint16_t>(word >> 32), static_cast<std::uint16_t>(word >> 48)};
}

std::vector<std::uint8_t> serialize_artifact(const RsrArtifact& a) {
  const ArtifactHeader& h = a.header;
  detail::ByteWriter w;
  w.put_bytes("RSRA", 4);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(h.bitwidth));
  w.u8(static_cast<std::uint8_t>(h.plan.k));
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(h.m));
  w.u32(static_cast<std::uint32_t>(h.n));
  w.u32(static_cast<std::uint32_t>(h.plan.tile_width));
  w.f32(h.weight_scale);
  for (const BlockMeta& meta : a.cells) {
    w.u32(static_cast<std::uint32_t>(meta.groups.size()));
    w.u32(static_cast<std::uint32_t>(meta.perm.size()));
    for (const GroupRecord& g : meta.groups) w.u64(pack_group(g));
    for (std::uint16_t c : meta.perm) w.u16(c);
    w.pad_to(4);
  }
  return w.take();
}

RsrArtifact parse_artifact(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), "RSRA"))
    throw Error(ErrorKind::BadMagic, "not an .rsra file");
  const std::uint8_t version = r.u8();
  if (version != kVersion)
    throw Error(ErrorKind::UnsupportedVersion, "unsupported .rsra version " + std::to_string(version));
  const std::uint8_t bw = r.u8();
  if (bw > 1) corrupt(5, "bad bitwidth byte");
  const unsigned k = r.u8();
  if (r.u8() != 0) corrupt(7, "reserved byte must be zero");

  RsrArtifact a;
  a.header.bitwidth = static_cast<Bitwidth>(bw);
  a.header.m = r.u32();
  a.header.n = r.u32();
  const std::uint32_t tile_width = r.u32();
  a.header.weight_scale = r.f32();
  if (tile_width == 0) corrupt(16, "tile width is zero");
  try {
    a.header.plan = make_plan(a.header.m, a.header.n, k, a.header.bitwidth, tile_width);
  } catch (const Error& e) {
    corrupt(8, std::string("invalid header: ") + e.what());
  }

  const BlockPlan& p = a.header.plan;
  a.cells.resize(p.tile_count * p.block_count);
  for (std::size_t idx = 0; idx < a.cells.size(); ++idx) {
    const std::size_t cell_offset = r.offset();
    const std::uint32_t group_count = r.u32();
    const std::uint32_t perm_len = r.u32();
    const std::size_t tile_cols = a.tile_cols(idx / p.block_count);
    if (perm_len > tile_cols) corrupt(cell_offset, "permutation longer than tile");
    if (group_count > perm_len) corrupt(cell_offset, "more groups than permuted columns");
    BlockMeta& meta = a.cells[idx];
    meta.groups.resize(group_count);
    for (auto& g : meta.groups) g = unpack_group(r.u64());
    meta.perm.resize(perm_len);
    for (auto& c : meta.perm) c = r.u16();
    const std::size_t pad = (4 - r.offset() % 4) % 4;
    for (std::uint8_t b : r.take(pad))
      if (b != 0) corrupt(r.offset() - pad, "nonzero padding");
  }
  if (r.remaining() != 0) corrupt(r.offset(), "trailing bytes after last cell");

  try {
    validate(a);
  } catch (const Error& e) {
    throw Error(ErrorKind::CorruptArtifact, e.what());
  }
  return a;
}

std::size_t save_artifact(const RsrArtifact& a, const std::string& path) {
  const auto bytes = serialize_artifact(a);
  detail::write_file(path, bytes);
  return bytes.size();
}

RsrArtifact load_artifact(const std::string& path) { return parse_artifact(detail::read_file(path)); }

}  // namespace rsr
