#include "rsr/preprocess.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "rsr/error.hpp"
#include "rsr/parallel.hpp"

namespace rsr {

namespace {

constexpr unsigned kRadixBits = 11;
constexpr std::size_t kRadixBuckets = std::size_t{1} << kRadixBits;

std::size_t bucket_count(Bitwidth bw, unsigned height) {
  return std::size_t{1} << (bits_per_entry(bw) * height);
}

// Above this pattern-space size (and when it dwarfs the tile), distinct keys
// are ordered by a two-pass LSD radix sort instead of a full bucket scan.
bool use_sparse_order(std::size_t buckets, std::size_t cols) {
  return buckets > 2 * kRadixBuckets && buckets > 4 * cols;
}

GroupRecord masks_for_key(std::uint32_t key, Bitwidth bw, unsigned height) {
  GroupRecord g;
  if (bw == Bitwidth::Binary) {
    g.pos_mask = static_cast<std::uint16_t>(key);
    return g;
  }
  for (unsigned i = 0; i < height; ++i) {
    const std::uint32_t c = (key >> (2 * i)) & 3u;
    if (c == 1) g.pos_mask |= static_cast<std::uint16_t>(1u << i);
    if (c == 2) g.neg_mask |= static_cast<std::uint16_t>(1u << i);
  }
  return g;
}

void build_keys(const PackedMatrix& m, std::size_t row_begin, unsigned height,
                std::size_t col_begin, std::size_t col_count, std::uint32_t* keys) {
  std::fill(keys, keys + col_count, 0u);
  const unsigned bpe = bits_per_entry(m.bitwidth());
  const std::size_t epw = 64 / bpe;
  const std::uint64_t entry_mask = (std::uint64_t{1} << bpe) - 1;
  for (unsigned i = 0; i < height; ++i) {
    const auto words = m.row_words(row_begin + i);
    const unsigned shift = bpe * i;
    std::size_t c = 0;
    while (c < col_count) {
      const std::size_t col = col_begin + c;
      std::uint64_t w = words[col / epw] >> (bpe * (col % epw));
      const std::size_t run = std::min(col_count - c, epw - col % epw);
      for (std::size_t r = 0; r < run; ++r, w >>= bpe)
        keys[c + r] |= static_cast<std::uint32_t>(w & entry_mask) << shift;
      c += run;
    }
  }
}

void radix_sort_keys(std::vector<std::uint32_t>& keys, std::vector<std::uint32_t>& tmp,
                     unsigned key_bits, StepCounter* steps) {
  tmp.resize(keys.size());
  std::vector<std::uint32_t> hist(kRadixBuckets);
  for (unsigned shift = 0; shift < key_bits; shift += kRadixBits) {
    std::fill(hist.begin(), hist.end(), 0u);
    for (std::uint32_t k : keys) ++hist[(k >> shift) & (kRadixBuckets - 1)];
    std::uint32_t sum = 0;
    for (auto& h : hist) {
      const std::uint32_t c = h;
      h = sum;
      sum += c;
    }
    for (std::uint32_t k : keys) tmp[hist[(k >> shift) & (kRadixBuckets - 1)]++] = k;
    keys.swap(tmp);
    if (steps) steps->steps += 2 * keys.size() + kRadixBuckets;
  }
}

}  // namespace

unsigned max_k(Bitwidth bw) noexcept { return bw == Bitwidth::Binary ? kMaxKBinary : kMaxKTernary; }

std::size_t default_tile_width(std::size_t n) noexcept {
  return n <= kMaxTileWidth ? n : kDefaultWideTileWidth;
}

BlockPlan make_plan(std::size_t m, std::size_t n, unsigned k, Bitwidth bw, std::size_t tile_width) {
  if (k < 1 || k > max_k(bw))
    throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " outside [1, " +
                                          std::to_string(max_k(bw)) + "] for " + bitwidth_name(bw));
  if (m == 0 || n == 0) throw Error(ErrorKind::DimensionMismatch, "matrix dimensions must be >= 1");
  if (tile_width == 0) tile_width = default_tile_width(n);
  if (tile_width > kMaxTileWidth)
    throw Error(ErrorKind::TileTooWide, "tile width " + std::to_string(tile_width) + " exceeds " +
                                            std::to_string(kMaxTileWidth));
  BlockPlan p;
  p.k = k;
  p.block_count = (m + k - 1) / k;
  p.last_block_height = static_cast<unsigned>(m - k * (p.block_count - 1));
  p.tile_width = tile_width;
  p.tile_count = (n + tile_width - 1) / tile_width;
  return p;
}

std::size_t RsrArtifact::tile_cols(std::size_t tile) const noexcept {
  const std::size_t begin = header.plan.tile_begin(tile);
  return std::min(header.plan.tile_width, header.n - begin);
}

void PreprocessScratch::ensure(std::size_t buckets, std::size_t cols) {
  if (counts.size() < buckets) counts.assign(buckets, 0u);
  if (keys.size() < cols) keys.resize(cols);
}

std::uint32_t pattern_key(const PackedMatrix& m, std::size_t row_begin, unsigned height,
                          std::size_t col) noexcept {
  const unsigned bpe = bits_per_entry(m.bitwidth());
  std::uint32_t key = 0;
  for (unsigned i = 0; i < height; ++i) key |= m.code(row_begin + i, col) << (bpe * i);
  return key;
}

BlockMeta preprocess_block(const PackedMatrix& m, std::size_t row_begin, unsigned height,
                           std::size_t col_begin, std::size_t col_count,
                           PreprocessScratch& scratch, StepCounter* steps) {
  const Bitwidth bw = m.bitwidth();
  if (height < 1 || height > max_k(bw))
    throw Error(ErrorKind::KTooLarge, "block height " + std::to_string(height) + " exceeds cap " +
                                          std::to_string(max_k(bw)) + " for " + bitwidth_name(bw));
  if (col_count > kMaxTileWidth)
    throw Error(ErrorKind::TileTooWide, "tile of " + std::to_string(col_count) + " columns");

  const std::size_t buckets = bucket_count(bw, height);
  scratch.ensure(buckets, col_count);
  auto& counts = scratch.counts;
  auto& touched = scratch.touched;
  std::uint32_t* keys = scratch.keys.data();
  touched.clear();

  build_keys(m, row_begin, height, col_begin, col_count, keys);

  std::size_t retained = 0;
  for (std::size_t c = 0; c < col_count; ++c) {
    const std::uint32_t key = keys[c];
    if (key == 0) continue;
    if (counts[key]++ == 0) touched.push_back(key);
    ++retained;
  }
  if (steps) steps->steps += 2 * col_count;

  // Distinct keys in ascending order.
  if (use_sparse_order(buckets, col_count)) {
    radix_sort_keys(touched, scratch.radix_tmp, bits_per_entry(bw) * height, steps);
  } else {
    touched.clear();
    for (std::uint32_t key = 1; key < buckets; ++key)
      if (counts[key] != 0) touched.push_back(key);
    if (steps) steps->steps += buckets;
  }

  BlockMeta meta;
  meta.groups.reserve(touched.size());
  meta.perm.resize(retained);
  std::uint32_t start = 0;
  for (std::uint32_t key : touched) {
    GroupRecord g = masks_for_key(key, bw, height);
    g.perm_start = static_cast<std::uint16_t>(start);
    g.perm_len = static_cast<std::uint16_t>(counts[key]);
    meta.groups.push_back(g);
    counts[key] = start;  // becomes the write cursor
    start += g.perm_len;
  }
  if (steps) steps->steps += touched.size();

  // Ascending column scan keeps each group's segment sorted.
  for (std::size_t c = 0; c < col_count; ++c) {
    const std::uint32_t key = keys[c];
    if (key != 0) meta.perm[counts[key]++] = static_cast<std::uint16_t>(c);
  }
  if (steps) steps->steps += col_count;

  for (std::uint32_t key : touched) counts[key] = 0;
  if (steps) steps->steps += touched.size();
  return meta;
}

RsrArtifact preprocess(const PackedMatrix& m, unsigned k, std::size_t tile_width, unsigned threads) {
  RsrArtifact a;
  a.header.m = m.rows();
  a.header.n = m.cols();
  a.header.bitwidth = m.bitwidth();
  a.header.weight_scale = m.weight_scale();
  a.header.plan = make_plan(m.rows(), m.cols(), k, m.bitwidth(), tile_width);
  const BlockPlan& plan = a.header.plan;
  a.cells.resize(plan.tile_count * plan.block_count);

  parallel_for(a.cells.size(), threads, [&](std::size_t begin, std::size_t end, unsigned) {
    PreprocessScratch scratch;
    for (std::size_t idx = begin; idx < end; ++idx) {
      const std::size_t tile = idx / plan.block_count;
      const std::size_t block = idx % plan.block_count;
      try {
        a.cells[idx] = preprocess_block(m, block * plan.k, plan.block_height(block),
                                        plan.tile_begin(tile), a.tile_cols(tile), scratch);
      } catch (const Error& e) {
        throw Error(e.kind(), "tile " + std::to_string(tile) + ", block " + std::to_string(block) +
                                  ": " + e.what());
      }
    }
  });
  return a;
}

void validate(const RsrArtifact& a) {
  const auto fail = [](const std::string& msg) { throw Error(ErrorKind::CorruptArtifact, msg); };
  const ArtifactHeader& h = a.header;
  const BlockPlan& p = h.plan;
  BlockPlan expect;
  try {
    expect = make_plan(h.m, h.n, p.k, h.bitwidth, p.tile_width);
  } catch (const Error& e) {
    fail(std::string("inconsistent header: ") + e.what());
  }
  if (!(expect == p)) fail("block plan does not match header dimensions");
  if (a.cells.size() != p.tile_count * p.block_count) fail("cell grid has wrong size");

  std::vector<std::uint8_t> seen;
  for (std::size_t tile = 0; tile < p.tile_count; ++tile) {
    const std::size_t cols = a.tile_cols(tile);
    for (std::size_t block = 0; block < p.block_count; ++block) {
      const BlockMeta& meta = a.cell(tile, block);
      const std::string where = "tile " + std::to_string(tile) + ", block " + std::to_string(block);
      const std::uint32_t height_mask = (1u << p.block_height(block)) - 1;
      if (meta.perm.size() > cols) fail(where + ": permutation longer than tile");
      std::size_t cursor = 0;
      for (std::size_t gi = 0; gi < meta.groups.size(); ++gi) {
        const GroupRecord& g = meta.groups[gi];
        const std::string gw = where + ", group " + std::to_string(gi);
        if (g.perm_start != cursor) fail(gw + ": permutation ranges not consecutive");
        if (g.perm_len == 0) fail(gw + ": empty group");
        if ((g.pos_mask & g.neg_mask) != 0) fail(gw + ": overlapping scatter masks");
        if ((g.pos_mask | g.neg_mask) == 0) fail(gw + ": zero pattern stored");
        if (((g.pos_mask | g.neg_mask) & ~height_mask) != 0) fail(gw + ": mask bits beyond block height");
        if (h.bitwidth == Bitwidth::Binary && g.neg_mask != 0) fail(gw + ": binary group with negative mask");
        cursor += g.perm_len;
        if (cursor > meta.perm.size()) fail(gw + ": range past end of permutation");
        for (std::size_t j = g.perm_start + 1; j < cursor; ++j)
          if (meta.perm[j] <= meta.perm[j - 1]) fail(gw + ": permutation segment not strictly ascending");
      }
      if (cursor != meta.perm.size()) fail(where + ": group lengths do not cover permutation");
      seen.assign(cols, 0);
      for (std::uint16_t c : meta.perm) {
        if (c >= cols) fail(where + ": column index out of tile");
        if (seen[c]++) fail(where + ": column listed twice");
      }
    }
  }
}

PackedMatrix reconstruct(const RsrArtifact& a) {
  validate(a);
  const ArtifactHeader& h = a.header;
  std::vector<std::int8_t> entries(h.m * h.n, 0);
  for (std::size_t tile = 0; tile < h.plan.tile_count; ++tile) {
    const std::size_t col0 = h.plan.tile_begin(tile);
    for (std::size_t block = 0; block < h.plan.block_count; ++block) {
      const BlockMeta& meta = a.cell(tile, block);
      const std::size_t row0 = block * h.plan.k;
      for (const GroupRecord& g : meta.groups) {
        for (std::size_t j = g.perm_start; j < g.perm_start + g.perm_len; ++j) {
          const std::size_t col = col0 + meta.perm[j];
          for (unsigned bits = g.pos_mask; bits; bits &= bits - 1)
            entries[(row0 + std::countr_zero(bits)) * h.n + col] = 1;
          for (unsigned bits = g.neg_mask; bits; bits &= bits - 1)
            entries[(row0 + std::countr_zero(bits)) * h.n + col] = -1;
        }
      }
    }
  }
  return PackedMatrix::encode(entries, h.m, h.n, h.bitwidth, h.weight_scale);
}

}  // namespace rsr
