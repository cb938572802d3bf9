#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "rsr/preprocess.hpp"

namespace rsr {

// Instrumentation filled in by the RSR kernels when requested.
struct OpCounter {
  std::uint64_t gather_adds = 0;
  std::uint64_t scatter_adds = 0;
  std::uint64_t groups_visited = 0;

  friend bool operator==(const OpCounter&, const OpCounter&) = default;
};

namespace simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa) noexcept;

// Highest variant the running CPU can execute.
Isa best_supported_isa() noexcept;
bool isa_supported(Isa isa) noexcept;

// Variant used by default dispatch: RSR_ISA=scalar|avx2 if set and
// supported, otherwise best_supported_isa().
Isa active_isa() noexcept;
void set_active_isa(Isa isa);

// One (tile, block) cell as seen by a block kernel. `col_offset` is the
// tile's first column in the full input vector.
struct CellView {
  const std::uint16_t* perm;
  const GroupRecord* groups;
  std::uint32_t group_count;
  std::uint32_t col_offset;
};

// Block kernels accumulate every cell of one row block into acc[0..height).
// acc must have room for 16 entries; entries at and above height stay zero.
using RsrBlockF64 = void (*)(std::span<const CellView> cells, const double* v, unsigned height,
                             double* acc, OpCounter* counter);
using RsrBlockI32 = void (*)(std::span<const CellView> cells, const std::int32_t* v,
                             unsigned height, std::int32_t* acc, OpCounter* counter);
using DenseF32 = void (*)(const float* w, std::size_t rows, std::size_t cols, const float* v,
                          float* y);
using DenseI8 = void (*)(const std::int8_t* w, std::size_t rows, std::size_t cols,
                         const std::int8_t* v, std::int32_t* y);
using AbsMax = float (*)(const float* v, std::size_t n);
using Quantize = void (*)(const float* v, std::size_t n, float scale, std::int8_t* q);

struct KernelTable {
  Isa isa;
  RsrBlockF64 rsr_block_f64;
  RsrBlockI32 rsr_block_i32;
  DenseF32 dense_f32;
  DenseI8 dense_i8;
  AbsMax absmax;
  Quantize quantize;
};

const KernelTable& kernel_table() noexcept;
const KernelTable& kernel_table(Isa isa);

}  // namespace simd
}  // namespace rsr
