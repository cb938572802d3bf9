#include <algorithm>
#include <bit>
#include <cmath>

#include "kernel_common.hpp"

namespace rsr::simd {

namespace {

template <typename T, bool kCount>
void rsr_block(std::span<const CellView> cells, const T* v, T* acc, OpCounter* counter) {
  for (const CellView& cell : cells) {
    const T* vt = v + cell.col_offset;
    for (std::uint32_t gi = 0; gi < cell.group_count; ++gi) {
      const GroupRecord g = cell.groups[gi];
      const T s = gather_sum(vt, cell.perm + g.perm_start, g.perm_len);
      for (unsigned bits = g.pos_mask; bits; bits &= bits - 1) acc[std::countr_zero(bits)] += s;
      for (unsigned bits = g.neg_mask; bits; bits &= bits - 1) acc[std::countr_zero(bits)] -= s;
      if constexpr (kCount) count_group(counter, g);
    }
  }
}

void rsr_block_f64(std::span<const CellView> cells, const double* v, unsigned, double* acc,
                   OpCounter* counter) {
  if (counter)
    rsr_block<double, true>(cells, v, acc, counter);
  else
    rsr_block<double, false>(cells, v, acc, nullptr);
}

void rsr_block_i32(std::span<const CellView> cells, const std::int32_t* v, unsigned,
                   std::int32_t* acc, OpCounter* counter) {
  if (counter)
    rsr_block<std::int32_t, true>(cells, v, acc, counter);
  else
    rsr_block<std::int32_t, false>(cells, v, acc, nullptr);
}

void dense_f32(const float* w, std::size_t rows, std::size_t cols, const float* v, float* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = w + r * cols;
    float acc = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * v[c];
    y[r] = acc;
  }
}

void dense_i8(const std::int8_t* w, std::size_t rows, std::size_t cols, const std::int8_t* v,
              std::int32_t* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int8_t* row = w + r * cols;
    std::int32_t acc = 0;
    for (std::size_t c = 0; c < cols; ++c)
      acc += static_cast<std::int32_t>(row[c]) * static_cast<std::int32_t>(v[c]);
    y[r] = acc;
  }
}

float absmax(const float* v, std::size_t n) {
  float m = 0.0f;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(v[i]));
  return m;
}

// The float*float product is exact in double, so std::round sees the true
// value and rounds half away from zero.
void quantize(const float* v, std::size_t n, float scale, std::int8_t* q) {
  const double s = scale;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::round(static_cast<double>(v[i]) * s);
    q[i] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
  }
}

}  // namespace

const KernelTable& scalar_kernel_table() noexcept {
  static const KernelTable table{Isa::Scalar, rsr_block_f64, rsr_block_i32, dense_f32,
                                 dense_i8,    absmax,        quantize};
  return table;
}

}  // namespace rsr::simd
