// AVX2 variants. This file is built with -mavx2 -mfma and is only entered
// after a runtime CPU check (see dispatch.cpp).

#include <cstring>

#include "kernel_common.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace rsr::simd {

namespace {

// Lane l of the result is all-ones iff bit (first_bit + l) of `bits` is set.
inline __m256d lane_mask_pd(__m256i bits_b, int first_bit) {
  const __m256i sel = _mm256_setr_epi64x(1LL << first_bit, 2LL << first_bit, 4LL << first_bit,
                                         8LL << first_bit);
  return _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(bits_b, sel), sel));
}

inline __m256i lane_mask_epi32(__m256i bits_b, int first_bit) {
  const __m256i sel = _mm256_slli_epi32(_mm256_setr_epi32(1, 2, 4, 8, 16, 32, 64, 128), first_bit);
  return _mm256_cmpeq_epi32(_mm256_and_si256(bits_b, sel), sel);
}

// Scatter through lane masks: rows whose bit is clear receive +0, which
// leaves the accumulator unchanged (it never holds -0).
template <int kRegs, bool kCount>
void rsr_block_f64_impl(std::span<const CellView> cells, const double* v, double* acc,
                        OpCounter* counter) {
  __m256d y[kRegs];
  for (int r = 0; r < kRegs; ++r) y[r] = _mm256_loadu_pd(acc + 4 * r);
  for (const CellView& cell : cells) {
    const double* vt = v + cell.col_offset;
    for (std::uint32_t gi = 0; gi < cell.group_count; ++gi) {
      const GroupRecord g = cell.groups[gi];
      const __m256d s = _mm256_set1_pd(gather_sum(vt, cell.perm + g.perm_start, g.perm_len));
      const __m256i pos = _mm256_set1_epi64x(g.pos_mask);
      const __m256i neg = _mm256_set1_epi64x(g.neg_mask);
      for (int r = 0; r < kRegs; ++r) {
        y[r] = _mm256_add_pd(y[r], _mm256_and_pd(s, lane_mask_pd(pos, 4 * r)));
        y[r] = _mm256_sub_pd(y[r], _mm256_and_pd(s, lane_mask_pd(neg, 4 * r)));
      }
      if constexpr (kCount) count_group(counter, g);
    }
  }
  for (int r = 0; r < kRegs; ++r) _mm256_storeu_pd(acc + 4 * r, y[r]);
}

template <int kRegs, bool kCount>
void rsr_block_i32_impl(std::span<const CellView> cells, const std::int32_t* v, std::int32_t* acc,
                        OpCounter* counter) {
  __m256i y[kRegs];
  for (int r = 0; r < kRegs; ++r)
    y[r] = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(acc + 8 * r));
  for (const CellView& cell : cells) {
    const std::int32_t* vt = v + cell.col_offset;
    for (std::uint32_t gi = 0; gi < cell.group_count; ++gi) {
      const GroupRecord g = cell.groups[gi];
      const __m256i s = _mm256_set1_epi32(gather_sum(vt, cell.perm + g.perm_start, g.perm_len));
      const __m256i pos = _mm256_set1_epi32(g.pos_mask);
      const __m256i neg = _mm256_set1_epi32(g.neg_mask);
      for (int r = 0; r < kRegs; ++r) {
        y[r] = _mm256_add_epi32(y[r], _mm256_and_si256(s, lane_mask_epi32(pos, 8 * r)));
        y[r] = _mm256_sub_epi32(y[r], _mm256_and_si256(s, lane_mask_epi32(neg, 8 * r)));
      }
      if constexpr (kCount) count_group(counter, g);
    }
  }
  for (int r = 0; r < kRegs; ++r)
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(acc + 8 * r), y[r]);
}

template <bool kCount>
void dispatch_f64(std::span<const CellView> cells, const double* v, unsigned height, double* acc,
                  OpCounter* counter) {
  switch ((height + 3) / 4) {
    case 1: rsr_block_f64_impl<1, kCount>(cells, v, acc, counter); break;
    case 2: rsr_block_f64_impl<2, kCount>(cells, v, acc, counter); break;
    case 3: rsr_block_f64_impl<3, kCount>(cells, v, acc, counter); break;
    default: rsr_block_f64_impl<4, kCount>(cells, v, acc, counter); break;
  }
}

void rsr_block_f64(std::span<const CellView> cells, const double* v, unsigned height, double* acc,
                   OpCounter* counter) {
  if (counter)
    dispatch_f64<true>(cells, v, height, acc, counter);
  else
    dispatch_f64<false>(cells, v, height, acc, nullptr);
}

void rsr_block_i32(std::span<const CellView> cells, const std::int32_t* v, unsigned height,
                   std::int32_t* acc, OpCounter* counter) {
  const bool two = height > 8;
  if (counter) {
    if (two) rsr_block_i32_impl<2, true>(cells, v, acc, counter);
    else rsr_block_i32_impl<1, true>(cells, v, acc, counter);
  } else {
    if (two) rsr_block_i32_impl<2, false>(cells, v, acc, nullptr);
    else rsr_block_i32_impl<1, false>(cells, v, acc, nullptr);
  }
}

inline float hsum_ps(__m256 x) {
  __m128 lo = _mm256_castps256_ps128(x);
  __m128 hi = _mm256_extractf128_ps(x, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 0x55));
  return _mm_cvtss_f32(lo);
}

void dense_f32(const float* w, std::size_t rows, std::size_t cols, const float* v, float* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = w + r * cols;
    __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
    __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
    std::size_t c = 0;
    for (; c + 32 <= cols; c += 32) {
      a0 = _mm256_fmadd_ps(_mm256_loadu_ps(row + c), _mm256_loadu_ps(v + c), a0);
      a1 = _mm256_fmadd_ps(_mm256_loadu_ps(row + c + 8), _mm256_loadu_ps(v + c + 8), a1);
      a2 = _mm256_fmadd_ps(_mm256_loadu_ps(row + c + 16), _mm256_loadu_ps(v + c + 16), a2);
      a3 = _mm256_fmadd_ps(_mm256_loadu_ps(row + c + 24), _mm256_loadu_ps(v + c + 24), a3);
    }
    for (; c + 8 <= cols; c += 8)
      a0 = _mm256_fmadd_ps(_mm256_loadu_ps(row + c), _mm256_loadu_ps(v + c), a0);
    float acc = hsum_ps(_mm256_add_ps(_mm256_add_ps(a0, a1), _mm256_add_ps(a2, a3)));
    for (; c < cols; ++c) acc += row[c] * v[c];
    y[r] = acc;
  }
}

void dense_i8(const std::int8_t* w, std::size_t rows, std::size_t cols, const std::int8_t* v,
              std::int32_t* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int8_t* row = w + r * cols;
    __m256i acc = _mm256_setzero_si256();
    std::size_t c = 0;
    for (; c + 16 <= cols; c += 16) {
      const __m256i a = _mm256_cvtepi8_epi16(_mm_loadu_si128(reinterpret_cast<const __m128i*>(row + c)));
      const __m256i b = _mm256_cvtepi8_epi16(_mm_loadu_si128(reinterpret_cast<const __m128i*>(v + c)));
      acc = _mm256_add_epi32(acc, _mm256_madd_epi16(a, b));
    }
    __m128i s = _mm_add_epi32(_mm256_castsi256_si128(acc), _mm256_extracti128_si256(acc, 1));
    s = _mm_add_epi32(s, _mm_shuffle_epi32(s, 0x4e));
    s = _mm_add_epi32(s, _mm_shuffle_epi32(s, 0xb1));
    std::int32_t total = _mm_cvtsi128_si32(s);
    for (; c < cols; ++c) total += static_cast<std::int32_t>(row[c]) * static_cast<std::int32_t>(v[c]);
    y[r] = total;
  }
}

float absmax(const float* v, std::size_t n) {
  const __m256 abs_mask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  __m256 m = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) m = _mm256_max_ps(m, _mm256_and_ps(_mm256_loadu_ps(v + i), abs_mask));
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, m);
  float r = 0.0f;
  for (float x : lanes) r = r > x ? r : x;
  for (; i < n; ++i) {
    const float x = v[i] < 0 ? -v[i] : v[i];
    r = r > x ? r : x;
  }
  return r;
}

// floor(|x| + 0.5) with the sign restored. x = v*scale is exact in double,
// which keeps |x| + 0.5 exact wherever the result can be nonzero.
void quantize(const float* v, std::size_t n, float scale, std::int8_t* q) {
  const __m256d s = _mm256_set1_pd(scale);
  const __m256d sign_bit = _mm256_set1_pd(-0.0);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d limit = _mm256_set1_pd(127.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_mul_pd(_mm256_cvtps_pd(_mm_loadu_ps(v + i)), s);
    const __m256d mag = _mm256_min_pd(
        _mm256_floor_pd(_mm256_add_pd(_mm256_andnot_pd(sign_bit, x), half)), limit);
    const __m256d r = _mm256_or_pd(mag, _mm256_and_pd(sign_bit, x));
    __m128i i32 = _mm256_cvtpd_epi32(r);
    i32 = _mm_packs_epi32(i32, i32);
    i32 = _mm_packs_epi16(i32, i32);
    const std::int32_t packed = _mm_cvtsi128_si32(i32);
    std::memcpy(q + i, &packed, 4);
  }
  if (i < n) scalar_kernel_table().quantize(v + i, n - i, scale, q + i);
}

}  // namespace

bool avx2_compiled() noexcept { return true; }

const KernelTable& avx2_kernel_table() noexcept {
  static const KernelTable table{Isa::Avx2, rsr_block_f64, rsr_block_i32, dense_f32,
                                 dense_i8,  absmax,        quantize};
  return table;
}

}  // namespace rsr::simd

#else

namespace rsr::simd {

bool avx2_compiled() noexcept { return false; }
const KernelTable& avx2_kernel_table() noexcept { return scalar_kernel_table(); }

}  // namespace rsr::simd

#endif
