#pragma once

// Shared pieces of the scalar and AVX2 kernel translation units. Everything
// here has internal linkage so each TU gets code built for its own target.

#include <cstdint>

#include "rsr/simd.hpp"

namespace rsr::simd {

const KernelTable& scalar_kernel_table() noexcept;
const KernelTable& avx2_kernel_table() noexcept;
bool avx2_compiled() noexcept;

}  // namespace rsr::simd

namespace {

// Fused gather+aggregate over one group's permutation segment. Four
// independent accumulators; both kernel variants use this exact order so
// their sums agree bit for bit.
template <typename T>
inline T gather_sum(const T* __restrict v, const std::uint16_t* __restrict idx, std::uint32_t len) {
  T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  std::uint32_t j = 0;
  for (; j + 4 <= len; j += 4) {
    a0 += v[idx[j]];
    a1 += v[idx[j + 1]];
    a2 += v[idx[j + 2]];
    a3 += v[idx[j + 3]];
  }
  for (; j < len; ++j) a0 += v[idx[j]];
  return (a0 + a1) + (a2 + a3);
}

inline void count_group(rsr::OpCounter* counter, const rsr::GroupRecord& g) {
  counter->gather_adds += g.perm_len;
  counter->scatter_adds += static_cast<unsigned>(__builtin_popcount(g.pos_mask)) +
                           static_cast<unsigned>(__builtin_popcount(g.neg_mask));
  counter->groups_visited += 1;
}

}  // namespace
