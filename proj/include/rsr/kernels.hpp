#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rsr/matrix.hpp"
#include "rsr/preprocess.hpp"
#include "rsr/simd.hpp"

namespace rsr {

struct MatvecOptions {
  unsigned threads = 1;
  OpCounter* counter = nullptr;
  // Processing order of row blocks; empty means ascending. Output does not
  // depend on it since blocks own disjoint rows.
  std::span<const std::size_t> block_order = {};
  // Kernel variant; nullptr means the active dispatch table.
  const simd::KernelTable* table = nullptr;
};

// Gather-aggregate-scatter product. Real inputs accumulate group and row
// sums in double and round once to float; int8 inputs accumulate in int32
// and are exact.
std::vector<float> rsr_matvec(const RsrArtifact& a, std::span<const float> v,
                              const MatvecOptions& opts = {});
std::vector<std::int32_t> rsr_matvec(const RsrArtifact& a, std::span<const std::int8_t> v,
                                     const MatvecOptions& opts = {});

// Vertically stacked sibling matrices that share one input vector.
struct BatchedArtifact {
  RsrArtifact artifact;
  std::vector<std::size_t> row_offsets;  // size = siblings + 1
  std::vector<float> weight_scales;      // one per sibling
};

BatchedArtifact batched_preprocess(std::span<const PackedMatrix> mats, unsigned k,
                                   std::size_t tile_width = 0, unsigned threads = 1);

// y * (beta / scale), evaluated as float(y) * float(beta / scale). Every
// quantized path dequantizes through here.
float dequant_factor(float beta, float activation_scale) noexcept;
void dequantize(std::span<const std::int32_t> y, float factor, std::span<float> out) noexcept;

// Absmax-quantize v, run the int32 RSR product, dequantize with the
// artifact's weight scale.
std::vector<float> rsr_matvec_fused(const RsrArtifact& a, std::span<const float> v,
                                    const MatvecOptions& opts = {});
// Same, with each sibling's rows dequantized by its own weight scale.
std::vector<float> rsr_matvec_fused(const BatchedArtifact& b, std::span<const float> v,
                                    const MatvecOptions& opts = {});

}  // namespace rsr
