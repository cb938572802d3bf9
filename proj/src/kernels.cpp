#include "rsr/kernels.hpp"

#include <array>
#include <string>

#include "rsr/error.hpp"
#include "rsr/parallel.hpp"

namespace rsr {

namespace {

void check_inputs(const RsrArtifact& a, std::size_t v_len) {
  if (v_len != a.header.n)
    throw Error(ErrorKind::DimensionMismatch, "vector length " + std::to_string(v_len) +
                                                  " != artifact cols " + std::to_string(a.header.n));
  const BlockPlan& p = a.header.plan;
  if (a.cells.size() != p.tile_count * p.block_count)
    throw Error(ErrorKind::CorruptArtifact, "cell grid does not match block plan");
}

template <typename T, typename BlockFn>
std::vector<T> run_blocks(const RsrArtifact& a, const T* v, const MatvecOptions& opts, BlockFn fn) {
  const BlockPlan& p = a.header.plan;
  std::vector<T> y(a.header.m, T{0});
  if (!opts.block_order.empty() && opts.block_order.size() != p.block_count)
    throw Error(ErrorKind::InvalidConfig, "block order must list every block");

  const unsigned threads = std::max(1u, opts.threads);
  std::vector<OpCounter> counters(opts.counter ? threads : 0);

  parallel_for(p.block_count, threads, [&](std::size_t begin, std::size_t end, unsigned worker) {
    std::vector<simd::CellView> views(p.tile_count);
    OpCounter* counter = opts.counter ? &counters[worker] : nullptr;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t block = opts.block_order.empty() ? i : opts.block_order[i];
      if (block >= p.block_count) throw Error(ErrorKind::InvalidConfig, "block index out of range");
      for (std::size_t tile = 0; tile < p.tile_count; ++tile) {
        const BlockMeta& meta = a.cell(tile, block);
        views[tile] = {meta.perm.data(), meta.groups.data(),
                       static_cast<std::uint32_t>(meta.groups.size()),
                       static_cast<std::uint32_t>(p.tile_begin(tile))};
      }
      alignas(32) std::array<T, 16> acc{};
      const unsigned h = p.block_height(block);
      fn(std::span<const simd::CellView>(views), v, h, acc.data(), counter);
      std::copy_n(acc.begin(), h, y.begin() + static_cast<std::ptrdiff_t>(block * p.k));
    }
  });

  if (opts.counter)
    for (const OpCounter& c : counters) {
      opts.counter->gather_adds += c.gather_adds;
      opts.counter->scatter_adds += c.scatter_adds;
      opts.counter->groups_visited += c.groups_visited;
    }
  return y;
}

const simd::KernelTable& table_for(const MatvecOptions& opts) {
  return opts.table ? *opts.table : simd::kernel_table();
}

}  // namespace

std::vector<float> rsr_matvec(const RsrArtifact& a, std::span<const float> v,
                              const MatvecOptions& opts) {
  check_inputs(a, v.size());
  const std::vector<double> vd(v.begin(), v.end());
  const auto y = run_blocks<double>(a, vd.data(), opts, table_for(opts).rsr_block_f64);
  return {y.begin(), y.end()};
}

std::vector<std::int32_t> rsr_matvec(const RsrArtifact& a, std::span<const std::int8_t> v,
                                     const MatvecOptions& opts) {
  check_inputs(a, v.size());
  const std::vector<std::int32_t> vi(v.begin(), v.end());
  return run_blocks<std::int32_t>(a, vi.data(), opts, table_for(opts).rsr_block_i32);
}

BatchedArtifact batched_preprocess(std::span<const PackedMatrix> mats, unsigned k,
                                   std::size_t tile_width, unsigned threads) {
  if (mats.empty()) throw Error(ErrorKind::HeterogeneousSiblings, "no sibling matrices given");
  const std::size_t n = mats.front().cols();
  const Bitwidth bw = mats.front().bitwidth();
  BatchedArtifact out;
  out.row_offsets.push_back(0);
  std::vector<std::int8_t> stacked;
  for (const PackedMatrix& m : mats) {
    if (m.cols() != n || m.bitwidth() != bw)
      throw Error(ErrorKind::HeterogeneousSiblings,
                  "siblings must share cols and bitwidth (got " + std::to_string(m.cols()) + " " +
                      bitwidth_name(m.bitwidth()) + " vs " + std::to_string(n) + " " +
                      bitwidth_name(bw) + ")");
    const auto e = m.decode();
    stacked.insert(stacked.end(), e.begin(), e.end());
    out.row_offsets.push_back(out.row_offsets.back() + m.rows());
    out.weight_scales.push_back(m.weight_scale());
  }
  const PackedMatrix all = PackedMatrix::encode(stacked, out.row_offsets.back(), n, bw, 1.0f);
  out.artifact = preprocess(all, k, tile_width, threads);
  return out;
}

float dequant_factor(float beta, float activation_scale) noexcept { return beta / activation_scale; }

void dequantize(std::span<const std::int32_t> y, float factor, std::span<float> out) noexcept {
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<float>(y[i]) * factor;
}

std::vector<float> rsr_matvec_fused(const RsrArtifact& a, std::span<const float> v,
                                    const MatvecOptions& opts) {
  check_inputs(a, v.size());
  const QuantizedVector q = quantize_activations(v);
  const auto y = rsr_matvec(a, std::span<const std::int8_t>(q.values), opts);
  std::vector<float> out(y.size());
  dequantize(y, dequant_factor(a.header.weight_scale, q.scale), out);
  return out;
}

std::vector<float> rsr_matvec_fused(const BatchedArtifact& b, std::span<const float> v,
                                    const MatvecOptions& opts) {
  check_inputs(b.artifact, v.size());
  const QuantizedVector q = quantize_activations(v);
  const auto y = rsr_matvec(b.artifact, std::span<const std::int8_t>(q.values), opts);
  std::vector<float> out(y.size());
  for (std::size_t s = 0; s < b.weight_scales.size(); ++s) {
    const std::size_t lo = b.row_offsets[s];
    const std::size_t len = b.row_offsets[s + 1] - lo;
    dequantize(std::span(y).subspan(lo, len), dequant_factor(b.weight_scales[s], q.scale),
               std::span(out).subspan(lo, len));
  }
  return out;
}

}  // namespace rsr
