#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsr/kernels.hpp"
#include "rsr/multiplier.hpp"

namespace rsr::toy {

enum class Backend { Naive, Rsr };

std::string backend_name(Backend b);
Backend parse_backend(const std::string& name);

// Residual MLP stack. Each depth unit is a q/k/v sibling triple (d -> d
// each) mixed elementwise, then an output projection (d -> d); a final head
// maps d -> vocab. All weights are absmean-ternarized.
struct ToyModel {
  std::size_t d = 0;
  std::size_t vocab = 0;
  std::size_t depth = 0;
  std::uint64_t seed = 0;
  std::vector<PackedMatrix> layers;  // q,k,v,o per unit, then head
  std::vector<std::array<std::size_t, 3>> sibling_groups;
  std::vector<Multiplier> dense;  // NaiveI8 per layer, for the naive backend

  struct RsrState {
    unsigned k = 0;
    std::vector<BatchedArtifact> siblings;  // one per depth unit
    std::vector<RsrArtifact> outputs;       // o projections
    RsrArtifact head;
  };
  std::optional<RsrState> rsr;

  std::size_t head_index() const noexcept { return layers.size() - 1; }
};

ToyModel build_toy_model(std::uint64_t seed, std::size_t d, std::size_t vocab, std::size_t depth);

// Preprocesses every layer (siblings batched) for the RSR backend. k = 0
// picks, per layer, the k with the lowest modeled op count.
void prepare_rsr(ToyModel& model, unsigned k = 0);

// Lowest-cost k for a ternary layer under the bench cost model.
unsigned model_k(const PackedMatrix& layer);

// Concatenated .rsrm images of every layer.
std::vector<std::uint8_t> model_bytes(const ToyModel& model);

struct DecodeStats {
  std::size_t tokens_generated = 0;
  double tokens_per_second = 0;
  Backend backend = Backend::Naive;
};

struct DecodeResult {
  std::vector<std::uint32_t> tokens;
  DecodeStats stats;
};

DecodeResult greedy_decode(const ToyModel& model, Backend backend,
                           std::span<const std::uint32_t> prompt, std::size_t steps,
                           unsigned threads = 1);

// Position of the largest value; ties go to the smallest index.
std::size_t argmax(std::span<const float> logits) noexcept;

}  // namespace rsr::toy
