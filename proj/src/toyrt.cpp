#include "rsr/toyrt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "rsr/bench.hpp"
#include "rsr/error.hpp"

namespace rsr::toy {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

PackedMatrix random_layer(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> w(rows * cols);
  for (auto& x : w) x = dist(rng);
  return ternarize_weights(w, rows, cols);
}

void embed(std::uint32_t token, std::uint64_t seed, std::span<float> out) {
  for (std::size_t j = 0; j < out.size(); ++j) {
    const std::uint64_t h = splitmix64(seed ^ (static_cast<std::uint64_t>(token) << 32) ^ j);
    out[j] = static_cast<float>(static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  }
}

void normalize_absmax(std::vector<float>& x) {
  float m = 0.0f;
  for (float v : x) m = std::max(m, std::fabs(v));
  if (m > 0.0f)
    for (float& v : x) v /= m;
}

// Quantized linear layer on the dense path: absmax activations, exact int32
// product, shared dequantization.
std::vector<float> naive_linear(const ToyModel& m, std::size_t layer, std::span<const float> x) {
  const QuantizedVector q = quantize_activations(x);
  const auto y = m.dense[layer].multiply(std::span<const std::int8_t>(q.values));
  std::vector<float> out(y.size());
  dequantize(y, dequant_factor(m.layers[layer].weight_scale(), q.scale), out);
  return out;
}

class Forward {
 public:
  Forward(const ToyModel& model, Backend backend, unsigned threads)
      : model_(model), backend_(backend) {
    opts_.threads = threads;
  }

  // Advances the hidden state by one token and returns the head logits.
  std::vector<float> step(std::vector<float>& hidden, std::uint32_t token) {
    const std::size_t d = model_.d;
    std::vector<float> x(d);
    embed(token, model_.seed, x);
    for (std::size_t j = 0; j < d; ++j) x[j] += 0.5f * hidden[j];
    normalize_absmax(x);

    for (std::size_t unit = 0; unit < model_.depth; ++unit) {
      const std::vector<float> qkv = siblings(unit, x);
      std::vector<float> mixed(d);
      for (std::size_t j = 0; j < d; ++j) {
        const float q = std::max(qkv[j], 0.0f);
        mixed[j] = q * q + qkv[d + j] * qkv[2 * d + j];
      }
      const std::vector<float> o = output(unit, mixed);
      for (std::size_t j = 0; j < d; ++j) x[j] += o[j];
      normalize_absmax(x);
    }
    hidden = x;
    return head(x);
  }

 private:
  std::vector<float> siblings(std::size_t unit, std::span<const float> x) const {
    if (backend_ == Backend::Rsr) return rsr_matvec_fused(model_.rsr->siblings[unit], x, opts_);
    std::vector<float> out;
    for (std::size_t idx : model_.sibling_groups[unit]) {
      const auto part = naive_linear(model_, idx, x);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  std::vector<float> output(std::size_t unit, std::span<const float> x) const {
    if (backend_ == Backend::Rsr) return rsr_matvec_fused(model_.rsr->outputs[unit], x, opts_);
    return naive_linear(model_, 4 * unit + 3, x);
  }
  std::vector<float> head(std::span<const float> x) const {
    if (backend_ == Backend::Rsr) return rsr_matvec_fused(model_.rsr->head, x, opts_);
    return naive_linear(model_, model_.head_index(), x);
  }

  const ToyModel& model_;
  Backend backend_;
  MatvecOptions opts_;
};

}  // namespace

std::string backend_name(Backend b) { return b == Backend::Rsr ? "rsr" : "naive"; }

Backend parse_backend(const std::string& name) {
  if (name == "rsr") return Backend::Rsr;
  if (name == "naive") return Backend::Naive;
  throw Error(ErrorKind::InvalidConfig, "unknown backend '" + name + "'");
}

ToyModel build_toy_model(std::uint64_t seed, std::size_t d, std::size_t vocab, std::size_t depth) {
  if (depth < 1) throw Error(ErrorKind::InvalidDepth, "depth must be >= 1");
  if (d < 2 || vocab < 2) throw Error(ErrorKind::InvalidConfig, "d and vocab must be >= 2");
  ToyModel m;
  m.d = d;
  m.vocab = vocab;
  m.depth = depth;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t unit = 0; unit < depth; ++unit) {
    const std::size_t base = m.layers.size();
    for (int i = 0; i < 4; ++i) m.layers.push_back(random_layer(rng, d, d));
    m.sibling_groups.push_back({base, base + 1, base + 2});
  }
  m.layers.push_back(random_layer(rng, vocab, d));
  for (const auto& layer : m.layers) m.dense.push_back(Multiplier::create(Multiplier::Kind::NaiveI8, layer));
  return m;
}

unsigned model_k(const PackedMatrix& layer) {
  std::size_t nonzero = 0;
  for (std::size_t r = 0; r < layer.rows(); ++r)
    for (std::size_t c = 0; c < layer.cols(); ++c) nonzero += layer.at(r, c) != 0;
  const double density = static_cast<double>(nonzero) / static_cast<double>(layer.rows() * layer.cols());
  unsigned best = 1;
  double best_cost = bench::cost_model(layer.rows(), layer.cols(), 1, layer.bitwidth(), density);
  for (unsigned k = 2; k <= max_k(layer.bitwidth()); ++k) {
    const double cost = bench::cost_model(layer.rows(), layer.cols(), k, layer.bitwidth(), density);
    if (cost < best_cost) {
      best = k;
      best_cost = cost;
    }
  }
  return best;
}

void prepare_rsr(ToyModel& model, unsigned k) {
  ToyModel::RsrState state;
  state.k = k;
  const auto pick = [k](const PackedMatrix& layer) { return k ? k : model_k(layer); };
  for (std::size_t unit = 0; unit < model.depth; ++unit) {
    std::vector<PackedMatrix> sib;
    for (std::size_t idx : model.sibling_groups[unit]) sib.push_back(model.layers[idx]);
    state.siblings.push_back(batched_preprocess(sib, pick(sib.front())));
    state.outputs.push_back(preprocess(model.layers[4 * unit + 3], pick(model.layers[4 * unit + 3])));
  }
  state.head = preprocess(model.layers[model.head_index()], pick(model.layers[model.head_index()]));
  model.rsr = std::move(state);
}

std::vector<std::uint8_t> model_bytes(const ToyModel& model) {
  std::vector<std::uint8_t> out;
  for (const auto& layer : model.layers) {
    const auto b = serialize_rsrm(layer);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::size_t argmax(std::span<const float> logits) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

DecodeResult greedy_decode(const ToyModel& model, Backend backend,
                           std::span<const std::uint32_t> prompt, std::size_t steps,
                           unsigned threads) {
  if (steps < 1) throw Error(ErrorKind::InvalidConfig, "steps must be >= 1");
  if (prompt.empty()) throw Error(ErrorKind::InvalidConfig, "prompt must not be empty");
  for (std::uint32_t id : prompt)
    if (id >= model.vocab)
      throw Error(ErrorKind::BadTokenId,
                  "token id " + std::to_string(id) + " >= vocab " + std::to_string(model.vocab));
  if (backend == Backend::Rsr && !model.rsr)
    throw Error(ErrorKind::InvalidConfig, "model has not been prepared for the rsr backend");

  Forward fwd(model, backend, threads);
  std::vector<float> hidden(model.d, 0.0f);
  DecodeResult result;
  result.stats.backend = backend;

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<float> logits;
  for (std::uint32_t id : prompt) logits = fwd.step(hidden, id);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto next = static_cast<std::uint32_t>(argmax(logits));
    result.tokens.push_back(next);
    if (s + 1 < steps) logits = fwd.step(hidden, next);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.stats.tokens_generated = result.tokens.size();
  result.stats.tokens_per_second =
      static_cast<double>(result.tokens.size()) / std::max(secs, 1e-9);
  return result;
}

}  // namespace rsr::toy
