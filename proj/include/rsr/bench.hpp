#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsr/matrix.hpp"
#include "rsr/multiplier.hpp"

namespace rsr::bench {

using Clock = std::chrono::steady_clock;

struct BenchConfig {
  std::size_t m = 1024;
  std::size_t n = 1024;
  Bitwidth bitwidth = Bitwidth::Binary;
  std::vector<unsigned> k_list{8};
  unsigned reps = 30;
  unsigned warmup = 3;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::vector<Multiplier::Kind> baselines{Multiplier::Kind::NaiveF32, Multiplier::Kind::NaiveI8};
  // Probability an entry is nonzero; ternary nonzeros are +-1 with equal odds.
  double density = 0.5;
};

// Shape checks only (InvalidConfig). Per-k cap violations are reported per
// entry by run_bench; use check_k_caps to reject them up front.
void validate(const BenchConfig& cfg);
void check_k_caps(const BenchConfig& cfg);

BenchConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchConfig& cfg);

struct TimingStats {
  double ns_median = 0;
  double ns_p10 = 0;
  double ns_p90 = 0;
  std::size_t samples = 0;
};

// Linear-interpolated percentiles over the samples.
TimingStats summarize(std::vector<double> samples_ns);

struct Environment {
  std::string cpu;
  unsigned threads = 1;
  unsigned hardware_threads = 1;
  std::string isa;
};

Environment probe_environment(unsigned threads);

struct BenchEntry {
  std::string kind;  // "rsr" or a baseline multiplier name
  std::size_t m = 0;
  std::size_t n = 0;
  Bitwidth bitwidth = Bitwidth::Binary;
  unsigned k = 0;  // 0 for baselines
  TimingStats timing;
  std::uint64_t gather_adds = 0;
  std::uint64_t scatter_adds = 0;
  double preprocess_ms = 0;
  std::uint64_t artifact_bytes = 0;
  std::optional<std::string> error_kind;
  std::optional<std::string> error_message;
};

struct BenchReport {
  BenchConfig config;
  std::vector<BenchEntry> entries;
  std::optional<unsigned> best_k;
  Environment env;
};

nlohmann::json to_json(const BenchEntry& e);
nlohmann::json to_json(const Environment& env);
nlohmann::json to_json(const BenchReport& r);
std::string to_csv(const BenchReport& r);
inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "kind",          "m",          "n",           "bitwidth",     "k",
      "ns_median",     "ns_p10",     "ns_p90",      "gather_adds",  "scatter_adds",
      "preprocess_ms", "artifact_bytes", "best_k",  "env",          "error"};
  return cols;
}

// Seeded inputs shared by the harness, autotuner, and tests.
PackedMatrix make_matrix(std::size_t m, std::size_t n, Bitwidth bw, double density, std::uint64_t seed);
std::vector<float> make_vector(std::size_t n, std::uint64_t seed);

BenchReport run_bench(const BenchConfig& cfg);

// Expected online multiply-adds (gather + scatter) for an i.i.d. random
// matrix with the given nonzero density: exact expectation of retained
// columns plus, per nonzero pattern, P(pattern occurs in n columns) times
// its popcount. An estimate, not a bound.
double cost_model(std::size_t m, std::size_t n, unsigned k, Bitwidth bw, double density);

struct AutotuneCandidate {
  unsigned k = 0;
  double cost = 0;
  bool pruned = false;
  TimingStats timing;
};

struct AutotuneResult {
  unsigned best_k = 1;
  std::vector<AutotuneCandidate> candidates;
};

// Sweeps every feasible k, drops those whose modeled cost exceeds twice the
// modeled minimum, and times the rest within the budget. Ties go to the
// smaller k.
AutotuneResult autotune_k(std::size_t m, std::size_t n, Bitwidth bw, double budget_ms,
                          std::uint64_t seed = 1, double density = 0.5, unsigned threads = 1);

// Times `fn` warmup + reps times, returning per-call nanoseconds.
template <typename Fn>
std::vector<double> time_calls(unsigned warmup, unsigned reps, Fn&& fn) {
  for (unsigned i = 0; i < warmup; ++i) fn();
  std::vector<double> ns;
  ns.reserve(reps);
  for (unsigned i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  return ns;
}

}  // namespace rsr::bench
