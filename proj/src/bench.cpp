#include "rsr/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "rsr/artifact_io.hpp"
#include "rsr/error.hpp"
#include "rsr/kernels.hpp"

namespace rsr::bench {

namespace {

volatile float g_sink = 0.0f;

template <typename T>
void sink(const std::vector<T>& y) {
  if (!y.empty()) g_sink = static_cast<float>(y.front());
}

double binomial(unsigned n, unsigned k) {
  double r = 1.0;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Expected gather + scatter adds for one block of height h.
double block_cost(std::size_t n, unsigned h, Bitwidth bw, double density) {
  if (density <= 0.0) return 0.0;
  const double nd = static_cast<double>(n);
  const double retained = nd * (1.0 - std::pow(1.0 - density, h));
  const double signs = bw == Bitwidth::Ternary ? 2.0 : 1.0;
  const double per_nz = density / signs;
  double scatter = 0.0;
  for (unsigned j = 1; j <= h; ++j) {
    const double p = std::pow(per_nz, j) * std::pow(1.0 - density, h - j);
    const double present = p >= 1.0 ? 1.0 : -std::expm1(nd * std::log1p(-p));
    scatter += binomial(h, j) * std::pow(signs, j) * present * j;
  }
  return retained + scatter;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string fmt_num(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

}  // namespace

void validate(const BenchConfig& cfg) {
  const auto bad = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
  if (cfg.m < 1 || cfg.n < 1) bad("m and n must be >= 1");
  if (cfg.m > (1u << 20) || cfg.n > (1u << 20)) bad("m and n must be <= 1048576");
  if (cfg.reps < 1) bad("reps must be >= 1");
  if (cfg.k_list.empty()) bad("k_list must not be empty");
  if (cfg.threads < 1) bad("threads must be >= 1");
  if (!(cfg.density >= 0.0 && cfg.density <= 1.0)) bad("density must be in [0, 1]");
}

void check_k_caps(const BenchConfig& cfg) {
  for (unsigned k : cfg.k_list)
    if (k < 1 || k > max_k(cfg.bitwidth))
      throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " outside [1, " +
                                            std::to_string(max_k(cfg.bitwidth)) + "] for " +
                                            bitwidth_name(cfg.bitwidth));
}

BenchConfig config_from_json(const nlohmann::json& j) {
  BenchConfig cfg;
  try {
    if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
    cfg.m = j.value("m", cfg.m);
    cfg.n = j.value("n", cfg.n);
    if (j.contains("bitwidth")) cfg.bitwidth = parse_bitwidth(j.at("bitwidth").get<std::string>());
    if (j.contains("k_list")) cfg.k_list = j.at("k_list").get<std::vector<unsigned>>();
    if (j.contains("k")) cfg.k_list = {j.at("k").get<unsigned>()};
    cfg.reps = j.value("reps", cfg.reps);
    cfg.warmup = j.value("warmup", cfg.warmup);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.density = j.value("density", cfg.density);
    if (j.contains("baselines")) {
      cfg.baselines.clear();
      for (const auto& b : j.at("baselines")) {
        const auto kind = parse_kind(b.get<std::string>());
        if (kind != Multiplier::Kind::NaiveF32 && kind != Multiplier::Kind::NaiveI8)
          throw Error(ErrorKind::InvalidConfig, "baselines must be NaiveF32 or NaiveI8");
        cfg.baselines.push_back(kind);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("bad config field: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

nlohmann::json to_json(const BenchConfig& cfg) {
  nlohmann::json baselines = nlohmann::json::array();
  for (auto b : cfg.baselines) baselines.push_back(kind_name(b));
  return {{"m", cfg.m},         {"n", cfg.n},           {"bitwidth", bitwidth_name(cfg.bitwidth)},
          {"k_list", cfg.k_list}, {"reps", cfg.reps},   {"warmup", cfg.warmup},
          {"seed", cfg.seed},   {"threads", cfg.threads}, {"baselines", baselines},
          {"density", cfg.density}};
}

TimingStats summarize(std::vector<double> samples) {
  TimingStats s;
  s.samples = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  const auto pct = [&](double q) {
    const double pos = q * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
  };
  s.ns_p10 = pct(0.10);
  s.ns_median = pct(0.50);
  s.ns_p90 = pct(0.90);
  return s;
}

Environment probe_environment(unsigned threads) {
  Environment env;
  env.threads = threads;
  env.hardware_threads = std::max(1u, std::thread::hardware_concurrency());
  env.isa = std::string(simd::isa_name(simd::active_isa()));
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) env.cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  if (env.cpu.empty()) env.cpu = "unknown";
  return env;
}

nlohmann::json to_json(const Environment& env) {
  return {{"cpu", env.cpu}, {"threads", env.threads}, {"hardware_threads", env.hardware_threads},
          {"isa", env.isa}};
}

nlohmann::json to_json(const BenchEntry& e) {
  nlohmann::json j{{"kind", e.kind},
                   {"m", e.m},
                   {"n", e.n},
                   {"bitwidth", bitwidth_name(e.bitwidth)},
                   {"k", e.k},
                   {"ns_median", e.timing.ns_median},
                   {"ns_p10", e.timing.ns_p10},
                   {"ns_p90", e.timing.ns_p90},
                   {"samples", e.timing.samples},
                   {"gather_adds", e.gather_adds},
                   {"scatter_adds", e.scatter_adds},
                   {"preprocess_ms", e.preprocess_ms},
                   {"artifact_bytes", e.artifact_bytes}};
  if (e.error_kind) j["error"] = {{"kind", *e.error_kind}, {"message", e.error_message.value_or("")}};
  else j["error"] = nullptr;
  return j;
}

nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) entries.push_back(to_json(e));
  return {{"config", to_json(r.config)},
          {"entries", entries},
          {"best_k", r.best_k ? nlohmann::json(*r.best_k) : nlohmann::json(nullptr)},
          {"env", to_json(r.env)}};
}

std::string to_csv(const BenchReport& r) {
  std::ostringstream os;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  const std::string env = to_json(r.env).dump();
  const std::string best = r.best_k ? std::to_string(*r.best_k) : "";
  for (const auto& e : r.entries) {
    os << e.kind << ',' << e.m << ',' << e.n << ',' << bitwidth_name(e.bitwidth) << ',' << e.k << ','
       << fmt_num(e.timing.ns_median) << ',' << fmt_num(e.timing.ns_p10) << ','
       << fmt_num(e.timing.ns_p90) << ',' << e.gather_adds << ',' << e.scatter_adds << ','
       << fmt_num(e.preprocess_ms) << ',' << e.artifact_bytes << ',' << best << ','
       << csv_escape(env) << ',' << csv_escape(e.error_kind.value_or("")) << "\n";
  }
  return os.str();
}

PackedMatrix make_matrix(std::size_t m, std::size_t n, Bitwidth bw, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution nz(density);
  std::bernoulli_distribution neg(0.5);
  std::vector<std::int8_t> e(m * n);
  for (auto& x : e) {
    if (!nz(rng)) x = 0;
    else x = (bw == Bitwidth::Ternary && neg(rng)) ? -1 : 1;
  }
  return PackedMatrix::encode(e, m, n, bw);
}

std::vector<float> make_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

BenchReport run_bench(const BenchConfig& cfg) {
  validate(cfg);
  BenchReport report;
  report.config = cfg;
  report.env = probe_environment(cfg.threads);

  const PackedMatrix matrix = make_matrix(cfg.m, cfg.n, cfg.bitwidth, cfg.density, cfg.seed);
  const std::vector<float> v = make_vector(cfg.n, cfg.seed);

  double best_ns = std::numeric_limits<double>::infinity();
  for (unsigned k : cfg.k_list) {
    BenchEntry e;
    e.kind = "rsr";
    e.m = cfg.m;
    e.n = cfg.n;
    e.bitwidth = cfg.bitwidth;
    e.k = k;
    try {
      const auto t0 = Clock::now();
      RsrArtifact a = preprocess(matrix, k, 0, cfg.threads);
      e.preprocess_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      e.artifact_bytes = serialize_artifact(a).size();

      MatvecOptions opts;
      opts.threads = cfg.threads;
      const auto samples = time_calls(cfg.warmup, cfg.reps, [&] { sink(rsr_matvec(a, v, opts)); });
      e.timing = summarize(samples);

      OpCounter counter;
      opts.counter = &counter;
      sink(rsr_matvec(a, v, opts));
      e.gather_adds = counter.gather_adds;
      e.scatter_adds = counter.scatter_adds;

      if (e.timing.ns_median < best_ns) {
        best_ns = e.timing.ns_median;
        report.best_k = k;
      }
    } catch (const Error& err) {
      e.error_kind = std::string(kind_name(err.kind()));
      e.error_message = err.what();
    }
    report.entries.push_back(std::move(e));
  }

  for (Multiplier::Kind kind : cfg.baselines) {
    BenchEntry e;
    e.kind = kind_name(kind);
    e.m = cfg.m;
    e.n = cfg.n;
    e.bitwidth = cfg.bitwidth;
    try {
      const auto t0 = Clock::now();
      Multiplier mul = Multiplier::create(kind, matrix, {.threads = cfg.threads});
      e.preprocess_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      std::vector<double> samples;
      if (kind == Multiplier::Kind::NaiveI8) {
        const QuantizedVector q = quantize_activations(v);
        const std::span<const std::int8_t> qv(q.values);
        samples = time_calls(cfg.warmup, cfg.reps, [&] { sink(mul.multiply(qv)); });
      } else {
        samples = time_calls(cfg.warmup, cfg.reps, [&] { sink(mul.multiply(std::span<const float>(v))); });
      }
      e.timing = summarize(samples);
      e.gather_adds = static_cast<std::uint64_t>(cfg.m) * cfg.n;
    } catch (const Error& err) {
      e.error_kind = std::string(kind_name(err.kind()));
      e.error_message = err.what();
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

double cost_model(std::size_t m, std::size_t n, unsigned k, Bitwidth bw, double density) {
  if (k == 0 || m == 0) return 0.0;
  const std::size_t full = m / k;
  const unsigned tail = static_cast<unsigned>(m % k);
  double cost = static_cast<double>(full) * block_cost(n, k, bw, density);
  if (tail) cost += block_cost(n, tail, bw, density);
  return cost;
}

AutotuneResult autotune_k(std::size_t m, std::size_t n, Bitwidth bw, double budget_ms,
                          std::uint64_t seed, double density, unsigned threads) {
  AutotuneResult result;
  double min_cost = std::numeric_limits<double>::infinity();
  for (unsigned k = 1; k <= max_k(bw); ++k) {
    AutotuneCandidate c;
    c.k = k;
    c.cost = cost_model(m, n, k, bw, density);
    min_cost = std::min(min_cost, c.cost);
    result.candidates.push_back(c);
  }
  std::size_t live = 0;
  for (auto& c : result.candidates) {
    c.pruned = c.cost > 2.0 * min_cost;
    if (!c.pruned) ++live;
  }

  const PackedMatrix matrix = make_matrix(m, n, bw, density, seed);
  const std::vector<float> v = make_vector(n, seed);
  const double per_candidate_ns = budget_ms * 1e6 / static_cast<double>(std::max<std::size_t>(live, 1));
  const auto start = Clock::now();

  double best_ns = std::numeric_limits<double>::infinity();
  result.best_k = 0;
  for (auto& c : result.candidates) {
    if (c.pruned) continue;
    const RsrArtifact a = preprocess(matrix, c.k, 0, threads);
    MatvecOptions opts;
    opts.threads = threads;
    const auto probe = time_calls(1, 1, [&] { sink(rsr_matvec(a, v, opts)); });
    const double spent_ns = std::chrono::duration<double, std::nano>(Clock::now() - start).count();
    const double remaining = std::max(0.0, budget_ms * 1e6 - spent_ns);
    const double allowance = std::min(per_candidate_ns, remaining);
    const auto reps = static_cast<unsigned>(std::clamp(allowance / std::max(probe[0], 1.0), 1.0, 101.0));
    c.timing = summarize(time_calls(0, reps, [&] { sink(rsr_matvec(a, v, opts)); }));
    if (c.timing.ns_median < best_ns) {
      best_ns = c.timing.ns_median;
      result.best_k = c.k;
    }
  }
  if (result.best_k == 0) result.best_k = 1;
  return result;
}

}  // namespace rsr::bench
