// rsr: command-line front end. Machine output is JSON on stdout; anything
// meant for humans goes to stderr.
#include <csignal>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rsr/artifact_io.hpp"
#include "rsr/detail/bytes.hpp"
#include "rsr/bench.hpp"
#include "rsr/error.hpp"
#include "rsr/kernels.hpp"
#include "rsr/parallel.hpp"
#include "rsr/server.hpp"
#include "rsr/toyrt.hpp"
#include "rsr/version.hpp"

using nlohmann::json;
using namespace rsr;

namespace {

void emit(const json& j) { std::cout << j.dump() << '\n'; }

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return {bytes.begin(), bytes.end()};
}

// Accepts a JSON document inline, or a path to a file holding one.
json json_arg(const std::string& arg) {
  std::string text = arg;
  const auto first = arg.find_first_not_of(" \t\n");
  if (first == std::string::npos || (arg[first] != '{' && arg[first] != '['))
    text = slurp(arg);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, "not valid JSON: " + arg.substr(0, 64));
  return j;
}

// Inline "[1,2]" or "1,2,3", or a file with either form.
std::vector<double> vector_arg(const std::string& arg) {
  std::string text = arg;
  if (std::filesystem::is_regular_file(arg)) text = slurp(arg);
  const auto first = text.find_first_not_of(" \t\n");
  std::vector<double> out;
  if (first != std::string::npos && text[first] == '[') {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_array()) throw Error(ErrorKind::InvalidConfig, "vector must be a JSON array");
    for (const auto& x : j) {
      if (!x.is_number()) throw Error(ErrorKind::InvalidConfig, "vector entries must be numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  for (char& c : text)
    if (c == ',') c = ' ';
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw Error(ErrorKind::InvalidConfig, "bad vector entry '" + tok + "'");
    out.push_back(x);
  }
  return out;
}

// "2..8" or "2,4,8".
std::vector<unsigned> ks_arg(const std::string& arg) {
  std::vector<unsigned> ks;
  try {
    if (const auto dots = arg.find(".."); dots != std::string::npos) {
      const unsigned lo = static_cast<unsigned>(std::stoul(arg.substr(0, dots)));
      const unsigned hi = static_cast<unsigned>(std::stoul(arg.substr(dots + 2)));
      for (unsigned k = lo; k <= hi; ++k) ks.push_back(k);
    } else {
      std::string text = arg;
      for (char& c : text)
        if (c == ',') c = ' ';
      std::istringstream in(text);
      for (unsigned k; in >> k;) ks.push_back(k);
    }
  } catch (const std::exception&) {
    ks.clear();
  }
  if (ks.empty()) throw Error(ErrorKind::InvalidConfig, "bad k list '" + arg + "'");
  return ks;
}

void write_json_file(const std::string& path, const json& j) {
  const std::string text = j.dump() + "\n";
  detail::write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

struct Args {
  // encode / gen
  std::string entries, out, in, bitwidth = "binary";
  std::size_t rows = 0, cols = 0, m = 256, n = 256;
  double density = 0.5, scale = 1.0, budget_ms = 200.0;
  std::uint64_t seed = 1;
  // preprocess / multiply
  unsigned k = 8, threads = 0;
  std::size_t tile_width = 0;
  std::string artifact, vec, mode = "auto";
  // bench / sweep
  std::string config, format = "json", ks = "2..8";
  unsigned reps = 30, warmup = 3;
  // decode
  std::size_t d = 64, vocab = 256, depth = 2, steps = 32;
  std::string backend = "both", prompt = "0";
  unsigned decode_k = 0;
  // serve
  std::string host = "127.0.0.1", static_dir, history;
  int port = 8080;

  unsigned thread_count() const { return threads ? threads : default_threads(); }
};

void cmd_encode(const Args& a) {
  const json j = json_arg(a.entries);
  if (!j.is_array()) throw Error(ErrorKind::InvalidConfig, "entries must be a JSON array");
  std::vector<std::int8_t> e;
  for (const auto& x : j) {
    if (!x.is_number_integer() || x.get<long long>() < -128 || x.get<long long>() > 127)
      throw Error(ErrorKind::OutOfAlphabet, "entry " + x.dump() + " is not a small integer");
    e.push_back(static_cast<std::int8_t>(x.get<int>()));
  }
  auto m = PackedMatrix::encode(e, a.rows, a.cols, parse_bitwidth(a.bitwidth), static_cast<float>(a.scale));
  save_rsrm(m, a.out);
  emit({{"path", a.out}, {"m", m.rows()}, {"n", m.cols()}, {"bitwidth", bitwidth_name(m.bitwidth())}});
}

void cmd_gen(const Args& a) {
  const auto m = bench::make_matrix(a.m, a.n, parse_bitwidth(a.bitwidth), a.density, a.seed);
  save_rsrm(m, a.out);
  emit({{"path", a.out}, {"m", m.rows()}, {"n", m.cols()}, {"bitwidth", bitwidth_name(m.bitwidth())}});
}

void cmd_preprocess(const Args& a) {
  const PackedMatrix m = load_rsrm(a.in);
  const auto t0 = std::chrono::steady_clock::now();
  const RsrArtifact art = preprocess(m, a.k, a.tile_width, a.thread_count());
  const double ms = ms_since(t0);
  const std::size_t bytes = save_artifact(art, a.out);
  emit({{"artifact_bytes", bytes},
        {"preprocess_ms", ms},
        {"m", m.rows()},
        {"n", m.cols()},
        {"bitwidth", bitwidth_name(m.bitwidth())},
        {"k", a.k},
        {"tile_width", art.header.plan.tile_width}});
}

void cmd_multiply(const Args& a) {
  const RsrArtifact art = load_artifact(a.artifact);
  const std::vector<double> v = vector_arg(a.vec);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) throw Error(ErrorKind::NonFinite, "non-finite entry at index " + std::to_string(i));

  std::string mode = a.mode;
  if (mode == "auto") {
    mode = "int";
    for (double x : v)
      if (x != std::round(x) || x < -128 || x > 127) mode = "float";
  }
  MatvecOptions opts;
  opts.threads = a.thread_count();
  json y;
  if (mode == "int") {
    std::vector<std::int8_t> vi;
    for (double x : v) {
      if (x != std::round(x) || x < -128 || x > 127)
        throw Error(ErrorKind::InvalidConfig, "int mode needs int8 entries");
      vi.push_back(static_cast<std::int8_t>(x));
    }
    y = rsr_matvec(art, std::span<const std::int8_t>(vi), opts);
  } else if (mode == "float" || mode == "fused") {
    const std::vector<float> vf(v.begin(), v.end());
    y = mode == "float" ? rsr_matvec(art, std::span<const float>(vf), opts) : rsr_matvec_fused(art, vf, opts);
  } else {
    throw Error(ErrorKind::InvalidConfig, "mode must be auto, int, float or fused");
  }
  if (a.out.empty()) return emit(y);
  write_json_file(a.out, y);
  emit({{"path", a.out}, {"rows", y.size()}, {"mode", mode}});
}

void cmd_bench(const Args& a) {
  bench::BenchConfig cfg = bench::config_from_json(json_arg(a.config));
  if (a.threads) cfg.threads = a.threads;
  bench::check_k_caps(cfg);
  const auto report = bench::run_bench(cfg);
  if (a.format == "csv")
    std::cout << bench::to_csv(report);
  else
    emit(bench::to_json(report));
}

void cmd_sweep(const Args& a) {
  bench::BenchConfig cfg;
  cfg.m = a.m;
  cfg.n = a.n;
  cfg.bitwidth = parse_bitwidth(a.bitwidth);
  cfg.k_list = ks_arg(a.ks);
  cfg.reps = a.reps;
  cfg.warmup = a.warmup;
  cfg.seed = a.seed;
  cfg.threads = a.thread_count();
  cfg.density = a.density;
  cfg.baselines = {};
  bench::validate(cfg);
  for (unsigned k : cfg.k_list) {
    bench::BenchConfig one = cfg;
    one.k_list = {k};
    const auto report = bench::run_bench(one);
    emit(bench::to_json(report.entries.at(0)));
    std::cout.flush();
  }
}

void cmd_autotune(const Args& a) {
  const auto r = bench::autotune_k(a.m, a.n, parse_bitwidth(a.bitwidth), a.budget_ms, a.seed, a.density,
                                   a.thread_count());
  json cands = json::array();
  for (const auto& c : r.candidates)
    cands.push_back({{"k", c.k},
                     {"cost", c.cost},
                     {"pruned", c.pruned},
                     {"ns_median", c.pruned ? json(nullptr) : json(c.timing.ns_median)}});
  emit({{"m", a.m}, {"n", a.n}, {"bitwidth", a.bitwidth}, {"best_k", r.best_k}, {"candidates", cands}});
}

int cmd_decode(const Args& a) {
  std::vector<toy::Backend> backends;
  if (a.backend == "both")
    backends = {toy::Backend::Naive, toy::Backend::Rsr};
  else
    backends = {toy::parse_backend(a.backend)};

  std::vector<std::uint32_t> prompt;
  for (double x : vector_arg(a.prompt)) {
    if (x < 0 || x != std::round(x) || x > 4294967295.0)
      throw Error(ErrorKind::BadTokenId, "token id " + std::to_string(x) + " is not a valid id");
    prompt.push_back(static_cast<std::uint32_t>(x));
  }

  toy::ToyModel model = toy::build_toy_model(a.seed, a.d, a.vocab, a.depth);
  for (auto b : backends)
    if (b == toy::Backend::Rsr) prepare_rsr(model, a.decode_k);

  json runs = json::array();
  std::vector<std::vector<std::uint32_t>> seqs;
  for (auto b : backends) {
    const auto r = toy::greedy_decode(model, b, prompt, a.steps, a.thread_count());
    runs.push_back({{"backend", toy::backend_name(b)},
                    {"tokens", r.tokens},
                    {"tokens_generated", r.stats.tokens_generated},
                    {"tokens_per_second", r.stats.tokens_per_second}});
    seqs.push_back(r.tokens);
  }
  const bool equal = seqs.size() < 2 || seqs[0] == seqs[1];
  emit({{"config",
         {{"seed", a.seed}, {"d", a.d}, {"V", a.vocab}, {"depth", a.depth}, {"steps", a.steps}, {"k", a.decode_k}}},
        {"runs", runs},
        {"sequences_equal", seqs.size() < 2 ? json(nullptr) : json(equal)}});
  if (!equal) std::cerr << "rsr decode: backends produced different tokens\n";
  return equal ? 0 : 1;
}

void cmd_serve(const Args& a) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  // block before any thread starts so every thread inherits the mask
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  server::ServerOptions opts;
  opts.static_dir = a.static_dir;
  opts.history_path = a.history;
  server::BenchServer srv(opts);
  const int port = srv.start(a.host, a.port);
  emit({{"listening", {{"host", a.host}, {"port", port}}}});
  std::cout.flush();
  std::cerr << "serving on http://" << a.host << ":" << port << " (Ctrl-C to stop)\n";
  int sig = 0;
  sigwait(&set, &sig);
  srv.stop();
}

}  // namespace

int main(int argc, char** argv) {
  Args a;
  CLI::App app{"Redundant segment reduction matrix-vector engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  auto* encode = app.add_subcommand("encode", "write a .rsrm matrix from a JSON entry list");
  encode->add_option("--entries", a.entries, "JSON array (inline or file), row-major")->required();
  encode->add_option("--rows", a.rows)->required();
  encode->add_option("--cols", a.cols)->required();
  encode->add_option("--bitwidth", a.bitwidth)->check(CLI::IsMember({"binary", "ternary"}));
  encode->add_option("--scale", a.scale, "weight scale stored with the matrix");
  encode->add_option("--out", a.out)->required();

  auto* gen = app.add_subcommand("gen", "write a seeded random .rsrm matrix");
  gen->add_option("--m", a.m);
  gen->add_option("--n", a.n);
  gen->add_option("--bitwidth", a.bitwidth)->check(CLI::IsMember({"binary", "ternary"}));
  gen->add_option("--density", a.density);
  gen->add_option("--seed", a.seed);
  gen->add_option("--out", a.out)->required();

  auto* pre = app.add_subcommand("preprocess", "build a .rsra artifact from a .rsrm matrix");
  pre->add_option("--in", a.in)->required();
  pre->add_option("--k", a.k);
  pre->add_option("--tile-width", a.tile_width, "0 picks the default");
  pre->add_option("--threads", a.threads);
  pre->add_option("--out", a.out)->required();

  auto* mul = app.add_subcommand("multiply", "multiply an artifact by a vector");
  mul->add_option("--artifact", a.artifact)->required();
  mul->add_option("--vec", a.vec, "inline list or file path")->required();
  mul->add_option("--mode", a.mode, "auto, int, float or fused");
  mul->add_option("--threads", a.threads);
  mul->add_option("--out", a.out);

  auto* bench = app.add_subcommand("bench", "run a benchmark config");
  bench->add_option("--config", a.config, "JSON (inline or file)")->required();
  bench->add_option("--format", a.format)->check(CLI::IsMember({"json", "csv"}));
  bench->add_option("--threads", a.threads);

  auto* sweep = app.add_subcommand("sweep", "time RSR across k, one JSON line per k");
  sweep->add_option("--m", a.m);
  sweep->add_option("--n", a.n);
  sweep->add_option("--bitwidth", a.bitwidth)->check(CLI::IsMember({"binary", "ternary"}));
  sweep->add_option("--ks", a.ks, "range lo..hi or list");
  sweep->add_option("--reps", a.reps);
  sweep->add_option("--warmup", a.warmup);
  sweep->add_option("--seed", a.seed);
  sweep->add_option("--density", a.density);
  sweep->add_option("--threads", a.threads);

  auto* tune = app.add_subcommand("autotune", "pick k for a shape");
  tune->add_option("--m", a.m);
  tune->add_option("--n", a.n);
  tune->add_option("--bitwidth", a.bitwidth)->check(CLI::IsMember({"binary", "ternary"}));
  tune->add_option("--budget-ms", a.budget_ms);
  tune->add_option("--seed", a.seed);
  tune->add_option("--density", a.density);
  tune->add_option("--threads", a.threads);

  auto* decode = app.add_subcommand("decode", "greedy decode with the toy ternary model");
  decode->add_option("--seed", a.seed);
  decode->add_option("--d", a.d);
  decode->add_option("--V", a.vocab);
  decode->add_option("--depth", a.depth);
  decode->add_option("--steps", a.steps);
  decode->add_option("--k", a.decode_k, "0 picks k per layer");
  decode->add_option("--prompt", a.prompt, "token ids");
  decode->add_option("--backend", a.backend)->check(CLI::IsMember({"naive", "rsr", "both"}));
  decode->add_option("--threads", a.threads);

  auto* serve = app.add_subcommand("serve", "HTTP API and dashboard");
  serve->add_option("--host", a.host);
  serve->add_option("--port", a.port, "0 picks a free port");
  serve->add_option("--static", a.static_dir, "directory served at /");
  serve->add_option("--history", a.history, "write run history here on exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit({{"error", {{"kind", "InvalidConfig"}, {"message", e.what()}}}});
    std::cerr << app.help();
    return 1;
  }

  try {
    if (encode->parsed()) cmd_encode(a);
    if (gen->parsed()) cmd_gen(a);
    if (pre->parsed()) cmd_preprocess(a);
    if (mul->parsed()) cmd_multiply(a);
    if (bench->parsed()) cmd_bench(a);
    if (sweep->parsed()) cmd_sweep(a);
    if (tune->parsed()) cmd_autotune(a);
    if (decode->parsed()) return cmd_decode(a);
    if (serve->parsed()) cmd_serve(a);
  } catch (const Error& e) {
    emit({{"error", {{"kind", kind_name(e.kind())}, {"message", e.what()}}}});
    std::cerr << "rsr: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    emit({{"error", {{"kind", "IoError"}, {"message", e.what()}}}});
    std::cerr << "rsr: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
