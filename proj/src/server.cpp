#include "rsr/server.hpp"

#include <chrono>
#include <fstream>

#include "httplib.h"
#include "rsr/error.hpp"
#include "rsr/parallel.hpp"
#include "rsr/version.hpp"

namespace rsr::server {

namespace {

nlohmann::json error_json(std::string_view kind, const std::string& message) {
  return {{"error", {{"kind", kind}, {"message", message}}}};
}

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Queued: return "queued";
    case RunStatus::Running: return "running";
    case RunStatus::Done: return "done";
    case RunStatus::Error: return "error";
  }
  return "unknown";
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j{{"id", r.id},
                   {"status", status_name(r.status)},
                   {"config", bench::to_json(r.config)},
                   {"submitted_ms", r.submitted_ms}};
  if (r.report) j["report"] = bench::to_json(*r.report);
  if (r.error_kind) j["error"] = {{"kind", *r.error_kind}, {"message", r.error_message.value_or("")}};
  return j;
}

BenchServer::BenchServer(ServerOptions opts) : opts_(std::move(opts)) {
  if (!opts_.runner) opts_.runner = [](const bench::BenchConfig& c) { return bench::run_bench(c); };
  worker_ = std::thread([this] { worker_loop(); });
}

BenchServer::~BenchServer() { stop(); }

BenchServer::Submit BenchServer::submit(const nlohmann::json& body) {
  bench::BenchConfig cfg;
  try {
    cfg = bench::config_from_json(body);
    bench::check_k_caps(cfg);
  } catch (const Error& e) {
    return {400, error_json(kind_name(e.kind()), e.what())};
  }
  std::lock_guard lock(mu_);
  if (stopping_) return {503, error_json("InvalidConfig", "server is shutting down")};
  if (queue_.size() >= opts_.queue_bound)
    return {409, error_json("QueueFull", "queue holds " + std::to_string(queue_.size()) + " pending runs")};
  RunRecord rec;
  rec.id = next_id_++;
  rec.config = cfg;
  rec.submitted_ms = now_ms();
  history_.emplace(rec.id, rec);
  queue_.push_back(rec.id);
  cv_.notify_all();
  return {202, {{"id", rec.id}}};
}

void BenchServer::worker_loop() {
  for (;;) {
    std::uint64_t id = 0;
    bench::BenchConfig cfg;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      auto& rec = history_.at(id);
      rec.status = RunStatus::Running;
      cfg = rec.config;
      max_running_ = std::max(max_running_, ++running_);
    }
    std::optional<bench::BenchReport> report;
    std::optional<std::pair<std::string, std::string>> failure;
    try {
      report = opts_.runner(cfg);
    } catch (const Error& e) {
      failure.emplace(std::string(kind_name(e.kind())), e.what());
    } catch (const std::exception& e) {
      failure.emplace("IoError", e.what());
    }
    {
      std::lock_guard lock(mu_);
      auto& rec = history_.at(id);
      --running_;
      if (report) {
        rec.status = RunStatus::Done;
        rec.report = std::move(report);
      } else {
        rec.status = RunStatus::Error;
        rec.error_kind = failure->first;
        rec.error_message = failure->second;
      }
    }
    cv_.notify_all();
  }
}

std::optional<RunRecord> BenchServer::run(std::uint64_t id) const {
  std::lock_guard lock(mu_);
  const auto it = history_.find(id);
  if (it == history_.end()) return std::nullopt;
  return it->second;
}

std::vector<RunRecord> BenchServer::runs() const {
  std::lock_guard lock(mu_);
  std::vector<RunRecord> out;
  for (const auto& [id, rec] : history_) out.push_back(rec);
  return out;
}

nlohmann::json BenchServer::best_k_table() const {
  struct Best {
    unsigned k;
    double ns;
    std::uint64_t run;
  };
  std::map<std::tuple<std::size_t, std::size_t, std::string>, Best> table;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, rec] : history_) {
      if (rec.status != RunStatus::Done || !rec.report || !rec.report->best_k) continue;
      const unsigned k = *rec.report->best_k;
      for (const auto& e : rec.report->entries) {
        if (e.kind != "rsr" || e.k != k || e.error_kind) continue;
        const auto key = std::make_tuple(e.m, e.n, bitwidth_name(e.bitwidth));
        const auto it = table.find(key);
        if (it == table.end() || e.timing.ns_median < it->second.ns)
          table[key] = Best{k, e.timing.ns_median, id};
      }
    }
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, b] : table)
    out.push_back({{"m", std::get<0>(key)},
                   {"n", std::get<1>(key)},
                   {"bitwidth", std::get<2>(key)},
                   {"best_k", b.k},
                   {"ns_median", b.ns},
                   {"run_id", b.run}});
  return out;
}

nlohmann::json BenchServer::history_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : runs()) out.push_back(to_json(r));
  return out;
}

unsigned BenchServer::max_concurrent_runs() const {
  std::lock_guard lock(mu_);
  return max_running_;
}

void BenchServer::wait_idle() const {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return stopping_ || (queue_.empty() && running_ == 0); });
}

void BenchServer::install_routes() {
  auto& s = *http_;
  s.Post("/api/bench", [this](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply(res, 400, error_json("InvalidConfig", "body is not valid JSON"));
    const Submit r = submit(body);
    reply(res, r.status, r.body);
  });
  s.Get("/api/runs", [this](const httplib::Request&, httplib::Response& res) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : runs())
      out.push_back({{"id", r.id},
                     {"status", status_name(r.status)},
                     {"config", bench::to_json(r.config)},
                     {"submitted_ms", r.submitted_ms}});
    reply(res, 200, out);
  });
  s.Get(R"(/api/runs/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto id = std::stoull(req.matches[1].str());
    const auto r = run(id);
    if (!r) return reply(res, 404, error_json("NotFound", "no run with id " + std::to_string(id)));
    reply(res, 200, to_json(*r));
  });
  s.Get("/api/sysinfo", [](const httplib::Request&, httplib::Response& res) {
    const auto env = bench::probe_environment(default_threads());
    reply(res, 200,
          {{"cpu", env.cpu},
           {"threads", env.threads},
           {"hardware_threads", env.hardware_threads},
           {"isa", env.isa},
           {"version", kVersion}});
  });
  s.Get("/api/bestk", [this](const httplib::Request& req, httplib::Response& res) {
    const nlohmann::json table = best_k_table();
    if (!req.has_param("m") && !req.has_param("n") && !req.has_param("bitwidth"))
      return reply(res, 200, table);
    std::size_t m = 0, n = 0;
    std::string bw;
    try {
      m = std::stoull(req.get_param_value("m"));
      n = std::stoull(req.get_param_value("n"));
      bw = bitwidth_name(parse_bitwidth(req.get_param_value("bitwidth")));
    } catch (const std::exception&) {
      return reply(res, 400, error_json("InvalidConfig", "bestk needs integer m, n and a bitwidth"));
    }
    for (const auto& row : table)
      if (row["m"] == m && row["n"] == n && row["bitwidth"] == bw) return reply(res, 200, row);
    reply(res, 404, error_json("NotFound", "no completed run for that shape"));
  });
  if (!opts_.static_dir.empty() && !s.set_mount_point("/", opts_.static_dir))
    throw Error(ErrorKind::FileNotFound, "static directory '" + opts_.static_dir + "' not found");
}

int BenchServer::start(const std::string& host, int port) {
  http_ = std::make_unique<httplib::Server>();
  install_routes();
  const int bound = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorKind::IoError, "cannot bind " + host + ":" + std::to_string(port));
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return bound;
}

void BenchServer::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopped_) return;
    stopped_ = stopping_ = true;
  }
  cv_.notify_all();
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
  if (worker_.joinable()) worker_.join();
  if (!opts_.history_path.empty()) {
    std::ofstream out(opts_.history_path);
    out << history_json().dump(2) << '\n';
  }
}

}  // namespace rsr::server
