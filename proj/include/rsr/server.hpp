#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "rsr/bench.hpp"

namespace httplib {
class Server;
}

namespace rsr::server {

enum class RunStatus { Queued, Running, Done, Error };

std::string status_name(RunStatus s);

struct RunRecord {
  std::uint64_t id = 0;
  bench::BenchConfig config;
  RunStatus status = RunStatus::Queued;
  std::optional<bench::BenchReport> report;
  std::optional<std::string> error_kind;
  std::optional<std::string> error_message;
  std::int64_t submitted_ms = 0;  // unix epoch
};

nlohmann::json to_json(const RunRecord& r);

struct ServerOptions {
  std::string static_dir;    // served at "/" when non-empty
  std::string history_path;  // run history written here by stop() when non-empty
  std::size_t queue_bound = 32;
  // Replaceable for tests; defaults to bench::run_bench.
  std::function<bench::BenchReport(const bench::BenchConfig&)> runner;
};

// Bench job queue plus HTTP front end. Jobs run FIFO on one worker thread.
class BenchServer {
 public:
  explicit BenchServer(ServerOptions opts = {});
  ~BenchServer();
  BenchServer(const BenchServer&) = delete;
  BenchServer& operator=(const BenchServer&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Stops HTTP, lets the running job finish, drops queued jobs, and dumps
  // history if configured. Idempotent.
  void stop();

  // Queue operations, also used directly by tests.
  struct Submit {
    int status = 202;
    nlohmann::json body;
  };
  Submit submit(const nlohmann::json& config);
  std::optional<RunRecord> run(std::uint64_t id) const;
  std::vector<RunRecord> runs() const;
  nlohmann::json best_k_table() const;
  nlohmann::json history_json() const;

  // Largest number of benchmarks observed executing at once.
  unsigned max_concurrent_runs() const;
  void wait_idle() const;

 private:
  void worker_loop();
  void install_routes();

  ServerOptions opts_;
  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
  std::thread worker_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::uint64_t, RunRecord> history_;
  std::deque<std::uint64_t> queue_;
  std::uint64_t next_id_ = 1;
  unsigned running_ = 0;
  unsigned max_running_ = 0;
  bool stopping_ = false;
  bool stopped_ = false;
};

}  // namespace rsr::server
