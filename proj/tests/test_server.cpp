#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "rsr/error.hpp"
#include "rsr/server.hpp"

using namespace rsr;
using namespace rsr::server;
using nlohmann::json;

namespace {

const char* kSmallConfig = R"({"m": 32, "n": 64, "bitwidth": "ternary", "k_list": [2, 4], "reps": 3})";

json wait_for_run(httplib::Client& cli, std::uint64_t id) {
  for (int i = 0; i < 2000; ++i) {
    auto res = cli.Get("/api/runs/" + std::to_string(id));
    REQUIRE(res);
    REQUIRE(res->status == 200);
    json j = json::parse(res->body);
    if (j["status"] == "done" || j["status"] == "error") return j;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  FAIL("run did not finish");
  return {};
}

}  // namespace

TEST_CASE("bench lifecycle over HTTP") {
  BenchServer server;
  const int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);

  auto post = cli.Post("/api/bench", kSmallConfig, "application/json");
  REQUIRE(post);
  CHECK(post->status == 202);
  const auto id = json::parse(post->body)["id"].get<std::uint64_t>();

  const json run = wait_for_run(cli, id);
  CHECK(run["status"] == "done");
  REQUIRE(run.contains("report"));
  CHECK(run["report"]["entries"].size() == 4);
  CHECK(run["report"]["config"]["m"] == 32);

  auto list = cli.Get("/api/runs");
  REQUIRE(list);
  const json runs = json::parse(list->body);
  REQUIRE(runs.size() == 1);
  CHECK(runs[0]["id"] == id);

  auto best = cli.Get("/api/bestk?m=32&n=64&bitwidth=ternary");
  REQUIRE(best);
  CHECK(best->status == 200);
  const json row = json::parse(best->body);
  CHECK(row["best_k"] == run["report"]["best_k"]);
  CHECK(row["ns_median"].get<double>() > 0);
  auto table = cli.Get("/api/bestk");
  REQUIRE(table);
  CHECK(json::parse(table->body).size() == 1);
  auto missing = cli.Get("/api/bestk?m=8&n=8&bitwidth=binary");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  auto sys = cli.Get("/api/sysinfo");
  REQUIRE(sys);
  const json info = json::parse(sys->body);
  for (const char* key : {"cpu", "threads", "version"}) CHECK(info.contains(key));
}

TEST_CASE("request errors") {
  BenchServer server;
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);

  auto big_k = cli.Post("/api/bench", R"({"bitwidth": "ternary", "k_list": [20]})", "application/json");
  REQUIRE(big_k);
  CHECK(big_k->status == 400);
  CHECK(big_k->body.find("KTooLarge") != std::string::npos);

  auto bad = cli.Post("/api/bench", R"({"reps": 0})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["error"]["kind"] == "InvalidConfig");

  auto garbage = cli.Post("/api/bench", "{not json", "application/json");
  REQUIRE(garbage);
  CHECK(garbage->status == 400);

  auto unknown = cli.Get("/api/runs/999");
  REQUIRE(unknown);
  CHECK(unknown->status == 404);
}

TEST_CASE("jobs run one at a time and the queue is bounded") {
  std::atomic<int> active{0};
  std::atomic<int> overlap{0};
  std::atomic<bool> release{false};
  ServerOptions opts;
  opts.runner = [&](const bench::BenchConfig& cfg) {
    if (++active > 1) ++overlap;
    while (!release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    --active;
    bench::BenchReport r;
    r.config = cfg;
    return r;
  };
  BenchServer server(opts);
  const json cfg = json::parse(kSmallConfig);

  REQUIRE(server.submit(cfg).status == 202);
  // wait until the worker picked the first job up, leaving the queue empty
  for (int i = 0; i < 1000 && active == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  REQUIRE(active == 1);
  for (int i = 0; i < 32; ++i) REQUIRE(server.submit(cfg).status == 202);
  const auto full = server.submit(cfg);
  CHECK(full.status == 409);

  release = true;
  server.wait_idle();
  CHECK(overlap == 0);
  CHECK(server.max_concurrent_runs() == 1);
  const auto all = server.runs();
  CHECK(all.size() == 33);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i].id > all[i - 1].id);
  for (const auto& r : all) CHECK(r.status == RunStatus::Done);
}

TEST_CASE("runner failures, static assets and history dump") {
  const auto dir = std::filesystem::temp_directory_path() / "rsr_server_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "index.html") << "<html>ok</html>";
  }
  const auto history = dir / "history.json";
  std::filesystem::remove(history);

  ServerOptions opts;
  opts.static_dir = dir.string();
  opts.history_path = history.string();
  opts.runner = [](const bench::BenchConfig&) -> bench::BenchReport {
    throw Error(ErrorKind::KTooLarge, "synthetic");
  };
  {
    BenchServer server(opts);
    const int port = server.start("127.0.0.1", 0);
    httplib::Client cli("127.0.0.1", port);
    auto index = cli.Get("/index.html");
    REQUIRE(index);
    CHECK(index->body == "<html>ok</html>");

    const auto id = server.submit(json::parse(kSmallConfig)).body["id"].get<std::uint64_t>();
    const json run = wait_for_run(cli, id);
    CHECK(run["status"] == "error");
    CHECK(run["error"]["kind"] == "KTooLarge");
    server.stop();
  }
  std::ifstream in(history);
  const json dumped = json::parse(in);
  REQUIRE(dumped.size() == 1);
  CHECK(dumped[0]["status"] == "error");
  std::filesystem::remove_all(dir);
}
