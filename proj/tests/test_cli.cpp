#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "rsr/artifact_io.hpp"
#include "rsr/matrix.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::vector<json> lines;  // every stdout line parsed as JSON
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Run cli_run(const std::vector<std::string>& args, bool json_lines = true) {
  std::string cmd = RSR_CLI_PATH;
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (!json_lines) return r;
  std::istringstream in(r.out);
  for (std::string line; std::getline(in, line);) {
    json j = json::parse(line, nullptr, false);
    INFO("stdout line: " << line);
    CHECK_FALSE(j.is_discarded());
    r.lines.push_back(j);
  }
  return r;
}

json golden(const std::string& name) {
  std::ifstream in(fs::path(RSR_GOLDEN_DIR) / (name + ".shape.json"));
  REQUIRE(in);
  return json::parse(in);
}

bool type_matches(const json& v, const std::string& types) {
  std::istringstream in(types);
  for (std::string t; std::getline(in, t, '|');) {
    if ((t == "integer" && v.is_number_integer()) || (t == "number" && v.is_number()) ||
        (t == "string" && v.is_string()) || (t == "boolean" && v.is_boolean()) ||
        (t == "null" && v.is_null()) || (t == "object" && v.is_object()) || (t == "array" && v.is_array()))
      return true;
  }
  return false;
}

// Shape documents: a string names the allowed types, an object requires the
// exact key set, a one-element array types every element, "@name" refers to
// another golden file.
void check_shape(const json& v, const json& shape, const std::string& where) {
  INFO("at " << where);
  if (shape.is_string()) {
    const auto s = shape.get<std::string>();
    if (s.starts_with("@")) return check_shape(v, golden(s.substr(1)), where);
    CHECK_MESSAGE(type_matches(v, s), v.dump() << " is not " << s);
  } else if (shape.is_object()) {
    REQUIRE(v.is_object());
    for (const auto& [key, sub] : shape.items()) {
      CHECK_MESSAGE(v.contains(key), "missing key " << key);
      if (v.contains(key)) check_shape(v[key], sub, where + "." + key);
    }
    for (const auto& [key, sub] : v.items()) CHECK_MESSAGE(shape.contains(key), "unexpected key " << key);
  } else {
    REQUIRE(v.is_array());
    for (std::size_t i = 0; i < v.size(); ++i) check_shape(v[i], shape[0], where + "[" + std::to_string(i) + "]");
  }
}

void check_golden(const json& v, const std::string& name) { check_shape(v, golden(name), name); }

fs::path scratch_dir() {
  const auto d = fs::temp_directory_path() / ("rsr_cli_test_" + std::to_string(getpid()));
  fs::create_directories(d);
  return d;
}

void check_error(const Run& r, const std::string& kind) {
  CHECK(r.code == 1);
  REQUIRE(r.lines.size() == 1);
  check_golden(r.lines[0], "error");
  CHECK(r.lines[0]["error"]["kind"] == kind);
}

}  // namespace

TEST_CASE("encode, preprocess and multiply the 2x4 example") {
  const auto dir = scratch_dir();
  const auto mat = (dir / "m.rsrm").string();
  const auto art = (dir / "m.rsra").string();

  auto enc = cli_run({"encode", "--entries", "[1,0,1,0,1,1,0,0]", "--rows", "2", "--cols", "4", "--out", mat});
  CHECK(enc.code == 0);
  REQUIRE(enc.lines.size() == 1);
  check_golden(enc.lines[0], "matrix");

  auto pre = cli_run({"preprocess", "--in", mat, "--k", "2", "--out", art});
  CHECK(pre.code == 0);
  REQUIRE(pre.lines.size() == 1);
  check_golden(pre.lines[0], "preprocess");
  CHECK(pre.lines[0]["artifact_bytes"] == fs::file_size(art));
  // the saved artifact reproduces the matrix
  CHECK(rsr::reconstruct(rsr::load_artifact(art)) == rsr::load_rsrm(mat));

  auto mul = cli_run({"multiply", "--artifact", art, "--vec", "[1,2,3,4]"});
  CHECK(mul.code == 0);
  CHECK(mul.out == "[4,3]\n");

  auto csv = cli_run({"multiply", "--artifact", art, "--vec", "1,2,3,4"});
  CHECK(csv.out == "[4,3]\n");

  auto real = cli_run({"multiply", "--artifact", art, "--vec", "[0.5,2,3,4]"});
  REQUIRE(real.lines.size() == 1);
  CHECK(real.lines[0] == json::parse("[3.5,2.5]"));

  const auto vec_file = (dir / "v.json").string();
  std::ofstream(vec_file) << "[1, 2, 3, 4]";
  const auto out_file = (dir / "y.json").string();
  auto to_file = cli_run({"multiply", "--artifact", art, "--vec", vec_file, "--out", out_file});
  CHECK(to_file.code == 0);
  REQUIRE(to_file.lines.size() == 1);
  check_golden(to_file.lines[0], "multiply_out");
  std::ifstream y(out_file);
  CHECK(json::parse(y) == json::parse("[4,3]"));

  check_error(cli_run({"multiply", "--artifact", art, "--vec", "[1,2,3]"}), "DimensionMismatch");
  fs::remove_all(dir);
}

TEST_CASE("error exits") {
  const auto dir = scratch_dir();
  check_error(cli_run({"preprocess", "--in", (dir / "missing.rsrm").string(), "--k", "2", "--out", "x.rsra"}),
              "FileNotFound");

  const auto mat = (dir / "m.rsrm").string();
  cli_run({"encode", "--entries", "[1,0,1,0,1,1,0,0]", "--rows", "2", "--cols", "4", "--out", mat});
  check_error(cli_run({"preprocess", "--in", mat, "--k", "20", "--out", (dir / "x.rsra").string()}), "KTooLarge");

  const auto junk = (dir / "junk.rsra").string();
  std::ofstream(junk) << "NOPE, not an artifact";
  check_error(cli_run({"multiply", "--artifact", junk, "--vec", "1"}), "BadMagic");

  check_error(cli_run({"encode", "--entries", "[2]", "--rows", "1", "--cols", "1", "--out", mat}), "OutOfAlphabet");
  check_error(cli_run({"bench", "--config", R"({"bitwidth": "ternary", "k_list": [20]})"}), "KTooLarge");
  check_error(cli_run({"decode", "--depth", "0", "--steps", "2"}), "InvalidDepth");
  check_error(cli_run({"decode", "--V", "16", "--prompt", "3,16", "--steps", "2"}), "BadTokenId");
  check_error(cli_run({"frobnicate"}), "InvalidConfig");
  fs::remove_all(dir);
}

TEST_CASE("bench JSON and CSV") {
  const std::string cfg = R"({"m": 32, "n": 64, "bitwidth": "ternary", "k_list": [2, 4], "reps": 3})";
  auto j = cli_run({"bench", "--config", cfg});
  CHECK(j.code == 0);
  REQUIRE(j.lines.size() == 1);
  check_golden(j.lines[0], "bench");
  CHECK(j.lines[0]["entries"].size() == 4);

  auto c = cli_run({"bench", "--config", cfg, "--format", "csv"}, false);
  CHECK(c.code == 0);
  CHECK(c.out.starts_with("kind,m,n,bitwidth,k,ns_median"));
}

TEST_CASE("sweep prints one line per k") {
  auto r = cli_run({"sweep", "--m", "256", "--n", "256", "--ks", "2..8", "--reps", "5"});
  CHECK(r.code == 0);
  REQUIRE(r.lines.size() == 7);
  for (unsigned i = 0; i < 7; ++i) {
    check_golden(r.lines[i], "entry");
    CHECK(r.lines[i]["k"] == i + 2);
    CHECK(r.lines[i]["ns_median"].get<double>() > 0);
  }
}

TEST_CASE("autotune") {
  auto r = cli_run({"autotune", "--m", "64", "--n", "256", "--bitwidth", "ternary", "--budget-ms", "20"});
  CHECK(r.code == 0);
  REQUIRE(r.lines.size() == 1);
  check_golden(r.lines[0], "autotune");
}

TEST_CASE("decode with both backends") {
  auto r = cli_run({"decode", "--seed", "7", "--steps", "20", "--backend", "both"});
  CHECK(r.code == 0);
  REQUIRE(r.lines.size() == 1);
  check_golden(r.lines[0], "decode");
  CHECK(r.lines[0]["sequences_equal"] == true);
  CHECK(r.lines[0]["runs"].size() == 2);

  auto one = cli_run({"decode", "--seed", "7", "--steps", "20", "--backend", "rsr"});
  REQUIRE(one.lines.size() == 1);
  check_golden(one.lines[0], "decode");
  CHECK(one.lines[0]["sequences_equal"].is_null());
  CHECK(one.lines[0]["runs"][0]["tokens"] == r.lines[0]["runs"][0]["tokens"]);
}

TEST_CASE("serve answers and stops on SIGINT") {
  const auto dir = scratch_dir();
  const auto history = (dir / "history.json").string();
  int pipefd[2];
  REQUIRE(pipe(pipefd) == 0);
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    dup2(pipefd[1], STDOUT_FILENO);
    close(pipefd[0]);
    close(pipefd[1]);
    execl(RSR_CLI_PATH, RSR_CLI_PATH, "serve", "--port", "0", "--history", history.c_str(),
          static_cast<char*>(nullptr));
    _exit(127);
  }
  close(pipefd[1]);
  std::string line;
  char c;
  while (read(pipefd[0], &c, 1) == 1 && c != '\n') line += c;
  const json hello = json::parse(line, nullptr, false);
  REQUIRE_FALSE(hello.is_discarded());
  check_golden(hello, "serve");

  httplib::Client cli("127.0.0.1", hello["listening"]["port"].get<int>());
  auto sys = cli.Get("/api/sysinfo");
  REQUIRE(sys);
  CHECK(sys->status == 200);
  auto post = cli.Post("/api/bench", R"({"m": 8, "n": 16, "k_list": [2], "reps": 1})", "application/json");
  REQUIRE(post);
  CHECK(post->status == 202);

  kill(pid, SIGINT);
  int status = 0;
  waitpid(pid, &status, 0);
  close(pipefd[0]);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  std::ifstream in(history);
  REQUIRE(in);
  CHECK(json::parse(in).size() == 1);
  fs::remove_all(dir);
}
