#include "doctest.h"
#include "rsr/error.hpp"
#include "rsr/toyrt.hpp"

using namespace rsr;
using namespace rsr::toy;

TEST_CASE("build_toy_model") {
  const auto m = build_toy_model(3, 64, 256, 2);
  REQUIRE(m.layers.size() == 9);
  REQUIRE(m.sibling_groups.size() == 2);
  for (const auto& group : m.sibling_groups)
    for (std::size_t idx : group) {
      CHECK(m.layers[idx].rows() == 64);
      CHECK(m.layers[idx].cols() == 64);
      CHECK(m.layers[idx].bitwidth() == Bitwidth::Ternary);
    }
  CHECK(m.layers[3].rows() == 64);
  CHECK(m.layers[m.head_index()].rows() == 256);
  CHECK(m.layers[m.head_index()].cols() == 64);

  CHECK(model_bytes(build_toy_model(3, 64, 256, 2)) == model_bytes(m));
  CHECK(model_bytes(build_toy_model(4, 64, 256, 2)) != model_bytes(m));

  try {
    build_toy_model(1, 64, 256, 0);
    FAIL("expected InvalidDepth");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidDepth);
  }
}

TEST_CASE("argmax ties go to the smallest id") {
  const std::vector<float> x{1.0f, 3.0f, 3.0f, -2.0f};
  CHECK(argmax(x) == 1);
  const std::vector<float> flat(5, 0.0f);
  CHECK(argmax(flat) == 0);
}

TEST_CASE("backends agree token for token") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto m = build_toy_model(seed, 32, 64, 2);
    prepare_rsr(m, 4);
    const std::vector<std::uint32_t> prompt{static_cast<std::uint32_t>(seed), 5};

    const auto one_naive = greedy_decode(m, Backend::Naive, prompt, 1);
    const auto one_rsr = greedy_decode(m, Backend::Rsr, prompt, 1);
    CHECK(one_naive.tokens == one_rsr.tokens);

    const auto naive = greedy_decode(m, Backend::Naive, prompt, 40);
    const auto rsr = greedy_decode(m, Backend::Rsr, prompt, 40, 2);
    CHECK(naive.tokens.size() == 40);
    CHECK(naive.tokens == rsr.tokens);
    CHECK(rsr.stats.tokens_generated == 40);
    CHECK(rsr.stats.tokens_per_second > 0);
    CHECK(rsr.stats.backend == Backend::Rsr);
    for (auto t : rsr.tokens) CHECK(t < 64);
  }
}

TEST_CASE("decode errors") {
  auto m = build_toy_model(1, 16, 32, 1);
  const std::vector<std::uint32_t> bad{3, 32};
  try {
    greedy_decode(m, Backend::Naive, bad, 2);
    FAIL("expected BadTokenId");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BadTokenId);
  }
  const std::vector<std::uint32_t> ok{3};
  CHECK_THROWS_AS(greedy_decode(m, Backend::Naive, ok, 0), Error);
  CHECK_THROWS_AS(greedy_decode(m, Backend::Rsr, ok, 1), Error);
  CHECK(parse_backend("rsr") == Backend::Rsr);
  CHECK(backend_name(Backend::Naive) == "naive");
}

TEST_CASE("per-layer k selection") {
  auto m = build_toy_model(5, 48, 96, 1);
  const unsigned k = model_k(m.layers[0]);
  CHECK(k >= 1);
  CHECK(k <= kMaxKTernary);
  prepare_rsr(m);
  REQUIRE(m.rsr.has_value());
  CHECK(m.rsr->head.header.plan.k == model_k(m.layers[m.head_index()]));
  const std::vector<std::uint32_t> prompt{9};
  CHECK(greedy_decode(m, Backend::Rsr, prompt, 25).tokens == greedy_decode(m, Backend::Naive, prompt, 25).tokens);
}
