#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rsr/kernels.hpp"

namespace rsr {

// Preprocess-once / multiply-many wrapper over the dense baselines and the
// RSR kernels.
class Multiplier {
 public:
  enum class Kind { NaiveF32, NaiveI8, RsrBinary, RsrTernary };

  struct Options {
    unsigned k = 8;
    std::size_t tile_width = 0;
    unsigned threads = 1;
  };

  static Multiplier create(Kind kind, const PackedMatrix& m, const Options& opts);
  static Multiplier create(Kind kind, const PackedMatrix& m) { return create(kind, m, Options{}); }
  static Multiplier from_artifact(RsrArtifact a, unsigned threads = 1);

  Kind kind() const noexcept { return kind_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  void set_threads(unsigned threads) noexcept { threads_ = threads; }

  std::vector<float> multiply(std::span<const float> v, OpCounter* counter = nullptr) const;
  std::vector<std::int32_t> multiply(std::span<const std::int8_t> v,
                                     OpCounter* counter = nullptr) const;

  // nullptr for the naive kinds.
  const RsrArtifact* artifact() const noexcept { return std::get_if<RsrArtifact>(&state_); }

 private:
  struct DenseF32State {
    std::vector<float> w;
  };
  struct DenseI8State {
    std::vector<std::int8_t> w;
  };

  Multiplier(Kind kind, std::size_t rows, std::size_t cols) : kind_(kind), rows_(rows), cols_(cols) {}
  void check_len(std::size_t len) const;

  Kind kind_;
  std::size_t rows_;
  std::size_t cols_;
  unsigned threads_ = 1;
  std::variant<DenseF32State, DenseI8State, RsrArtifact> state_;
};

std::string kind_name(Multiplier::Kind kind);
Multiplier::Kind parse_kind(const std::string& name);

}  // namespace rsr
