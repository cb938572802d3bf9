#include "rsr/multiplier.hpp"

#include "rsr/error.hpp"

namespace rsr {

std::string kind_name(Multiplier::Kind kind) {
  switch (kind) {
    case Multiplier::Kind::NaiveF32: return "NaiveF32";
    case Multiplier::Kind::NaiveI8: return "NaiveI8";
    case Multiplier::Kind::RsrBinary: return "RsrBinary";
    case Multiplier::Kind::RsrTernary: return "RsrTernary";
  }
  return "?";
}

Multiplier::Kind parse_kind(const std::string& name) {
  using Kind = Multiplier::Kind;
  for (auto k : {Kind::NaiveF32, Kind::NaiveI8, Kind::RsrBinary, Kind::RsrTernary})
    if (kind_name(k) == name) return k;
  throw Error(ErrorKind::InvalidConfig, "unknown multiplier kind '" + name + "'");
}

Multiplier Multiplier::create(Kind kind, const PackedMatrix& m, const Options& opts) {
  Multiplier mul(kind, m.rows(), m.cols());
  mul.threads_ = opts.threads;
  switch (kind) {
    case Kind::NaiveF32: {
      const auto e = m.decode();
      mul.state_ = DenseF32State{{e.begin(), e.end()}};
      break;
    }
    case Kind::NaiveI8:
      mul.state_ = DenseI8State{m.decode()};
      break;
    case Kind::RsrBinary:
    case Kind::RsrTernary: {
      const Bitwidth want = kind == Kind::RsrBinary ? Bitwidth::Binary : Bitwidth::Ternary;
      if (m.bitwidth() != want)
        throw Error(ErrorKind::InvalidConfig,
                    kind_name(kind) + " needs a " + bitwidth_name(want) + " matrix");
      mul.state_ = preprocess(m, opts.k, opts.tile_width, opts.threads);
      break;
    }
  }
  return mul;
}

Multiplier Multiplier::from_artifact(RsrArtifact a, unsigned threads) {
  const Kind kind = a.header.bitwidth == Bitwidth::Binary ? Kind::RsrBinary : Kind::RsrTernary;
  Multiplier mul(kind, a.header.m, a.header.n);
  mul.threads_ = threads;
  mul.state_ = std::move(a);
  return mul;
}

void Multiplier::check_len(std::size_t len) const {
  if (len != cols_)
    throw Error(ErrorKind::DimensionMismatch,
                "vector length " + std::to_string(len) + " != cols " + std::to_string(cols_));
}

std::vector<float> Multiplier::multiply(std::span<const float> v, OpCounter* counter) const {
  check_len(v.size());
  const auto& kt = simd::kernel_table();
  std::vector<float> y(rows_);
  if (const auto* d = std::get_if<DenseF32State>(&state_)) {
    kt.dense_f32(d->w.data(), rows_, cols_, v.data(), y.data());
  } else if (const auto* d8 = std::get_if<DenseI8State>(&state_)) {
    for (std::size_t r = 0; r < rows_; ++r) {
      float acc = 0.0f;
      for (std::size_t c = 0; c < cols_; ++c) acc += static_cast<float>(d8->w[r * cols_ + c]) * v[c];
      y[r] = acc;
    }
  } else {
    MatvecOptions opts;
    opts.threads = threads_;
    opts.counter = counter;
    y = rsr_matvec(std::get<RsrArtifact>(state_), v, opts);
  }
  return y;
}

std::vector<std::int32_t> Multiplier::multiply(std::span<const std::int8_t> v,
                                               OpCounter* counter) const {
  check_len(v.size());
  const auto& kt = simd::kernel_table();
  std::vector<std::int32_t> y(rows_);
  if (const auto* d = std::get_if<DenseF32State>(&state_)) {
    const std::vector<float> vf(v.begin(), v.end());
    std::vector<float> yf(rows_);
    kt.dense_f32(d->w.data(), rows_, cols_, vf.data(), yf.data());
    for (std::size_t r = 0; r < rows_; ++r) y[r] = static_cast<std::int32_t>(yf[r]);
  } else if (const auto* d8 = std::get_if<DenseI8State>(&state_)) {
    kt.dense_i8(d8->w.data(), rows_, cols_, v.data(), y.data());
  } else {
    MatvecOptions opts;
    opts.threads = threads_;
    opts.counter = counter;
    y = rsr_matvec(std::get<RsrArtifact>(state_), v, opts);
  }
  return y;
}

}  // namespace rsr
