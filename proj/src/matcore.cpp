#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "rsr/detail/bytes.hpp"
#include "rsr/error.hpp"
#include "rsr/matrix.hpp"
#include "rsr/simd.hpp"

namespace rsr {

namespace {

constexpr std::uint32_t kTernaryCodeZero = 0b00;
constexpr std::uint32_t kTernaryCodePlus = 0b01;
constexpr std::uint32_t kTernaryCodeMinus = 0b10;

std::size_t entries_per_word(Bitwidth bw) { return 64 / bits_per_entry(bw); }

std::string cell_str(std::size_t row, std::size_t col) {
  return "(" + std::to_string(row) + ", " + std::to_string(col) + ")";
}

}  // namespace

std::string bitwidth_name(Bitwidth bw) { return bw == Bitwidth::Binary ? "binary" : "ternary"; }

Bitwidth parse_bitwidth(const std::string& name) {
  if (name == "binary" || name == "1" || name == "1bit") return Bitwidth::Binary;
  if (name == "ternary" || name == "1.58" || name == "1.58bit") return Bitwidth::Ternary;
  throw Error(ErrorKind::InvalidConfig, "unknown bitwidth '" + name + "'");
}

PackedMatrix::PackedMatrix(std::size_t rows, std::size_t cols, Bitwidth bw, float beta)
    : rows_(rows), cols_(cols), bw_(bw), weight_scale_(beta) {
  const std::size_t epw = entries_per_word(bw);
  words_per_row_ = (cols + epw - 1) / epw;
  words_.assign(rows * words_per_row_, 0);
}

PackedMatrix PackedMatrix::encode(std::span<const std::int8_t> entries, std::size_t rows,
                                  std::size_t cols, Bitwidth bw, float weight_scale) {
  if (rows == 0 || cols == 0)
    throw Error(ErrorKind::DimensionMismatch, "matrix dimensions must be >= 1");
  if (entries.size() != rows * cols)
    throw Error(ErrorKind::DimensionMismatch,
                "expected " + std::to_string(rows * cols) + " entries, got " +
                    std::to_string(entries.size()));

  PackedMatrix m(rows, cols, bw, weight_scale);
  const std::size_t epw = entries_per_word(bw);
  const unsigned bpe = bits_per_entry(bw);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::int8_t e = entries[r * cols + c];
      std::uint64_t code = 0;
      if (bw == Bitwidth::Binary) {
        if (e != 0 && e != 1)
          throw Error(ErrorKind::OutOfAlphabet,
                      "binary entry " + std::to_string(e) + " at " + cell_str(r, c));
        code = static_cast<std::uint64_t>(e);
      } else {
        switch (e) {
          case 0: code = kTernaryCodeZero; break;
          case 1: code = kTernaryCodePlus; break;
          case -1: code = kTernaryCodeMinus; break;
          default:
            throw Error(ErrorKind::OutOfAlphabet,
                        "ternary entry " + std::to_string(e) + " at " + cell_str(r, c));
        }
      }
      m.words_[r * m.words_per_row_ + c / epw] |= code << (bpe * (c % epw));
    }
  }
  return m;
}

std::uint32_t PackedMatrix::code(std::size_t row, std::size_t col) const noexcept {
  const std::size_t epw = entries_per_word(bw_);
  const unsigned bpe = bits_per_entry(bw_);
  const std::uint64_t w = words_[row * words_per_row_ + col / epw];
  return static_cast<std::uint32_t>((w >> (bpe * (col % epw))) & ((1u << bpe) - 1));
}

std::int8_t PackedMatrix::at(std::size_t row, std::size_t col) const noexcept {
  const std::uint32_t c = code(row, col);
  if (bw_ == Bitwidth::Binary) return static_cast<std::int8_t>(c);
  return c == kTernaryCodePlus ? 1 : (c == kTernaryCodeMinus ? -1 : 0);
}

std::vector<std::int8_t> PackedMatrix::decode() const {
  std::vector<std::int8_t> out(rows_ * cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out[r * cols_ + c] = at(r, c);
  return out;
}

std::vector<std::uint8_t> PackedMatrix::storage_bytes() const {
  detail::ByteWriter w;
  for (std::uint64_t word : words_) w.u64(word);
  return w.take();
}

double round_half_away(double x) noexcept { return std::round(x); }

PackedMatrix ternarize_weights(std::span<const float> w, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || w.size() != rows * cols)
    throw Error(ErrorKind::DimensionMismatch, "weight buffer does not match rows*cols");
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]))
      throw Error(ErrorKind::NonFinite, "non-finite weight at " + cell_str(i / cols, i % cols));
    abs_sum += std::fabs(static_cast<double>(w[i]));
  }
  float beta = static_cast<float>(abs_sum / static_cast<double>(w.size()));
  if (beta == 0.0f) beta = 1.0f;

  std::vector<std::int8_t> entries(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double r = round_half_away(static_cast<double>(w[i]) / static_cast<double>(beta));
    entries[i] = static_cast<std::int8_t>(std::clamp(r, -1.0, 1.0));
  }
  return PackedMatrix::encode(entries, rows, cols, Bitwidth::Ternary, beta);
}

QuantizedVector quantize_activations(std::span<const float> v) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw Error(ErrorKind::NonFinite, "non-finite activation at index " + std::to_string(i));

  const auto& kt = simd::kernel_table();
  QuantizedVector q;
  q.values.resize(v.size());
  const float max_abs = v.empty() ? 0.0f : kt.absmax(v.data(), v.size());
  q.scale = max_abs > 0.0f ? 127.0f / max_abs : 1.0f;
  if (!v.empty()) kt.quantize(v.data(), v.size(), q.scale, q.values.data());
  return q;
}

std::vector<std::int32_t> naive_matvec(const PackedMatrix& m, std::span<const std::int8_t> v) {
  if (v.size() != m.cols())
    throw Error(ErrorKind::DimensionMismatch, "vector length " + std::to_string(v.size()) +
                                                  " != cols " + std::to_string(m.cols()));
  std::vector<std::int32_t> y(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::int32_t acc = 0;
    for (std::size_t c = 0; c < m.cols(); ++c) acc += m.at(r, c) * static_cast<std::int32_t>(v[c]);
    y[r] = acc;
  }
  return y;
}

std::vector<double> naive_matvec(const PackedMatrix& m, std::span<const float> v) {
  if (v.size() != m.cols())
    throw Error(ErrorKind::DimensionMismatch, "vector length " + std::to_string(v.size()) +
                                                  " != cols " + std::to_string(m.cols()));
  std::vector<double> y(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) acc += m.at(r, c) * static_cast<double>(v[c]);
    y[r] = acc;
  }
  return y;
}

// .rsrm: "RSRM" | version u8 | bitwidth u8 | m u32 | n u32 | weight_scale f32 | m*n int8
std::vector<std::uint8_t> serialize_rsrm(const PackedMatrix& m) {
  detail::ByteWriter w;
  w.put_bytes("RSRM", 4);
  w.u8(1);
  w.u8(static_cast<std::uint8_t>(m.bitwidth()));
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.f32(m.weight_scale());
  const auto entries = m.decode();
  w.put_bytes(entries.data(), entries.size());
  return w.take();
}

PackedMatrix parse_rsrm(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), "RSRM"))
    throw Error(ErrorKind::BadMagic, "not an .rsrm file");
  const std::uint8_t version = r.u8();
  if (version != 1)
    throw Error(ErrorKind::UnsupportedVersion, "unsupported .rsrm version " + std::to_string(version));
  const std::uint8_t bw = r.u8();
  if (bw > 1) throw Error(ErrorKind::CorruptArtifact, "bad bitwidth byte at offset 5");
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  const float beta = r.f32();
  auto payload = r.take(static_cast<std::size_t>(rows) * cols);
  std::vector<std::int8_t> entries(payload.size());
  std::transform(payload.begin(), payload.end(), entries.begin(),
                 [](std::uint8_t b) { return static_cast<std::int8_t>(b); });
  return PackedMatrix::encode(entries, rows, cols, static_cast<Bitwidth>(bw), beta);
}

void save_rsrm(const PackedMatrix& m, const std::string& path) {
  detail::write_file(path, serialize_rsrm(m));
}

PackedMatrix load_rsrm(const std::string& path) { return parse_rsrm(detail::read_file(path)); }

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to '" + path + "'");
}

}  // namespace detail

}  // namespace rsr
