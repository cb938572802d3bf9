#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rsr {

enum class Bitwidth : std::uint8_t { Binary = 0, Ternary = 1 };

std::string bitwidth_name(Bitwidth bw);
Bitwidth parse_bitwidth(const std::string& name);

// Row-major low-bit matrix. Each row starts on a fresh 64-bit storage word;
// entries are packed LSB-first within a word (1 bit per binary entry, 2 bits
// per ternary entry with codes 0->00, +1->01, -1->10). Padding bits are zero.
class PackedMatrix {
 public:
  static PackedMatrix encode(std::span<const std::int8_t> entries, std::size_t rows,
                             std::size_t cols, Bitwidth bw, float weight_scale = 1.0f);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Bitwidth bitwidth() const noexcept { return bw_; }
  float weight_scale() const noexcept { return weight_scale_; }
  void set_weight_scale(float beta) noexcept { weight_scale_ = beta; }

  std::int8_t at(std::size_t row, std::size_t col) const noexcept;

  // Raw 2-bit (ternary) or 1-bit (binary) code of an entry.
  std::uint32_t code(std::size_t row, std::size_t col) const noexcept;

  std::vector<std::int8_t> decode() const;

  std::size_t words_per_row() const noexcept { return words_per_row_; }
  std::span<const std::uint64_t> row_words(std::size_t row) const noexcept {
    return {words_.data() + row * words_per_row_, words_per_row_};
  }
  // Little-endian byte image of the storage words.
  std::vector<std::uint8_t> storage_bytes() const;

  friend bool operator==(const PackedMatrix&, const PackedMatrix&) = default;

 private:
  PackedMatrix(std::size_t rows, std::size_t cols, Bitwidth bw, float beta);

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Bitwidth bw_ = Bitwidth::Binary;
  float weight_scale_ = 1.0f;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> words_;
};

inline constexpr unsigned bits_per_entry(Bitwidth bw) { return bw == Bitwidth::Binary ? 1 : 2; }

struct QuantizedVector {
  std::vector<std::int8_t> values;
  float scale = 1.0f;
};

// Absmean ternarization of a row-major real matrix.
PackedMatrix ternarize_weights(std::span<const float> w, std::size_t rows, std::size_t cols);

// Absmax int8 quantization into [-127, 127].
QuantizedVector quantize_activations(std::span<const float> v);

// Reference products used as the oracle for every kernel. The integer form
// accumulates in int32, the real form in double.
std::vector<std::int32_t> naive_matvec(const PackedMatrix& m, std::span<const std::int8_t> v);
std::vector<double> naive_matvec(const PackedMatrix& m, std::span<const float> v);

// Round half away from zero.
double round_half_away(double x) noexcept;

// `.rsrm` raw matrix files (unpacked int8 entries).
void save_rsrm(const PackedMatrix& m, const std::string& path);
PackedMatrix load_rsrm(const std::string& path);
std::vector<std::uint8_t> serialize_rsrm(const PackedMatrix& m);
PackedMatrix parse_rsrm(std::span<const std::uint8_t> bytes);

}  // namespace rsr
