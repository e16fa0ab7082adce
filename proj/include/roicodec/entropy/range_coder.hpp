#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "roicodec/util/bytes.hpp"

namespace roicodec::entropy {

inline constexpr std::uint32_t kFreqBits = 16;
inline constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;

// Cumulative frequencies: cdf[0] = 0, cdf.back() = kFreqTotal, every symbol
// has mass >= 1.
struct FrequencyTable {
  std::vector<std::uint32_t> cdf;

  std::size_t size() const { return cdf.empty() ? 0 : cdf.size() - 1; }
  std::uint32_t freq(std::size_t s) const { return cdf[s + 1] - cdf[s]; }
  bool operator==(const FrequencyTable&) const = default;
};

// Turns a probability vector into a table: each symbol gets 1 + floor(p *
// spare) and the rounding remainder goes to the most probable symbol.
FrequencyTable quantize_pmf(std::span<const double> pmf);

// Carry-propagating range coder with a 32-bit range and byte output.
class RangeEncoder {
 public:
  void encode(const FrequencyTable& table, std::size_t symbol);
  // Uniform value in [0, 2^bits), bits <= 16.
  void encode_bits(std::uint32_t value, std::uint32_t bits);
  util::Bytes finish();

 private:
  void encode_range(std::uint32_t start, std::uint32_t size, std::uint32_t total_bits);
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  util::Bytes out_;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> data);
  std::size_t decode(const FrequencyTable& table);
  std::uint32_t decode_bits(std::uint32_t bits);
  // Bytes consumed so far.
  std::size_t position() const { return pos_; }

 private:
  std::uint8_t next_byte();
  void consume(std::uint32_t start, std::uint32_t size);

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t r_ = 0;
};

// Whole-sequence helpers; tables[i] codes symbols[i].
util::Bytes range_encode(std::span<const std::uint32_t> symbols, std::span<const FrequencyTable* const> tables);
std::vector<std::uint32_t> range_decode(std::span<const std::uint8_t> bytes,
                                        std::span<const FrequencyTable* const> tables, std::size_t n);

}  // namespace roicodec::entropy
