#include "roicodec/entropy/range_coder.hpp"

#include <algorithm>
#include <cmath>

#include "roicodec/errors.hpp"

namespace roicodec::entropy {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

FrequencyTable quantize_pmf(std::span<const double> pmf) {
  const std::size_t n = pmf.size();
  if (n == 0 || n > kFreqTotal) throw CoderError("frequency table needs 1.." + std::to_string(kFreqTotal) + " symbols");
  const double spare = static_cast<double>(kFreqTotal - n);
  std::vector<std::int64_t> f(n);
  std::int64_t total = 0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pmf[i], 0.0, 1.0);
    f[i] = 1 + static_cast<std::int64_t>(std::floor(p * spare));
    total += f[i];
    if (pmf[i] > pmf[best]) best = i;
  }
  f[best] += static_cast<std::int64_t>(kFreqTotal) - total;
  if (f[best] < 1) throw CoderError("frequency table: probabilities sum far above one");
  FrequencyTable t;
  t.cdf.resize(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) t.cdf[i + 1] = t.cdf[i] + static_cast<std::uint32_t>(f[i]);
  return t;
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode_range(std::uint32_t start, std::uint32_t size, std::uint32_t total_bits) {
  const std::uint32_t r = range_ >> total_bits;
  low_ += static_cast<std::uint64_t>(r) * start;
  range_ = r * size;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode(const FrequencyTable& table, std::size_t symbol) {
  if (finished_) throw CoderError("encoder already finished");
  if (symbol >= table.size())
    throw CoderError("symbol " + std::to_string(symbol) + " outside table of " + std::to_string(table.size()));
  encode_range(table.cdf[symbol], table.freq(symbol), kFreqBits);
}

void RangeEncoder::encode_bits(std::uint32_t value, std::uint32_t bits) {
  if (bits == 0) return;
  if (bits > 16 || value >= (1u << bits)) throw CoderError("encode_bits: value does not fit");
  encode_range(value, 1, bits);
}

util::Bytes RangeEncoder::finish() {
  if (!finished_) {
    for (int i = 0; i < 5; ++i) shift_low();
    finished_ = true;
  }
  return out_;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> data) : data_(data) {
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= data_.size()) throw CoderError("range decoder: stream truncated");
  return data_[pos_++];
}

void RangeDecoder::consume(std::uint32_t start, std::uint32_t size) {
  code_ -= r_ * start;
  range_ = r_ * size;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

std::size_t RangeDecoder::decode(const FrequencyTable& table) {
  r_ = range_ >> kFreqBits;
  const std::uint32_t v = std::min(code_ / r_, kFreqTotal - 1);
  // First symbol whose upper edge exceeds v.
  const auto it = std::upper_bound(table.cdf.begin() + 1, table.cdf.end(), v);
  const auto s = static_cast<std::size_t>(it - table.cdf.begin() - 1);
  consume(table.cdf[s], table.freq(s));
  return s;
}

std::uint32_t RangeDecoder::decode_bits(std::uint32_t bits) {
  if (bits == 0) return 0;
  if (bits > 16) throw CoderError("decode_bits: at most 16 bits");
  r_ = range_ >> bits;
  const std::uint32_t v = std::min(code_ / r_, (1u << bits) - 1);
  consume(v, 1);
  return v;
}

util::Bytes range_encode(std::span<const std::uint32_t> symbols, std::span<const FrequencyTable* const> tables) {
  if (symbols.size() != tables.size()) throw CoderError("range_encode: one table per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(*tables[i], symbols[i]);
  return enc.finish();
}

std::vector<std::uint32_t> range_decode(std::span<const std::uint8_t> bytes,
                                        std::span<const FrequencyTable* const> tables, std::size_t n) {
  if (tables.size() < n) throw CoderError("range_decode: one table per symbol required");
  RangeDecoder dec(bytes);
  std::vector<std::uint32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint32_t>(dec.decode(*tables[i]));
  return out;
}

}  // namespace roicodec::entropy
