#pragma once

#include <cstdint>

#include "roicodec/entropy/factorized.hpp"
#include "roicodec/entropy/range_coder.hpp"

namespace roicodec::entropy {

// Largest half-width of a table's explicit support.
inline constexpr std::int64_t kMaxHalfWidth = 2048;
// Gaussian support is +-ceil(kTailSigmas * sigma): the two tails then hold
// less than 2^-16 of the mass.
inline constexpr double kTailSigmas = 4.5;

// Integer values min_symbol .. min_symbol + n - 1 map to indices 0 .. n-1;
// index n is the escape symbol for anything outside.
struct CodingTable {
  std::int64_t min_symbol = 0;
  FrequencyTable freq;

  std::size_t escape_index() const { return freq.size() - 1; }
  std::int64_t max_symbol() const { return min_symbol + static_cast<std::int64_t>(freq.size()) - 2; }
  bool operator==(const CodingTable&) const = default;
};

// Table for the integer residual round(y - mu) under N(0, sigma).
CodingTable gaussian_table(double sigma);

// Table for round(z) in one channel of the factorized prior.
template <typename T>
CodingTable factorized_table(const FactorizedPrior<T>& prior, std::size_t channel);

// Values beyond the support go out as the escape symbol, a sign bit and an
// order-0 Exp-Golomb code of the excess.
void encode_value(RangeEncoder& enc, const CodingTable& table, std::int64_t value);
std::int64_t decode_value(RangeDecoder& dec, const CodingTable& table);

}  // namespace roicodec::entropy
