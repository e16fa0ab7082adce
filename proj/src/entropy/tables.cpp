#include "roicodec/entropy/tables.hpp"

#include <bit>
#include <cmath>

#include "roicodec/entropy/likelihood.hpp"

namespace roicodec::entropy {

namespace {

double sigmoid_d(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

CodingTable finish_table(std::int64_t min_symbol, std::vector<double> pmf, double escape_mass) {
  pmf.push_back(escape_mass);
  return {min_symbol, quantize_pmf(pmf)};
}

}  // namespace

CodingTable gaussian_table(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw CoderError("gaussian_table: sigma must be positive and finite");
  const auto half = static_cast<std::int64_t>(
      std::clamp(std::ceil(kTailSigmas * sigma), 1.0, static_cast<double>(kMaxHalfWidth)));
  std::vector<double> pmf(static_cast<std::size_t>(2 * half + 1));
  for (std::int64_t k = -half; k <= half; ++k) {
    const double v = static_cast<double>(std::abs(k));
    pmf[static_cast<std::size_t>(k + half)] = normal_cdf((0.5 - v) / sigma) - normal_cdf((-0.5 - v) / sigma);
  }
  const double tail = 2.0 * normal_cdf((-0.5 - static_cast<double>(half)) / sigma);
  return finish_table(-half, std::move(pmf), tail);
}

template <typename T>
CodingTable factorized_table(const FactorizedPrior<T>& prior, std::size_t channel) {
  auto logit = [&](double x) { return prior.cdf_logit(channel, x); };
  // Median by bisection; the CDF is monotone.
  double lo = -static_cast<double>(kMaxHalfWidth), hi = static_cast<double>(kMaxHalfWidth);
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (logit(mid) < 0.0 ? lo : hi) = mid;
  }
  const auto median = static_cast<std::int64_t>(round_half_away(0.5 * (lo + hi)));
  constexpr double kTail = 1.0 / (1 << 18);
  std::int64_t first = median, last = median;
  while (median - first < kMaxHalfWidth && sigmoid_d(logit(static_cast<double>(first) - 0.5)) > kTail) --first;
  while (last - median < kMaxHalfWidth && sigmoid_d(-logit(static_cast<double>(last) + 0.5)) > kTail) ++last;

  std::vector<double> pmf;
  for (std::int64_t k = first; k <= last; ++k) {
    const double l = logit(static_cast<double>(k) - 0.5), u = logit(static_cast<double>(k) + 0.5);
    const double s = l + u > 0.0 ? -1.0 : 1.0;
    const double p = std::max(0.0, s * (sigmoid_d(s * u) - sigmoid_d(s * l)));
    pmf.push_back(p);
  }
  const double tail = sigmoid_d(logit(static_cast<double>(first) - 0.5)) +
                      sigmoid_d(-logit(static_cast<double>(last) + 0.5));
  return finish_table(first, std::move(pmf), tail);
}

void encode_value(RangeEncoder& enc, const CodingTable& table, std::int64_t value) {
  if (value >= table.min_symbol && value <= table.max_symbol()) {
    enc.encode(table.freq, static_cast<std::size_t>(value - table.min_symbol));
    return;
  }
  enc.encode(table.freq, table.escape_index());
  const bool negative = value < table.min_symbol;
  enc.encode_bits(negative ? 1 : 0, 1);
  const auto excess = static_cast<std::uint64_t>(negative ? table.min_symbol - value - 1 : value - table.max_symbol() - 1);
  const std::uint64_t x = excess + 1;
  const auto k = static_cast<std::uint32_t>(std::bit_width(x) - 1);
  for (std::uint32_t i = 0; i < k; ++i) enc.encode_bits(1, 1);
  enc.encode_bits(0, 1);
  for (std::uint32_t done = 0; done < k;) {
    const std::uint32_t n = std::min<std::uint32_t>(16, k - done);
    enc.encode_bits(static_cast<std::uint32_t>((x >> done) & ((1u << n) - 1)), n);
    done += n;
  }
}

std::int64_t decode_value(RangeDecoder& dec, const CodingTable& table) {
  const std::size_t index = dec.decode(table.freq);
  if (index != table.escape_index()) return table.min_symbol + static_cast<std::int64_t>(index);
  const bool negative = dec.decode_bits(1) != 0;
  std::uint32_t k = 0;
  while (dec.decode_bits(1) != 0) {
    if (++k > 62) throw CoderError("escape code too long (corrupt stream)");
  }
  std::uint64_t x = 0;
  for (std::uint32_t done = 0; done < k;) {
    const std::uint32_t n = std::min<std::uint32_t>(16, k - done);
    x |= static_cast<std::uint64_t>(dec.decode_bits(n)) << done;
    done += n;
  }
  x |= std::uint64_t{1} << k;
  const auto excess = static_cast<std::int64_t>(x - 1);
  return negative ? table.min_symbol - 1 - excess : table.max_symbol() + 1 + excess;
}

template CodingTable factorized_table(const FactorizedPrior<float>&, std::size_t);
template CodingTable factorized_table(const FactorizedPrior<double>&, std::size_t);

}  // namespace roicodec::entropy
