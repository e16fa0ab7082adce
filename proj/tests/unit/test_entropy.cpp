#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "roicodec/entropy/bitstream.hpp"
#include "roicodec/entropy/likelihood.hpp"
#include "roicodec/entropy/range_coder.hpp"
#include "roicodec/entropy/tables.hpp"

using namespace roicodec;
using namespace roicodec::entropy;
using roicodec::testing::check_gradient;
using roicodec::testing::random_tensor;

namespace {
using TD = Tensor<double>;

FrequencyTable random_table(std::mt19937_64& rng, std::size_t n) {
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<double> p(n);
  for (auto& v : p) v = g(rng) + 1e-12;
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= s;
  return quantize_pmf(p);
}

// Independent scalar evaluation of the prior's CDF logit straight from the
// parameter tensors.
double reference_logit(const FactorizedPrior<double>& prior, std::size_t c, double x) {
  std::vector<double> h{x};
  for (std::size_t k = 0; k < prior.matrices.size(); ++k) {
    const auto& m = prior.matrices[k];
    const std::size_t out = m.dim(1), in = m.dim(2);
    std::vector<double> next(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = prior.biases[k].at({c, o, 0});
      for (std::size_t i = 0; i < in; ++i) acc += std::log1p(std::exp(m.at({c, o, i}))) * h[i];
      if (k < prior.factors.size()) acc += std::tanh(prior.factors[k].at({c, o, 0})) * std::tanh(acc);
      next[o] = acc;
    }
    h = next;
  }
  return h[0];
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

// --- quantize ---------------------------------------------------------------------------

TEST(Quantize, RoundTiesAwayFromZero) {
  auto x = TD::from_data({5}, {1.4, 1.5, -1.5, 2.5, -0.4});
  auto r = quantize(x, QuantMode::Round);
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{1, 2, -2, 3, -0}));
}

TEST(Quantize, RoundWithOffset) {
  auto x = TD::from_data({2}, {1.2, -0.3});
  auto o = TD::from_data({2}, {0.3, 0.25});
  auto r = quantize(x, QuantMode::Round, nullptr, o);
  EXPECT_DOUBLE_EQ(r.data()[0], 1.3);
  EXPECT_DOUBLE_EQ(r.data()[1], -0.75);
}

TEST(Quantize, NoiseIsBoundedAndUnbiased) {
  std::mt19937_64 rng(1);
  auto x = TD::full({100000}, 0.25);
  auto y = quantize(x, QuantMode::Noise, &rng);
  double mean = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = y.data()[i] - x.data()[i];
    EXPECT_GE(d, -0.5);
    EXPECT_LE(d, 0.5);
    mean += y.data()[i];
  }
  mean /= 100000.0;
  const double sd = std::sqrt(1.0 / 12.0 / 100000.0);
  EXPECT_LT(std::abs(mean - 0.25), 3 * sd);
  EXPECT_THROW(quantize(x, QuantMode::Noise, nullptr), ContractError);
}

TEST(Quantize, SteForwardRoundsBackwardIdentity) {
  auto x = TD::from_data({3}, {0.4, 1.6, -2.5}, true);
  auto y = quantize(x, QuantMode::Ste);
  auto r = quantize(x, QuantMode::Round);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y.data()[i], r.data()[i]);
  backward(sum(y));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Quantize, UnknownModeThrows) { EXPECT_THROW(quant_mode_from_string("dither"), ContractError); }

// --- likelihoods ---------------------------------------------------------------------------

TEST(GaussianLikelihood, StandardNormalBin) {
  auto p = gaussian_likelihood(TD::zeros({1}), TD::zeros({1}), TD::full({1}, 1.0));
  EXPECT_NEAR(p.item(), 0.382925, 1e-6);
  // -log2(0.382925) = 1.38487; the commonly quoted 1.3851 is off in the fourth decimal
  EXPECT_NEAR(-std::log2(p.item()), -std::log2(0.382925), 1e-5);
  EXPECT_NEAR(estimate_bits<double>({p}), 1.3849, 1e-4);
}

TEST(GaussianLikelihood, WiderSigmaLowersCenterMass) {
  auto p1 = gaussian_likelihood(TD::zeros({1}), TD::zeros({1}), TD::full({1}, 1.0));
  auto p10 = gaussian_likelihood(TD::zeros({1}), TD::zeros({1}), TD::full({1}, 10.0));
  EXPECT_LT(p10.item(), p1.item());
}

TEST(GaussianLikelihood, FloorAndValidity) {
  auto p = gaussian_likelihood(TD::full({2}, 50.0), TD::zeros({2}), TD::from_data({2}, {0.01, 1.0}));
  for (double v : p.data()) {
    EXPECT_GE(v, kLikelihoodFloor);
    EXPECT_LE(v, 1.0);
  }
}

TEST(GaussianLikelihood, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  // kept away from the likelihood floor, where the function has a kink
  auto y = random_tensor({40}, rng, -2, 2);
  auto mu = random_tensor({40}, rng, -1, 1);
  auto sigma = random_tensor({40}, rng, 0.8, 3.0);
  auto f = [&] { return rate_bits(gaussian_likelihood(y, mu, sigma)); };
  EXPECT_LT(check_gradient(f, y).rel_error, 1e-4);
  EXPECT_LT(check_gradient(f, mu).rel_error, 1e-4);
  EXPECT_LT(check_gradient(f, sigma).rel_error, 1e-4);
}

TEST(FactorizedPrior, MassOverSupportAtMostOne) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    nn::ParamInit init(seed);
    FactorizedPrior<double> prior(3, init);
    std::mt19937_64 rng(seed);
    for (auto* group : {&prior.matrices, &prior.biases, &prior.factors})
      for (auto& t : *group)
        for (auto& v : t.mutable_data()) v += std::normal_distribution<double>(0, 1)(rng);
    std::vector<double> zs;
    for (int k = -200; k <= 200; ++k) zs.push_back(k);
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> v(3 * zs.size(), 0.0);
      for (std::size_t i = 0; i < zs.size(); ++i) v[c * zs.size() + i] = zs[i];
      auto p = prior.likelihood(TD::from_data({1, 3, 1, zs.size()}, v));
      double total = 0;
      for (std::size_t i = 0; i < zs.size(); ++i) {
        EXPECT_GE(p.data()[c * zs.size() + i], 0.0);
        total += p.data()[c * zs.size() + i];
      }
      EXPECT_LE(total, 1.0 + 1e-6);
    }
  }
}

TEST(FactorizedPrior, CenterMassMatchesCdfOracle) {
  nn::ParamInit init(4);
  FactorizedPrior<double> prior(2, init);
  auto p = prior.likelihood(TD::zeros({1, 2, 1, 1}));
  for (std::size_t c = 0; c < 2; ++c) {
    const double expect = logistic(reference_logit(prior, c, 0.5)) - logistic(reference_logit(prior, c, -0.5));
    EXPECT_NEAR(p.data()[c], expect, 1e-12);
    EXPECT_NEAR(prior.cdf_logit(c, 0.3), reference_logit(prior, c, 0.3), 1e-12);
  }
}

TEST(FactorizedPrior, CdfMonotoneOnGrid) {
  nn::ParamInit init(5);
  FactorizedPrior<double> prior(2, init);
  for (std::size_t c = 0; c < 2; ++c) {
    double prev = -1e300;
    for (double x = -30; x <= 30; x += 0.05) {
      const double v = prior.cdf_logit(c, x);
      EXPECT_GT(v, prev);
      prev = v;
    }
  }
}

TEST(FactorizedPrior, GradientsMatchFiniteDifferences) {
  nn::ParamInit init(6);
  FactorizedPrior<double> prior(2, init);
  std::mt19937_64 rng(7);
  auto z = random_tensor({1, 2, 3, 3}, rng, -3, 3);
  auto f = [&] { return rate_bits(prior.likelihood(z)); };
  EXPECT_LT(check_gradient(f, z).rel_error, 1e-4);
  nn::ParameterList<double> params;
  prior.collect(params, "prior");
  for (auto& p : params) EXPECT_LT(check_gradient(f, p.tensor).rel_error, 1e-4) << p.name;
}

TEST(EstimateBits, Examples) {
  EXPECT_DOUBLE_EQ(estimate_bits<double>({TD::full({100}, 0.5)}), 100.0);
  EXPECT_DOUBLE_EQ(estimate_bits<double>({TD::full({7}, 1.0)}), 0.0);
  EXPECT_DOUBLE_EQ(estimate_bits<double>({TD::full({3}, 0.5), TD::full({2}, 0.25)}), 7.0);
  EXPECT_THROW(estimate_bits<double>({TD::zeros({1})}), ContractError);
}

// --- range coder -------------------------------------------------------------------------

TEST(QuantizePmf, MassesAreValid) {
  std::mt19937_64 rng(8);
  for (std::size_t n : {1u, 2u, 5u, 300u, 4000u}) {
    auto t = random_table(rng, n);
    ASSERT_EQ(t.size(), n);
    EXPECT_EQ(t.cdf.front(), 0u);
    EXPECT_EQ(t.cdf.back(), kFreqTotal);
    for (std::size_t s = 0; s < n; ++s) EXPECT_GE(t.freq(s), 1u);
  }
  std::vector<double> zeros(4, 0.0);
  EXPECT_EQ(quantize_pmf(zeros).cdf.back(), kFreqTotal);
}

TEST(RangeCoder, EmptySequenceIsShortFlush) {
  RangeEncoder enc;
  auto bytes = enc.finish();
  EXPECT_LE(bytes.size(), 8u);
  RangeDecoder dec(bytes);  // must initialize without running out
}

TEST(RangeCoder, UniformByteSymbolsCostOneBytePerSymbol) {
  std::vector<double> p(256, 1.0 / 256);
  auto table = quantize_pmf(p);
  std::mt19937_64 rng(9);
  const std::size_t n = 100000;
  std::vector<std::uint32_t> symbols(n);
  for (auto& s : symbols) s = static_cast<std::uint32_t>(rng() % 256);
  std::vector<const FrequencyTable*> tables(n, &table);
  auto bytes = range_encode(symbols, tables);
  EXPECT_GE(bytes.size(), static_cast<std::size_t>(0.999 * n));
  EXPECT_LE(bytes.size(), static_cast<std::size_t>(1.001 * n) + 8);
  EXPECT_EQ(range_decode(bytes, tables, n), symbols);
}

TEST(RangeCoder, RandomTablesRoundTrip) {
  std::mt19937_64 rng(10);
  std::vector<FrequencyTable> pool;
  for (int i = 0; i < 100; ++i) pool.push_back(random_table(rng, 2 + rng() % 300));
  const std::size_t n = 100000;
  std::vector<std::uint32_t> symbols(n);
  std::vector<const FrequencyTable*> tables(n);
  for (std::size_t i = 0; i < n; ++i) {
    tables[i] = &pool[rng() % pool.size()];
    // sample from the table itself so skewed symbols dominate
    const auto v = static_cast<std::uint32_t>(rng() % kFreqTotal);
    symbols[i] = static_cast<std::uint32_t>(std::upper_bound(tables[i]->cdf.begin() + 1, tables[i]->cdf.end(), v) -
                                            tables[i]->cdf.begin() - 1);
  }
  auto bytes = range_encode(symbols, tables);
  EXPECT_EQ(range_decode(bytes, tables, n), symbols);
}

TEST(RangeCoder, SingleSymbolAlphabetIsFree) {
  std::vector<double> one{1.0};
  auto t = quantize_pmf(one);
  std::vector<std::uint32_t> s(5000, 0);
  std::vector<const FrequencyTable*> tables(s.size(), &t);
  auto bytes = range_encode(s, tables);
  auto empty = RangeEncoder().finish();
  EXPECT_EQ(bytes.size(), empty.size());
  EXPECT_EQ(range_decode(bytes, tables, s.size()), s);
}

TEST(RangeCoder, TruncatedStreamThrows) {
  std::vector<double> p(256, 1.0 / 256);
  auto table = quantize_pmf(p);
  std::vector<std::uint32_t> s(1000, 77);
  std::vector<const FrequencyTable*> tables(s.size(), &table);
  auto bytes = range_encode(s, tables);
  bytes.resize(bytes.size() / 2);
  EXPECT_THROW(range_decode(bytes, tables, s.size()), CoderError);
}

TEST(RangeCoder, SymbolOutsideTableThrows) {
  std::vector<double> p{0.5, 0.5};
  auto t = quantize_pmf(p);
  RangeEncoder enc;
  EXPECT_THROW(enc.encode(t, 2), CoderError);
}

TEST(RangeCoder, RawBitsRoundTrip) {
  std::mt19937_64 rng(11);
  RangeEncoder enc;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> items;
  for (int i = 0; i < 2000; ++i) {
    const std::uint32_t bits = 1 + rng() % 16;
    items.emplace_back(static_cast<std::uint32_t>(rng() & ((1u << bits) - 1)), bits);
    enc.encode_bits(items.back().first, bits);
  }
  auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto [v, b] : items) EXPECT_EQ(dec.decode_bits(b), v);
}

// --- coding tables -------------------------------------------------------------------------

TEST(CodingTables, GaussianSupportAndEscape) {
  for (double sigma : {0.01, 0.3, 1.0, 7.5, 80.0, 1e4}) {
    auto t = gaussian_table(sigma);
    EXPECT_EQ(t.min_symbol, -t.max_symbol());
    EXPECT_GE(t.max_symbol(), 1);
    EXPECT_LE(t.max_symbol(), kMaxHalfWidth);
    EXPECT_EQ(t.freq.cdf.back(), kFreqTotal);
    EXPECT_EQ(gaussian_table(sigma), t);  // deterministic construction
  }
  EXPECT_THROW(gaussian_table(0.0), CoderError);
}

TEST(CodingTables, ValuesRoundTripIncludingEscapes) {
  auto t = gaussian_table(2.0);
  std::vector<std::int64_t> values{0, 1, -1, 9, -9, 10, -10, 11, 1000, -123456, 1LL << 40};
  RangeEncoder enc;
  for (auto v : values) encode_value(enc, t, v);
  auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto v : values) EXPECT_EQ(decode_value(dec, t), v);
}

TEST(CodingTables, FactorizedTableCoversMass) {
  nn::ParamInit init(12);
  FactorizedPrior<float> prior(3, init);
  for (std::size_t c = 0; c < 3; ++c) {
    auto t = factorized_table(prior, c);
    EXPECT_LE(t.min_symbol, 0);
    EXPECT_GE(t.max_symbol(), 0);
    EXPECT_EQ(factorized_table(prior, c), t);
  }
}

// --- container -----------------------------------------------------------------------------

TEST(Container, RoundTripAndLayout) {
  Container c;
  c.height = 250;
  c.width = 250;
  c.model_hash = 0x0123456789abcdefULL;
  c.z_payload = {1, 2, 3};
  c.y_payload = {4, 5, 6, 7, 8};
  auto bytes = write_container(c);
  EXPECT_EQ(bytes.size(), kContainerOverhead + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ROIC");
  EXPECT_EQ(bytes[5], 250);  // little-endian height
  auto back = read_container(bytes);
  EXPECT_EQ(back.height, 250u);
  EXPECT_EQ(back.width, 250u);
  EXPECT_EQ(back.model_hash, c.model_hash);
  EXPECT_EQ(back.z_payload, c.z_payload);
  EXPECT_EQ(back.y_payload, c.y_payload);
}

TEST(Container, DetectsCorruptionAndOverruns) {
  Container c;
  c.height = c.width = 64;
  c.z_payload = {9, 9};
  c.y_payload = {1, 2, 3};
  const auto bytes = write_container(c);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= 0x01;
    EXPECT_THROW(read_container(bad), FormatError) << "byte " << i;
  }
  auto short_stream = bytes;
  short_stream.pop_back();
  EXPECT_THROW(read_container(short_stream), FormatError);
  auto overrun = bytes;
  overrun[21] = 200;  // z length beyond the data
  EXPECT_THROW(read_container(overrun), FormatError);
}
