#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "gradcheck.hpp"
#include "roicodec/entropy/bitstream.hpp"
#include "roicodec/model/checkpoint.hpp"
#include "roicodec/model/model.hpp"

using namespace roicodec;
using namespace roicodec::model;
using roicodec::testing::random_tensor;

namespace {

template <typename T>
Tensor<T> random_image(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<T> v(n * 3 * h * w);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>::from_data({n, 3, h, w}, std::move(v));
}

template <typename T>
Tensor<T> box_mask(std::size_t n, std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t size) {
  std::vector<T> v(n * h * w, T(0));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = y0; i < std::min(h, y0 + size); ++i)
      for (std::size_t j = x0; j < std::min(w, x0 + size); ++j) v[(b * h + i) * w + j] = T(1);
  return Tensor<T>::from_data({n, 1, h, w}, std::move(v));
}

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(float)) != 0) return false;
  return true;
}

}  // namespace

// --- lambda map --------------------------------------------------------------------

TEST(LambdaMap, Examples) {
  auto m = Tensor<double>::from_data({1, 1, 1, 3}, {0.0, 1.0, 1.0});
  auto l0 = lambda_map(m, 0.001, 3.0);
  EXPECT_NEAR(l0.data()[0], 65.025, 1e-12);
  EXPECT_NEAR(l0.data()[1], 1306.0, 0.1);
  auto l1 = lambda_map(m, 0.001, 6.5);
  EXPECT_NEAR(l1.data()[1] / 4.325e4, 1.0, 1e-3);
}

TEST(LambdaMap, MonotoneInMaskAndOmega) {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  auto m = Tensor<double>::from_data({1, 1, 1, grid.size()}, grid);
  double prev_omega_row = -1;
  for (double omega : {0.0, 1.0, 3.0, 5.0, 6.5}) {
    auto l = lambda_map(m, 0.001, omega);
    for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_GE(l.data()[i], l.data()[i - 1]);
    // for m > 0 a larger omega gives a larger weight
    if (prev_omega_row >= 0) {
      EXPECT_GT(l.data()[10], prev_omega_row);
    }
    prev_omega_row = l.data()[10];
    for (double v : l.data()) {
      EXPECT_GE(v, 0.001 * 65025.0 * (1 - 1e-15));
      EXPECT_LE(v, 0.001 * std::exp(omega) * 65025.0 * (1 + 1e-15));
    }
  }
}

TEST(LambdaMap, RejectsBadInputs) {
  EXPECT_THROW(lambda_map(Tensor<double>::full({1, 1, 2, 2}, 1.5), 0.001, 3.0), ValidationError);
  EXPECT_THROW(lambda_map(Tensor<double>::full({1, 1, 2, 2}, -0.1), 0.001, 3.0), ValidationError);
  EXPECT_THROW(lambda_map(Tensor<double>::full({1, 1, 2, 2}, 0.5), 0.0, 3.0), ValidationError);
}

// --- config --------------------------------------------------------------------------

TEST(ModelConfig, CanonicalTextRoundTrip) {
  for (auto name : {"default", "full", "toy", "micro"}) {
    auto c = ModelConfig::preset(name);
    c.context_mode = ContextMode::Checkerboard;
    c.seed = 77;
    auto back = ModelConfig::parse(c.canonical_text());
    EXPECT_EQ(back.canonical_text(), c.canonical_text());
  }
}

TEST(ModelConfig, Validation) {
  auto c = ModelConfig::preset("toy");
  c.heads = {5, 2, 3};
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(ModelConfig::parse("bogus = 1\n"), ValidationError);
  EXPECT_THROW(ModelConfig::parse("channels = 1,x,3\n"), ValidationError);
  EXPECT_THROW(ModelConfig::preset("huge"), ValidationError);
  EXPECT_THROW(context_mode_from_string("autoregressive"), ValidationError);
}

TEST(ModelConfig, DefaultsMatchDocumentedLayout) {
  ModelConfig c;
  EXPECT_EQ(c.channels, (std::vector<std::size_t>{96, 128, 160}));
  EXPECT_EQ(c.blocks, (std::vector<std::size_t>{1, 1, 1}));
  EXPECT_EQ(c.latent_channels, 192u);
  EXPECT_EQ(c.hyper_channels, 128u);
  EXPECT_EQ(c.main_window, 8u);
  EXPECT_EQ(c.hyper_window, 4u);
  EXPECT_EQ(c.context_mode, ContextMode::None);
}

// --- parameter counts ------------------------------------------------------------------

TEST(CountParams, SingleConv) {
  nn::ParamInit init(0);
  nn::Conv2d<float> conv(3, 16, 5, 2, init);
  nn::ParameterList<float> p;
  conv.collect(p, "c");
  std::size_t n = 0;
  for (auto& x : p) n += x.tensor.numel();
  EXPECT_EQ(n, 1216u);
}

TEST(CountParams, ZeroBlockConfigMatchesFormula) {
  auto c = ModelConfig::preset("micro");
  c.blocks = {0, 0, 0};
  c.hyper_blocks = 0;
  CodecModel<float> m(c);
  const std::size_t Cc = c.condition_channels, Cy = c.latent_channels, Cz = c.hyper_channels, Ch = c.hyper_hidden;
  const auto& ch = c.channels;
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; };
  auto sft = [&](std::size_t C) { return 2 * conv(Cc, C, 3); };
  auto gdn = [](std::size_t C) { return C * C + C; };
  std::size_t n = 0;
  n += conv(4, Cc, 3) + conv(Cc, Cc, 3);                        // fusion
  n += conv(3, ch[0], 5) + sft(ch[0]);                           // stem
  const std::size_t next[3] = {ch[1], ch[2], Cy};
  for (int s = 0; s < 3; ++s) n += 4 * ch[s] * next[s] + gdn(next[s]) + sft(next[s]);
  n += 4 * Cy * Cz + 4 * Cz * Cz + sft(Cz);                      // hyper encoder
  n += conv(Cz, Cc, 3) + 5 * conv(Cc, Cc, 3);                    // decoder conditions
  n += sft(Cz) + Cz * 4 * Ch + Ch * 4 * Ch + 2 * (Ch * Cy + Cy); // hyper decoder
  for (int s = 2; s >= 0; --s) n += sft(next[s]) + gdn(next[s]) + next[s] * 4 * ch[s];
  n += sft(ch[0]) + ch[0] * 3 * 25 + 3;                          // final
  // factorized prior: filters 1-3-3-3-1
  n += Cz * ((3 + 3 + 3) + (9 + 3 + 3) + (9 + 3 + 3) + (3 + 1));
  EXPECT_EQ(m.count_params(), n);
}

TEST(CountParams, PresetEnvelopes) {
  CodecModel<float> full(ModelConfig::preset("full"));
  EXPECT_GE(full.count_params(), 12'600'000u);
  EXPECT_LE(full.count_params(), 19'000'000u);
  CodecModel<float> toy(ModelConfig::preset("toy"));
  EXPECT_LT(toy.count_params(), 500'000u);
}

// --- geometry and shapes -------------------------------------------------------------

TEST(CodecModel, LatentShapes256) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  NoGradGuard g;
  auto out = m.encode_latents(random_image<float>(1, 256, 256, 1), box_mask<float>(1, 256, 256, 10, 10, 50));
  EXPECT_EQ(out.latents.y.shape(), (Shape{1, 8, 16, 16}));
  EXPECT_EQ(out.latents.z.shape(), (Shape{1, 4, 4, 4}));
  const std::size_t expect[] = {128, 64, 32, 16, 4};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(out.conditions.levels[i].dim(2), expect[i]);
  auto x = m.decode_latents(out.latents.y, out.latents.z, out.latents.geometry);
  EXPECT_EQ(x.shape(), (Shape{1, 3, 256, 256}));
}

TEST(CodecModel, PadsAndRecordsGeometry) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  NoGradGuard g;
  auto out = m.encode_latents(random_image<float>(1, 250, 250, 2), box_mask<float>(1, 250, 250, 0, 0, 30));
  EXPECT_EQ(out.latents.geometry, (Geometry{250, 250, 256, 256}));
  EXPECT_EQ(out.latents.y.dim(2), 16u);
  auto x = m.decode_latents(out.latents.y, out.latents.z, out.latents.geometry);
  EXPECT_EQ(x.shape(), (Shape{1, 3, 250, 250}));
  for (float v : x.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(CodecModel, DownsampleBookkeeping) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  NoGradGuard g;
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{64, 64}, {64, 192}, {130, 70}}) {
    auto out = m.encode_latents(random_image<float>(1, h, w, 3), box_mask<float>(1, h, w, 0, 0, 8));
    const auto& geo = out.latents.geometry;
    EXPECT_EQ(out.latents.y.dim(2) * 16, geo.padded_height);
    EXPECT_EQ(out.latents.y.dim(3) * 16, geo.padded_width);
    EXPECT_EQ(out.latents.z.dim(2) * 64, geo.padded_height);
    EXPECT_EQ(out.latents.z.dim(3) * 64, geo.padded_width);
  }
}

TEST(CodecModel, RejectsBadInputs) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  NoGradGuard g;
  EXPECT_THROW(m.encode_latents(Tensor<float>::zeros({1, 1, 64, 64}), Tensor<float>::zeros({1, 1, 64, 64})),
               DimensionError);
  EXPECT_THROW(m.encode_latents(Tensor<float>::zeros({1, 3, 0, 64}), Tensor<float>::zeros({1, 1, 0, 64})),
               DimensionError);
  EXPECT_THROW(m.encode_latents(Tensor<float>::zeros({1, 3, 64, 64}), Tensor<float>::full({1, 1, 64, 64}, 2.0f)),
               ValidationError);
  auto out = m.encode_latents(random_image<float>(1, 64, 64, 4), box_mask<float>(1, 64, 64, 0, 0, 8));
  EXPECT_THROW(m.decode_latents(out.latents.y, out.latents.z, Geometry::for_image(128, 64)), DimensionError);
}

TEST(CodecModel, SameSeedIsBitwiseDeterministic) {
  auto c = ModelConfig::preset("micro");
  c.seed = 5;
  CodecModel<float> a(c), b(c);
  NoGradGuard g;
  auto img = random_image<float>(1, 64, 64, 6);
  auto mask = box_mask<float>(1, 64, 64, 8, 8, 20);
  auto la = a.encode_latents(img, mask).latents;
  auto lb = b.encode_latents(img, mask).latents;
  EXPECT_TRUE(bitwise_equal(la.y, lb.y));
  EXPECT_TRUE(bitwise_equal(la.z, lb.z));
  EXPECT_EQ(model_hash(a), model_hash(b));
}

TEST(CodecModel, MaskAffectsLatentsButNotDecoder) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  NoGradGuard g;
  auto img = random_image<float>(1, 64, 64, 7);
  auto m1 = box_mask<float>(1, 64, 64, 0, 0, 16);
  auto m2 = box_mask<float>(1, 64, 64, 30, 30, 30);
  auto l1 = m.encode_latents(img, m1).latents;
  auto l2 = m.encode_latents(img, m2).latents;
  EXPECT_FALSE(bitwise_equal(l1.y, l2.y));
  auto x1 = m.decode_latents(l1.y, l1.z, l1.geometry);
  m.encode_latents(img, m2);  // any hidden state would leak here
  auto x1b = m.decode_latents(l1.y, l1.z, l1.geometry);
  EXPECT_TRUE(bitwise_equal(x1, x1b));
}

TEST(CodecModel, SigmaFloorAndShapes) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  NoGradGuard g;
  auto out = m.encode_latents(random_image<float>(1, 128, 64, 8), box_mask<float>(1, 128, 64, 0, 0, 8));
  auto p = m.hyper_analysis_params(out.latents.z);
  EXPECT_EQ(p.mu.shape(), out.latents.y.shape());
  EXPECT_EQ(p.sigma.shape(), out.latents.y.shape());
  for (float s : p.sigma.data()) EXPECT_GE(s, static_cast<float>(kSigmaMin));
  // raw 0 maps to sigma_min + ln 2
  auto s0 = add_scalar(softplus(Tensor<double>::zeros({1})), kSigmaMin);
  EXPECT_NEAR(s0.item(), 0.01 + std::log(2.0), 1e-12);
}

TEST(CodecModel, CheckerboardParity) {
  auto c = ModelConfig::preset("micro");
  c.context_mode = ContextMode::Checkerboard;
  CodecModel<double> m(c);
  NoGradGuard g;
  auto out = m.encode_latents(random_image<double>(1, 128, 128, 9), box_mask<double>(1, 128, 128, 0, 0, 40));
  auto hyper = m.hyper_analysis_params(out.latents.z);
  const auto& y = out.latents.y;
  const std::size_t C = y.dim(1), H = y.dim(2), W = y.dim(3);
  auto base = m.entropy_params(hyper, y);

  auto perturbed = [&](bool anchors) {
    auto t = y.clone();
    auto d = t.mutable_data();
    for (std::size_t ch = 0; ch < C; ++ch)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
          if (((i + j) % 2 == 0) == anchors) d[(ch * H + i) * W + j] += 3.0;
    return m.entropy_params(hyper, t);
  };
  auto changed_non_anchor = perturbed(false);
  auto changed_anchor = perturbed(true);
  bool anchor_moved = false;
  for (std::size_t ch = 0; ch < C; ++ch)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t k = (ch * H + i) * W + j;
        // nothing depends on the non-anchor half
        EXPECT_EQ(changed_non_anchor.mu.data()[k], base.mu.data()[k]);
        EXPECT_EQ(changed_non_anchor.sigma.data()[k], base.sigma.data()[k]);
        if ((i + j) % 2 == 0) {
          // anchors keep the hyper parameters
          EXPECT_EQ(base.mu.data()[k], hyper.mu.data()[k]);
          EXPECT_EQ(changed_anchor.mu.data()[k], hyper.mu.data()[k]);
        } else if (changed_anchor.mu.data()[k] != base.mu.data()[k]) {
          anchor_moved = true;
        }
      }
  EXPECT_TRUE(anchor_moved);
}

TEST(CodecModel, NoneModeEntropyParamsEqualHyper) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  NoGradGuard g;
  auto out = m.encode_latents(random_image<float>(1, 64, 64, 10), box_mask<float>(1, 64, 64, 0, 0, 8));
  auto hyper = m.hyper_analysis_params(out.latents.z);
  auto p = m.entropy_params(hyper, out.latents.y);
  EXPECT_TRUE(bitwise_equal(p.mu, hyper.mu));
  EXPECT_TRUE(bitwise_equal(p.sigma, hyper.sigma));
}

TEST(CodecModel, DecodeMatchesEncoderSideReconstruction) {
  for (auto mode : {ContextMode::None, ContextMode::Checkerboard}) {
    auto c = ModelConfig::preset("micro");
    c.context_mode = mode;
    CodecModel<float> m(c);
    auto img = random_image<float>(1, 70, 90, 11);
    auto enc = entropy::compress(m, img, box_mask<float>(1, 70, 90, 5, 5, 20));
    Tensor<float> in_process;
    {
      NoGradGuard g;
      in_process = m.decode_latents(enc.quantized.y, enc.quantized.z, enc.quantized.geometry);
    }
    EXPECT_TRUE(bitwise_equal(entropy::decompress(m, enc.bytes), in_process));
  }
}

// --- checkpoint -----------------------------------------------------------------------

TEST(Checkpoint, RoundTripPreservesWeightsAndHash) {
  auto c = ModelConfig::preset("micro");
  c.seed = 3;
  CodecModel<float> m(c);
  auto bytes = serialize_checkpoint(m);
  auto back = deserialize_checkpoint<float>(bytes);
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(back.parameters()[i].name, m.parameters()[i].name);
    EXPECT_TRUE(bitwise_equal(back.parameters()[i].tensor, m.parameters()[i].tensor));
  }
  EXPECT_EQ(model_hash(back), model_hash(m));
}

TEST(Checkpoint, DetectsCorruption) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  auto bytes = serialize_checkpoint(m);
  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x10;
  EXPECT_THROW(deserialize_checkpoint<float>(bad), FormatError);
  bad = bytes;
  bad.resize(bad.size() - 9);
  EXPECT_THROW(deserialize_checkpoint<float>(bad), FormatError);
  EXPECT_THROW(deserialize_checkpoint<float>(util::Bytes{1, 2, 3}), FormatError);
}

TEST(Checkpoint, HashTracksWeights) {
  CodecModel<float> m(ModelConfig::preset("micro"));
  const auto h = model_hash(m);
  m.parameters()[0].tensor.mutable_data()[0] += 1e-3f;
  EXPECT_NE(model_hash(m), h);
  auto c = ModelConfig::preset("micro");
  c.seed = 1;
  CodecModel<float> other(c);
  EXPECT_NE(model_hash(other), h);
}
