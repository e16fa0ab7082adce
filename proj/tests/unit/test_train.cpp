#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gradcheck.hpp"
#include "roicodec/entropy/likelihood.hpp"
#include "roicodec/model/checkpoint.hpp"
#include "roicodec/train/synthetic.hpp"
#include "roicodec/train/trainer.hpp"
#include "temp_dir.hpp"

using namespace roicodec;
using namespace roicodec::train;
using roicodec::testing::check_gradient;
using roicodec::testing::random_tensor;
using roicodec::testing::TempDir;

namespace {

using TD = Tensor<double>;

template <typename T>
Batch<T> fixed_batch(std::uint64_t seed, std::size_t n = 2, std::size_t size = 64) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<T> img(n * 3 * size * size), msk(n * size * size, T(0));
  for (auto& v : img) v = static_cast<T>(u(rng));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 8; y < 40; ++y)
      for (std::size_t x = 16; x < 48; ++x) msk[(b * size + y) * size + x] = T(1);
  Batch<T> batch;
  batch.images = Tensor<T>::from_data({n, 3, size, size}, img);
  batch.masks = Tensor<T>::from_data({n, 1, size, size}, msk);
  for (std::size_t b = 0; b < n; ++b) batch.ids.push_back("img" + std::to_string(b));
  return batch;
}

TrainConfig micro_config() {
  TrainConfig c;
  c.model = "micro";
  c.omega = 3.0;
  c.seed = 4;
  return c;
}

template <typename T>
bool same_parameters(const model::CodecModel<T>& a, const model::CodecModel<T>& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto x = a.parameters()[i].tensor.data(), y = b.parameters()[i].tensor.data();
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(T)) != 0) return false;
  }
  return true;
}

}  // namespace

// --- config -----------------------------------------------------------------------------

TEST(TrainConfigParse, EmptyFileGivesDefaults) {
  auto c = parse_train_config("");
  EXPECT_DOUBLE_EQ(c.alpha, 0.001);
  EXPECT_DOUBLE_EQ(c.lr, 1e-4);
  EXPECT_EQ(c.crop, 64u);
  EXPECT_EQ(c.batch_size, 2u);
  EXPECT_DOUBLE_EQ(c.clip_norm, 1.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfigParse, RangeErrorNamesKeyAndLine) {
  try {
    parse_train_config("# comment\nomega = 3\nalpha = -1\n", "run.cfg");
    FAIL() << "expected a ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("run.cfg:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("alpha"), std::string::npos) << msg;
  }
}

TEST(TrainConfigParse, AcceptsLargestOmega) {
  auto c = parse_train_config("omega = 6.5\n");
  EXPECT_DOUBLE_EQ(c.omega, 6.5);
}

TEST(TrainConfigParse, RejectsBadInput) {
  auto expect_line = [](const std::string& text, const std::string& where) {
    try {
      parse_train_config(text, "f");
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  };
  expect_line("alpha = 0.001\nfoo = 1\n", "f:2: unknown key 'foo'");
  expect_line("crop = abc\n", "f:1: key 'crop'");
  expect_line("crop = 100\n", "f:1: key 'crop'");
  expect_line("lr = 0\n", "f:1: key 'lr'");
  expect_line("seed = 1\nseed = 2\n", "f:2: duplicate");
  expect_line("just words\n", "f:1:");
  expect_line("precision = f16\n", "precision");
  expect_line("context = causal\n", "f:1: key 'context'");
  expect_line("uniform_lambda = maybe\n", "uniform_lambda");
}

TEST(TrainConfigParse, ParsesEveryKey) {
  auto c = parse_train_config(
      "alpha = 0.002\nomega=5\nlr = 3e-4\nbatch_size = 4\nsteps = 10\nepochs = 0\ncrop = 128\nseed = 9\n"
      "precision = f64\nmodel = micro\ncontext = checkerboard\nclip_norm = 0\nuniform_lambda = true\n"
      "image_dir = a\nmask_dir = b\nout = c.ckpt\nmetrics = m.csv\ninit = i.ckpt\nlog_every = 5\n");
  EXPECT_DOUBLE_EQ(c.alpha, 0.002);
  EXPECT_DOUBLE_EQ(c.omega, 5);
  EXPECT_EQ(c.batch_size, 4u);
  EXPECT_EQ(c.crop, 128u);
  EXPECT_EQ(c.precision, "f64");
  EXPECT_EQ(c.context, model::ContextMode::Checkerboard);
  EXPECT_TRUE(c.uniform_lambda);
  EXPECT_EQ(c.init, "i.ckpt");
  EXPECT_EQ(c.model_config().seed, 9u);
}

// --- rd_loss -------------------------------------------------------------------------------

TEST(RdLoss, WorkedExample) {
  // per-pixel MSE 0.001 with uniform lambda 65.025 and 0.5 bpp
  const std::size_t H = 4, W = 4;
  auto x = TD::zeros({1, 3, H, W});
  auto x_rec = TD::full({1, 3, H, W}, std::sqrt(0.001));
  auto lmap = model::lambda_map(TD::zeros({1, 1, H, W}), 0.001, 3.0);
  auto r = rd_loss(x, x_rec, lmap, TD::scalar(0.5 * H * W), H * W);
  EXPECT_NEAR(r.loss.item(), 0.565025, 1e-12);
  EXPECT_NEAR(r.weighted_distortion.item(), 0.065025, 1e-12);
  EXPECT_NEAR(r.bpp.item(), 0.5, 1e-15);
}

TEST(RdLoss, PerfectReconstructionAtZeroRate) {
  auto x = TD::full({1, 3, 2, 2}, 0.3);
  auto r = rd_loss(x, x.clone(), TD::full({1, 1, 2, 2}, 65.025), TD::scalar(0.0), 4);
  EXPECT_EQ(r.loss.item(), 0.0);
}

TEST(RdLoss, LargerOmegaRaisesRoiDistortion) {
  auto x = TD::zeros({1, 3, 2, 2});
  auto x_rec = TD::from_data({1, 3, 2, 2}, {0.1, 0, 0, 0, 0.1, 0, 0, 0, 0.1, 0, 0, 0});
  auto mask = TD::from_data({1, 1, 2, 2}, {1, 0, 0, 0});
  double prev = -1;
  for (double omega : {0.0, 1.0, 2.0, 4.0, 8.0}) {
    const double d = rd_loss(x, x_rec, model::lambda_map(mask, 0.001, omega), TD::scalar(0.0), 4)
                         .weighted_distortion.item();
    EXPECT_GT(d, prev);
    prev = d;
  }
}

TEST(RdLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 3, 4, 4}, rng, 0, 1, false);
  auto x_rec = random_tensor({2, 3, 4, 4}, rng, 0, 1);
  auto bits = random_tensor({1}, rng, 10, 20);
  auto mask = random_tensor({2, 1, 4, 4}, rng, 0, 1, false);
  auto lmap = model::lambda_map(mask, 0.001, 5.0);
  auto f = [&] { return rd_loss(x, x_rec, lmap, bits, 32).loss; };
  EXPECT_LT(check_gradient(f, x_rec).rel_error, 1e-4);
  EXPECT_LT(check_gradient(f, bits).rel_error, 1e-4);
}

TEST(RdLoss, InvariantToBatchPermutation) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 3, 4, 4}, rng, 0, 1, false);
  auto x_rec = random_tensor({2, 3, 4, 4}, rng, 0, 1, false);
  auto mask = random_tensor({2, 1, 4, 4}, rng, 0, 1, false);
  auto swap = [](const TD& t) { return concat<double>({slice(t, 0, 1, 1), slice(t, 0, 0, 1)}, 0); };
  const double a = rd_loss(x, x_rec, model::lambda_map(mask, 0.001, 3.0), TD::scalar(7.0), 32).loss.item();
  const double b =
      rd_loss(swap(x), swap(x_rec), model::lambda_map(swap(mask), 0.001, 3.0), TD::scalar(7.0), 32).loss.item();
  EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
}

TEST(RdLoss, RejectsMismatches) {
  auto x = TD::zeros({1, 3, 2, 2});
  EXPECT_THROW(rd_loss(x, TD::zeros({1, 3, 2, 3}), TD::zeros({1, 1, 2, 2}), TD::scalar(0.0), 4), DimensionError);
  EXPECT_THROW(rd_loss(x, x, TD::zeros({1, 1, 2, 3}), TD::scalar(0.0), 4), DimensionError);
  EXPECT_THROW(rd_loss(x, x, TD::zeros({1, 1, 2, 2}), TD::scalar(-1.0), 4), ContractError);
}

// --- Adam ---------------------------------------------------------------------------------

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::ParameterList<double> params{{"w", TD::full({5}, 0.5, true)}};
  for (auto& g : params[0].tensor.mutable_grad()) g = 1.0;
  AdamState st;
  adam_step(params, st, 1e-4);
  for (double v : params[0].tensor.data()) EXPECT_NEAR(v - 0.5, -1e-4, 1e-12);
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(st.m[0].size(), 5u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  nn::ParameterList<double> params{{"w", TD::full({3}, 0.25, true)}};
  params[0].tensor.mutable_grad();
  AdamState st;
  adam_step(params, st, 1e-2);
  for (double v : params[0].tensor.data()) EXPECT_EQ(v, 0.25);
}

TEST(Adam, MatchesReferenceOverSeveralSteps) {
  nn::ParameterList<double> params{{"w", TD::full({1}, 1.0, true)}};
  AdamState st;
  double p = 1.0, m = 0, v = 0;
  const double grads[] = {0.3, -1.2, 0.7, 2.0};
  for (int t = 1; t <= 4; ++t) {
    params[0].tensor.zero_grad();
    params[0].tensor.mutable_grad()[0] = grads[t - 1];
    adam_step(params, st, 1e-3);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    p -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(params[0].tensor.data()[0], p, 1e-15);
  }
}

TEST(Adam, MissingGradientIsContractError) {
  nn::ParameterList<double> params{{"w", TD::full({3}, 0.25, true)}};
  AdamState st;
  EXPECT_THROW(adam_step(params, st, 1e-3), ContractError);
}

TEST(ClipGradNorm, RescalesToBound) {
  nn::ParameterList<double> params{{"a", TD::zeros({2}, true)}, {"b", TD::zeros({1}, true)}};
  params[0].tensor.mutable_grad()[0] = 3;
  params[0].tensor.mutable_grad()[1] = 0;
  params[1].tensor.mutable_grad()[0] = 4;
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(global_grad_norm(params), 1.0, 1e-15);
  EXPECT_NEAR(params[1].tensor.grad()[0], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 10.0), global_grad_norm(params));
}

// --- train_step -------------------------------------------------------------------------------

TEST(TrainStep, MetricsFollowDefinitions) {
  auto cfg = micro_config();
  model::CodecModel<double> m(cfg.model_config());
  auto batch = fixed_batch<double>(1);
  std::mt19937_64 rng(5);
  auto fwd = forward_loss(m, batch, cfg, rng);
  EXPECT_NEAR(fwd.terms.bpp.item(), fwd.bpp_estimate, 1e-9 * fwd.bpp_estimate);
  EXPECT_NEAR(fwd.terms.loss.item(), fwd.terms.weighted_distortion.item() + fwd.terms.bpp.item(), 1e-12);

  // train_step reports the same numbers for the same noise draws
  TrainState st(cfg.seed);
  st.noise_rng.seed(5);
  auto metrics = train_step(batch, m, cfg, st);
  EXPECT_DOUBLE_EQ(metrics.loss, fwd.terms.loss.item());
  EXPECT_DOUBLE_EQ(metrics.bpp_estimate, fwd.bpp_estimate);
  EXPECT_GT(metrics.grad_norm, 0.0);
  EXPECT_EQ(st.step, 1u);
}

TEST(TrainStep, ReducesLossOnFixedBatch) {
  auto cfg = micro_config();
  cfg.lr = 1e-3;
  model::CodecModel<float> m(cfg.model_config());
  auto batch = fixed_batch<float>(2);
  auto eval = [&] {
    std::mt19937_64 rng(99);
    NoGradGuard g;
    return static_cast<double>(forward_loss(m, batch, cfg, rng).terms.loss.item());
  };
  const double before = eval();
  TrainState st(cfg.seed);
  for (int i = 0; i < 50; ++i) train_step(batch, m, cfg, st);
  EXPECT_LT(eval(), before);
}

TEST(TrainStep, OmegaZeroMatchesUniformLambdaBitwise) {
  auto cfg = micro_config();
  cfg.omega = 0.0;
  auto uniform = cfg;
  uniform.uniform_lambda = true;
  model::CodecModel<float> a(cfg.model_config()), b(uniform.model_config());
  TrainState sa(cfg.seed), sb(uniform.seed);
  for (std::uint64_t i = 0; i < 5; ++i) {
    auto batch = fixed_batch<float>(10 + i);
    auto ma = train_step(batch, a, cfg, sa);
    auto mb = train_step(batch, b, uniform, sb);
    EXPECT_EQ(ma.loss, mb.loss);
  }
  EXPECT_TRUE(same_parameters(a, b));
}

TEST(TrainStep, ClippingBoundsTheUpdateNorm) {
  auto cfg = micro_config();
  cfg.clip_norm = 1e-3;
  model::CodecModel<double> m(cfg.model_config());
  TrainState st(cfg.seed);
  auto metrics = train_step(fixed_batch<double>(3), m, cfg, st);
  EXPECT_GT(metrics.grad_norm, 1e-3);
  EXPECT_NEAR(global_grad_norm(m.parameters()), 1e-3, 1e-9);
}

TEST(TrainStep, NonFiniteLossAbortsWithDiagnostics) {
  auto cfg = micro_config();
  model::CodecModel<float> m(cfg.model_config());
  for (auto& p : m.parameters())
    if (p.name == "dec.final.bias") p.tensor.mutable_data()[0] = NAN;
  TrainState st(cfg.seed);
  try {
    train_step(fixed_batch<float>(4), m, cfg, st);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("x_rec"), std::string::npos) << msg;
    EXPECT_NE(msg.find("dec.final.bias"), std::string::npos) << msg;
    EXPECT_NE(msg.find("img0"), std::string::npos) << msg;
  }
}

TEST(TrainStep, SameSeedRunsAreBitwiseIdentical) {
  TempDir dir("train_det");
  generate_roi_corpus(dir.path(), 6, 64, 3);
  auto data = Dataset::load(dir / "images", dir / "masks", 64);
  auto cfg = micro_config();
  cfg.steps = 100;
  auto run = [&] {
    model::CodecModel<float> m(cfg.model_config());
    BatchStream stream(data, 2, 64, cfg.seed);
    TrainState st(cfg.seed);
    run_training(m, stream, cfg, st);
    return m;
  };
  auto a = run();
  auto b = run();
  EXPECT_TRUE(same_parameters(a, b));
  EXPECT_EQ(model::model_hash(a), model::model_hash(b));
}

TEST(RunTraining, WritesMetricsCsv) {
  TempDir dir("train_csv");
  generate_roi_corpus(dir.path(), 4, 64, 5);
  auto data = Dataset::load(dir / "images", dir / "masks", 64);
  auto cfg = micro_config();
  cfg.steps = 3;
  model::CodecModel<float> m(cfg.model_config());
  BatchStream stream(data, 2, 64, 1);
  TrainState st(1);
  std::ostringstream csv;
  auto h = run_training(m, stream, cfg, st, &csv);
  ASSERT_EQ(h.size(), 3u);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kMetricsHeader);
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
    ++rows;
  }
  EXPECT_EQ(rows, 3);
}

// --- dataset -------------------------------------------------------------------------------

TEST(Dataset, BatchesPerEpochAndSeededCrops) {
  TempDir dir("dataset");
  generate_roi_corpus(dir.path(), 100, 64, 6);
  auto data = Dataset::load(dir / "images", dir / "masks", 64);
  ASSERT_EQ(data.size(), 100u);
  BatchStream a(data, 2, 64, 11), b(data, 2, 64, 11), c(data, 2, 64, 12);
  EXPECT_EQ(a.batches_per_epoch(), 50u);
  std::size_t differs = 0;
  for (int i = 0; i < 120; ++i) {
    auto ca = a.next_crops(), cb = b.next_crops(), cc = c.next_crops();
    for (std::size_t k = 0; k < ca.size(); ++k) {
      EXPECT_EQ(ca[k].sample, cb[k].sample);
      EXPECT_EQ(ca[k].y, cb[k].y);
      EXPECT_EQ(ca[k].x, cb[k].x);
      differs += ca[k].sample != cc[k].sample;
    }
  }
  EXPECT_EQ(a.epoch(), 2u);
  EXPECT_GT(differs, 0u);
}

TEST(Dataset, EpochVisitsEverySampleOnce) {
  TempDir dir("dataset_epoch");
  generate_roi_corpus(dir.path(), 10, 64, 7);
  auto data = Dataset::load(dir / "images", dir / "masks", 64);
  BatchStream s(data, 2, 64, 3);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 5; ++i)
    for (auto c : s.next_crops()) ++seen[c.sample];
  for (int v : seen) EXPECT_EQ(v, 1);
}

TEST(Dataset, MaskScalingPairingAndSkips) {
  TempDir dir("dataset_pairs");
  std::filesystem::create_directories(dir / "img");
  std::filesystem::create_directories(dir / "msk");
  io::Image img{80, 70, 3, std::vector<std::uint8_t>(80 * 70 * 3, 10)};
  io::Image mask{80, 70, 1, std::vector<std::uint8_t>(80 * 70, 128)};
  mask.pixels[0] = 255;
  io::write_image(dir / "img" / "a.png", img);
  io::write_image(dir / "msk" / "a.pgm", mask);
  io::write_image(dir / "img" / "orphan.png", img);
  io::Image small{32, 32, 1, std::vector<std::uint8_t>(32 * 32, 0)};
  io::write_image(dir / "img" / "small.pgm", small);
  io::write_image(dir / "msk" / "small.png", small);
  std::vector<std::string> warnings;
  auto data = Dataset::load(dir / "img", dir / "msk", 64, [&](const std::string& w) { warnings.push_back(w); });
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data.samples()[0].id, "a");
  EXPECT_EQ(data.skipped().size(), 2u);
  EXPECT_EQ(warnings.size(), 2u);

  auto batch = BatchStream(data, 1, 64, 0).next<double>();
  for (double v : batch.masks.data()) EXPECT_TRUE(v == 1.0 || std::abs(v - 128.0 / 255.0) < 1e-15);
  EXPECT_NEAR(128.0 / 255.0, 0.502, 1e-3);
  EXPECT_NEAR(batch.images.data()[0], 10.0 / 255.0, 1e-15);
}

TEST(Dataset, UndecodableFileNamesPath) {
  TempDir dir("dataset_bad");
  std::filesystem::create_directories(dir / "img");
  std::filesystem::create_directories(dir / "msk");
  {
    std::ofstream(dir / "img" / "x.png") << "not really a png";
    std::ofstream(dir / "msk" / "x.png") << "nor this";
  }
  try {
    Dataset::load(dir / "img", dir / "msk", 64);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("x.png"), std::string::npos);
  }
}
