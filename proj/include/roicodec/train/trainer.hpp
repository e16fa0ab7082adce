#pragma once

#include <functional>
#include <ostream>
#include <random>
#include <vector>

#include "roicodec/model/model.hpp"
#include "roicodec/train/config.hpp"
#include "roicodec/train/dataset.hpp"
#include "roicodec/train/loss.hpp"
#include "roicodec/train/optimizer.hpp"

namespace roicodec::train {

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0, weighted_distortion = 0, bpp_estimate = 0;
  double grad_norm = 0;  // before clipping
};

// Optimizer moments plus the noise source for additive-uniform quantization.
struct TrainState {
  AdamState adam;
  std::mt19937_64 noise_rng;
  std::size_t step = 0;
  explicit TrainState(std::uint64_t seed) : noise_rng(seed ^ 0x9e3779b97f4a7c15ULL) {}
};

// Noise-quantized forward pass and rate-distortion terms, without updating
// anything. bpp_estimate is estimate_bits / n_pixels of the same likelihoods.
template <typename T>
struct ForwardResult {
  RdTerms<T> terms;
  double bpp_estimate = 0;
};

template <typename T>
ForwardResult<T> forward_loss(const model::CodecModel<T>& model, const Batch<T>& batch, const TrainConfig& cfg,
                              std::mt19937_64& noise_rng);

// Forward, backward, optional clipping and one Adam step. A non-finite loss or
// gradient throws TrainingError listing the offending tensors.
template <typename T>
StepMetrics train_step(const Batch<T>& batch, model::CodecModel<T>& model, const TrainConfig& cfg,
                       TrainState& state);

// Runs cfg.steps (or cfg.epochs full epochs) of training. Metrics rows go to
// `csv` when given; `progress` is called every cfg.log_every steps.
template <typename T>
std::vector<StepMetrics> run_training(model::CodecModel<T>& model, BatchStream& stream, const TrainConfig& cfg,
                                      TrainState& state, std::ostream* csv = nullptr,
                                      const std::function<void(const StepMetrics&)>& progress = {});

inline constexpr const char* kMetricsHeader = "step,loss,weighted_distortion,bpp";

}  // namespace roicodec::train
