#include "roicodec/train/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "roicodec/entropy/likelihood.hpp"

namespace roicodec::train {

namespace {

template <typename T>
std::string describe(const std::string& name, const Tensor<T>& t) {
  std::ostringstream os;
  os << name << " " << shape_str(t.shape());
  if (!t.defined()) return os.str() + " undefined";
  const auto bad = count_nonfinite(t.data());
  double lo = INFINITY, hi = -INFINITY;
  for (T v : t.data())
    if (std::isfinite(static_cast<double>(v))) {
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  os << " nonfinite=" << bad << " finite_range=[" << lo << ", " << hi << "]";
  return os.str();
}

template <typename T>
Tensor<T> lambda_for(const Batch<T>& batch, const TrainConfig& cfg) {
  if (!cfg.uniform_lambda) return model::lambda_map(batch.masks, cfg.alpha, cfg.omega);
  nn::validate_mask(batch.masks);
  const double v = cfg.alpha * 255.0 * 255.0;
  return Tensor<T>::full(batch.masks.shape(), static_cast<T>(v));
}

// Everything the NaN diagnostics may want to show.
template <typename T>
struct Pass {
  ForwardResult<T> result;
  std::vector<std::pair<std::string, Tensor<T>>> tensors;
};

template <typename T>
Pass<T> run_forward(const model::CodecModel<T>& model, const Batch<T>& batch, const TrainConfig& cfg,
                    std::mt19937_64& rng) {
  if (batch.images.rank() != 4 || batch.masks.rank() != 4 || batch.images.dim(0) != batch.masks.dim(0) ||
      batch.images.dim(2) != batch.masks.dim(2) || batch.images.dim(3) != batch.masks.dim(3))
    throw DimensionError("batch images " + shape_str(batch.images.shape()) + " and masks " +
                         shape_str(batch.masks.shape()) + " disagree");
  const auto enc = model.encode_latents(batch.images, batch.masks);
  auto y_tilde = entropy::quantize(enc.latents.y, entropy::QuantMode::Noise, &rng);
  auto z_tilde = entropy::quantize(enc.latents.z, entropy::QuantMode::Noise, &rng);
  auto conds = model.decoder_conditions(z_tilde);
  auto params = model.entropy_params(model.hyper_analysis_params(z_tilde, conds), y_tilde);
  auto p_y = entropy::gaussian_likelihood(y_tilde, params.mu, params.sigma);
  auto p_z = model.prior().likelihood(z_tilde);
  auto x_rec = crop(model.synthesize(y_tilde, conds), batch.images.dim(2), batch.images.dim(3));
  auto bits = add(entropy::rate_bits(p_y), entropy::rate_bits(p_z));
  const std::size_t n_pixels = batch.images.dim(0) * batch.images.dim(2) * batch.images.dim(3);

  Pass<T> pass;
  pass.tensors = {{"y", enc.latents.y}, {"z", enc.latents.z},   {"mu", params.mu}, {"sigma", params.sigma},
                  {"p_y", p_y},         {"p_z", p_z},           {"x_rec", x_rec}};
  const bool finite_bits = std::isfinite(static_cast<double>(bits.item()));
  if (!finite_bits || bits.item() < T(0)) {
    pass.result.terms.loss = Tensor<T>::scalar(static_cast<T>(NAN));
    return pass;
  }
  pass.result.terms = rd_loss(batch.images, x_rec, lambda_for(batch, cfg), bits, n_pixels);
  pass.result.bpp_estimate = entropy::estimate_bits<T>({p_y, p_z}) / static_cast<double>(n_pixels);
  return pass;
}

}  // namespace

template <typename T>
ForwardResult<T> forward_loss(const model::CodecModel<T>& model, const Batch<T>& batch, const TrainConfig& cfg,
                              std::mt19937_64& noise_rng) {
  return run_forward(model, batch, cfg, noise_rng).result;
}

template <typename T>
StepMetrics train_step(const Batch<T>& batch, model::CodecModel<T>& model, const TrainConfig& cfg,
                       TrainState& state) {
  auto& params = model.parameters();
  zero_grad(params);
  auto pass = run_forward(model, batch, cfg, state.noise_rng);
  const auto& terms = pass.result.terms;
  const double loss = static_cast<double>(terms.loss.item());
  auto abort = [&](const std::string& what) {
    std::ostringstream os;
    os << what << " at step " << state.step << " (batch:";
    for (const auto& id : batch.ids) os << " " << id;
    os << ")";
    for (const auto& [name, t] : pass.tensors) os << "\n  " << describe(name, t);
    for (const auto& p : params)
      if (count_nonfinite(p.tensor.data()) || (p.tensor.has_grad() && count_nonfinite(p.tensor.grad())))
        os << "\n  param " << describe(p.name, p.tensor)
           << " grad_nonfinite=" << (p.tensor.has_grad() ? count_nonfinite(p.tensor.grad()) : 0);
    throw TrainingError(os.str());
  };
  if (!std::isfinite(loss)) abort("non-finite loss");
  backward(terms.loss);
  StepMetrics m;
  m.step = state.step;
  m.loss = loss;
  m.weighted_distortion = static_cast<double>(terms.weighted_distortion.item());
  m.bpp_estimate = pass.result.bpp_estimate;
  m.grad_norm = cfg.clip_norm > 0 ? clip_grad_norm(params, cfg.clip_norm) : global_grad_norm(params);
  if (!std::isfinite(m.grad_norm)) abort("non-finite gradient");
  adam_step(params, state.adam, cfg.lr);
  ++state.step;
  return m;
}

template <typename T>
std::vector<StepMetrics> run_training(model::CodecModel<T>& model, BatchStream& stream, const TrainConfig& cfg,
                                      TrainState& state, std::ostream* csv,
                                      const std::function<void(const StepMetrics&)>& progress) {
  const std::size_t total = cfg.epochs ? cfg.epochs * stream.batches_per_epoch() : cfg.steps;
  std::vector<StepMetrics> history;
  history.reserve(total);
  if (csv) *csv << kMetricsHeader << "\n" << std::setprecision(9);
  for (std::size_t i = 0; i < total; ++i) {
    const auto batch = stream.next<T>();
    auto m = train_step(batch, model, cfg, state);
    if (csv) *csv << m.step << "," << m.loss << "," << m.weighted_distortion << "," << m.bpp_estimate << "\n";
    if (progress && cfg.log_every && (i % cfg.log_every == 0 || i + 1 == total)) progress(m);
    history.push_back(m);
  }
  return history;
}

#define ROICODEC_INSTANTIATE(T)                                                                                    \
  template ForwardResult<T> forward_loss(const model::CodecModel<T>&, const Batch<T>&, const TrainConfig&,        \
                                         std::mt19937_64&);                                                        \
  template StepMetrics train_step(const Batch<T>&, model::CodecModel<T>&, const TrainConfig&, TrainState&);       \
  template std::vector<StepMetrics> run_training(model::CodecModel<T>&, BatchStream&, const TrainConfig&,         \
                                                 TrainState&, std::ostream*,                                       \
                                                 const std::function<void(const StepMetrics&)>&);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::train
