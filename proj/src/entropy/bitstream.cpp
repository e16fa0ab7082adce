#include "roicodec/entropy/bitstream.hpp"

#include <cstring>

#include "roicodec/entropy/likelihood.hpp"
#include "roicodec/entropy/tables.hpp"
#include "roicodec/model/checkpoint.hpp"

namespace roicodec::entropy {

namespace {

constexpr char kMagic[4] = {'R', 'O', 'I', 'C'};

// Element visiting order for y: all channels of the anchors, then the rest.
std::vector<std::vector<std::size_t>> y_passes(std::size_t C, std::size_t H, std::size_t W, bool checkerboard) {
  std::vector<std::vector<std::size_t>> passes(checkerboard ? 2 : 1);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t pass = checkerboard && (i + j) % 2 ? 1 : 0;
        passes[pass].push_back((c * H + i) * W + j);
      }
  return passes;
}

template <typename T>
std::vector<CodingTable> z_tables(const model::CodecModel<T>& m) {
  std::vector<CodingTable> t;
  for (std::size_t c = 0; c < m.config().hyper_channels; ++c) t.push_back(factorized_table(m.prior(), c));
  return t;
}

}  // namespace

util::Bytes write_container(const Container& c) {
  util::ByteWriter w;
  w.text(std::string_view(kMagic, 4));
  w.u8(kBitstreamVersion);
  w.u32(c.height);
  w.u32(c.width);
  w.u64(c.model_hash);
  w.u32(static_cast<std::uint32_t>(c.z_payload.size()));
  w.raw(c.z_payload);
  w.u32(static_cast<std::uint32_t>(c.y_payload.size()));
  w.raw(c.y_payload);
  const auto crc = util::crc32(w.bytes());
  w.u32(crc);
  return w.take();
}

Container read_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kContainerOverhead) throw FormatError("bitstream: shorter than the fixed container overhead");
  util::ByteReader r(bytes, "bitstream");
  if (std::memcmp(r.raw(4).data(), kMagic, 4) != 0) throw FormatError("bitstream: bad magic");
  const auto version = r.u8();
  if (version != kBitstreamVersion) throw FormatError("bitstream: unsupported version " + std::to_string(version));
  Container c;
  c.height = r.u32();
  c.width = r.u32();
  c.model_hash = r.u64();
  const auto z_len = r.u32();
  auto z = r.raw(z_len);
  c.z_payload.assign(z.begin(), z.end());
  const auto y_len = r.u32();
  auto y = r.raw(y_len);
  c.y_payload.assign(y.begin(), y.end());
  const auto body_len = r.position();
  const auto crc = r.u32();
  if (r.remaining() != 0) throw FormatError("bitstream: trailing bytes after CRC");
  if (crc != util::crc32(bytes.first(body_len))) throw FormatError("bitstream: CRC mismatch (corrupt stream)");
  if (c.height == 0 || c.width == 0) throw FormatError("bitstream: empty geometry");
  return c;
}

template <typename T>
EncodedImage<T> write_bitstream(const model::CodecModel<T>& m, const model::LatentPair<T>& latents) {
  NoGradGuard no_grad;
  const auto& y = latents.y;
  const auto& z = latents.z;
  if (y.dim(0) != 1 || z.dim(0) != 1) throw DimensionError("write_bitstream codes one image at a time");
  const auto& g = latents.geometry;
  if (y.dim(2) != g.latent_height() || y.dim(3) != g.latent_width() || z.dim(2) != g.hyper_height() ||
      z.dim(3) != g.hyper_width())
    throw DimensionError("write_bitstream: latents do not match geometry");

  // z: plain rounding, one table per channel.
  auto z_hat = quantize(z, QuantMode::Round);
  const auto ztab = z_tables(m);
  RangeEncoder zenc;
  {
    const std::size_t C = z_hat.dim(1), HW = z_hat.dim(2) * z_hat.dim(3);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < HW; ++k)
        encode_value(zenc, ztab[c], static_cast<std::int64_t>(z_hat.data()[c * HW + k]));
  }

  // y: the decoder sees z_hat only, so derive everything from it.
  const auto hyper = m.hyper_analysis_params(z_hat);
  const bool checkerboard = m.config().context_mode == model::ContextMode::Checkerboard;
  const std::size_t C = y.dim(1), H = y.dim(2), W = y.dim(3);
  const auto passes = y_passes(C, H, W, checkerboard);
  auto y_hat = Tensor<T>::zeros(y.shape());
  RangeEncoder yenc;
  auto params = hyper;
  for (std::size_t pass = 0; pass < passes.size(); ++pass) {
    if (pass > 0) params = m.entropy_params(hyper, y_hat);
    auto out = y_hat.mutable_data();
    for (auto idx : passes[pass]) {
      const T mu = params.mu.data()[idx];
      const auto s = static_cast<std::int64_t>(round_half_away(static_cast<double>(y.data()[idx] - mu)));
      encode_value(yenc, gaussian_table(static_cast<double>(params.sigma.data()[idx])), s);
      out[idx] = static_cast<T>(s) + mu;
    }
  }

  EncodedImage<T> result;
  Container c;
  c.height = static_cast<std::uint32_t>(g.height);
  c.width = static_cast<std::uint32_t>(g.width);
  c.model_hash = model::model_hash(m);
  c.z_payload = zenc.finish();
  c.y_payload = yenc.finish();
  result.payload_bytes = c.z_payload.size() + c.y_payload.size();
  result.bytes = write_container(c);
  const auto final_params = m.entropy_params(hyper, y_hat);
  result.estimated_bits = estimate_bits<T>(
      {m.prior().likelihood(z_hat), gaussian_likelihood(y_hat, final_params.mu, final_params.sigma)});
  result.quantized = {y_hat, z_hat, g};
  return result;
}

template <typename T>
model::LatentPair<T> read_bitstream(std::span<const std::uint8_t> bytes, const model::CodecModel<T>& m) {
  NoGradGuard no_grad;
  const auto c = read_container(bytes);
  if (c.model_hash != model::model_hash(m))
    throw ModelMismatchError("bitstream was written by a different model (hash mismatch)");
  const auto g = model::Geometry::for_image(c.height, c.width);

  const auto ztab = z_tables(m);
  const std::size_t Cz = m.config().hyper_channels, HWz = g.hyper_height() * g.hyper_width();
  std::vector<T> zv(Cz * HWz);
  RangeDecoder zdec(c.z_payload);
  for (std::size_t ch = 0; ch < Cz; ++ch)
    for (std::size_t k = 0; k < HWz; ++k) zv[ch * HWz + k] = static_cast<T>(decode_value(zdec, ztab[ch]));
  auto z_hat = Tensor<T>::from_data({1, Cz, g.hyper_height(), g.hyper_width()}, std::move(zv));

  const auto hyper = m.hyper_analysis_params(z_hat);
  const bool checkerboard = m.config().context_mode == model::ContextMode::Checkerboard;
  const std::size_t C = m.config().latent_channels, H = g.latent_height(), W = g.latent_width();
  const auto passes = y_passes(C, H, W, checkerboard);
  auto y_hat = Tensor<T>::zeros({1, C, H, W});
  RangeDecoder ydec(c.y_payload);
  auto params = hyper;
  for (std::size_t pass = 0; pass < passes.size(); ++pass) {
    if (pass > 0) params = m.entropy_params(hyper, y_hat);
    auto out = y_hat.mutable_data();
    for (auto idx : passes[pass]) {
      const auto s = decode_value(ydec, gaussian_table(static_cast<double>(params.sigma.data()[idx])));
      out[idx] = static_cast<T>(s) + params.mu.data()[idx];
    }
  }
  return {y_hat, z_hat, g};
}

template <typename T>
EncodedImage<T> compress(const model::CodecModel<T>& m, const Tensor<T>& image, const Tensor<T>& mask) {
  NoGradGuard no_grad;
  if (image.rank() != 4 || image.dim(0) != 1) throw DimensionError("compress expects a single image [1,3,H,W]");
  return write_bitstream(m, m.encode_latents(image, mask).latents);
}

template <typename T>
Tensor<T> decompress(const model::CodecModel<T>& m, std::span<const std::uint8_t> bytes) {
  NoGradGuard no_grad;
  const auto latents = read_bitstream(bytes, m);
  return m.decode_latents(latents.y, latents.z, latents.geometry);
}

#define ROICODEC_INSTANTIATE(T)                                                                         \
  template EncodedImage<T> write_bitstream(const model::CodecModel<T>&, const model::LatentPair<T>&);   \
  template model::LatentPair<T> read_bitstream(std::span<const std::uint8_t>, const model::CodecModel<T>&); \
  template EncodedImage<T> compress(const model::CodecModel<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> decompress(const model::CodecModel<T>&, std::span<const std::uint8_t>);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::entropy
