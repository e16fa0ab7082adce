#pragma once

#include <cstdint>
#include <span>

#include "roicodec/model/model.hpp"
#include "roicodec/util/bytes.hpp"

namespace roicodec::entropy {

// Container layout, all integers little-endian:
//   offset  size  field
//   0       4     magic "ROIC"
//   4       1     version (1)
//   5       4     original height
//   9       4     original width
//   13      8     model hash (see model_hash)
//   21      4     z payload length Lz
//   25      Lz    z payload (range coded)
//   25+Lz   4     y payload length Ly
//   29+Lz   Ly    y payload (range coded)
//   29+Lz+Ly 4    CRC-32 of bytes [0, 29+Lz+Ly)
inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::size_t kContainerOverhead = 33;

struct Container {
  std::uint32_t height = 0, width = 0;
  std::uint64_t model_hash = 0;
  util::Bytes z_payload, y_payload;
};

util::Bytes write_container(const Container& c);
// Validates magic, version, declared lengths and the CRC.
Container read_container(std::span<const std::uint8_t> bytes);

template <typename T>
struct EncodedImage {
  util::Bytes bytes;
  model::LatentPair<T> quantized;  // exactly what the decoder reconstructs
  double estimated_bits = 0.0;     // -sum log2 p over y_hat and z_hat
  std::size_t payload_bytes = 0;   // z + y payloads, without the container
};

// Codes continuous latents of a single image (N = 1). z is rounded and coded
// with the factorized prior; y is rounded around the predicted mean and coded
// with per-element Gaussian tables (anchors first under the checkerboard).
template <typename T>
EncodedImage<T> write_bitstream(const model::CodecModel<T>& model, const model::LatentPair<T>& latents);

// Inverse of write_bitstream. Throws ModelMismatchError when the stream was
// produced by a different model.
template <typename T>
model::LatentPair<T> read_bitstream(std::span<const std::uint8_t> bytes, const model::CodecModel<T>& model);

// image [1,3,H,W] + mask [1,1,H,W] -> bitstream.
template <typename T>
EncodedImage<T> compress(const model::CodecModel<T>& model, const Tensor<T>& image, const Tensor<T>& mask);
// bitstream -> image [1,3,H,W]; no mask involved.
template <typename T>
Tensor<T> decompress(const model::CodecModel<T>& model, std::span<const std::uint8_t> bytes);

}  // namespace roicodec::entropy
