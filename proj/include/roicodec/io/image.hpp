#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "roicodec/tensor/tensor.hpp"

namespace roicodec::io {

// 8-bit interleaved pixels, 1 (gray) or 3 (RGB) channels.
struct Image {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
};

// PNG or binary PPM/PGM, detected from the leading bytes. Alpha is dropped,
// 16-bit samples are reduced to 8 bits. Throws IoError naming the path.
Image read_image(const std::filesystem::path& path);

// Format chosen by extension: .png, .ppm, .pgm.
void write_image(const std::filesystem::path& path, const Image& image);

// Gray images are replicated to three channels. Result [1,3,H,W] in [0,1].
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

// Single-channel (or RGB with equal channels) image -> [1,1,H,W], value/255.
template <typename T>
Tensor<T> mask_to_tensor(const Image& image);

// [1,C,H,W] (C = 1 or 3) in [0,1] -> 8-bit image, values rounded after clamping.
template <typename T>
Image tensor_to_image(const Tensor<T>& tensor);

bool is_image_file(const std::filesystem::path& path);

}  // namespace roicodec::io
