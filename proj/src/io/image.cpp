#include "roicodec/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "roicodec/util/bytes.hpp"

namespace roicodec::io {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

Image decode_png(const util::Bytes& bytes, const std::string& name) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
    throw IoError(name + ": cannot decode PNG: " + png.message);
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image img;
  img.width = png.width;
  img.height = png.height;
  img.channels = gray ? 1 : 3;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  // Alpha is composited onto black by the simplified API when background is null.
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError(name + ": cannot decode PNG: " + png.message);
  }
  return img;
}

// Reads one header token, skipping whitespace and '#' comments.
std::string pnm_token(const util::Bytes& b, std::size_t& pos, const std::string& name) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok.push_back(static_cast<char>(b[pos++]));
  if (tok.empty()) throw IoError(name + ": truncated PNM header");
  return tok;
}

Image decode_pnm(const util::Bytes& b, const std::string& name) {
  std::size_t pos = 0;
  const auto magic = pnm_token(b, pos, name);
  if (magic != "P5" && magic != "P6") throw IoError(name + ": only binary PGM (P5) and PPM (P6) are supported");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pnm_token(b, pos, name));
    h = std::stoul(pnm_token(b, pos, name));
    maxval = std::stoul(pnm_token(b, pos, name));
  } catch (const std::logic_error&) {
    throw IoError(name + ": malformed PNM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw IoError(name + ": bad PNM dimensions or maxval");
  ++pos;  // single whitespace byte before the raster
  Image img;
  img.width = w;
  img.height = h;
  img.channels = magic == "P5" ? 1 : 3;
  const std::size_t n = w * h * img.channels;
  const std::size_t bps = maxval > 255 ? 2 : 1;
  if (b.size() < pos + n * bps) throw IoError(name + ": truncated PNM raster");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t v = bps == 2 ? (std::size_t{b[pos + 2 * i]} << 8) | b[pos + 2 * i + 1] : b[pos + i];
    img.pixels[i] = static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
  }
  return img;
}

util::Bytes encode_png(const Image& img, const std::string& name) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
    throw IoError(name + ": PNG encode failed: " + png.message);
  util::Bytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
    throw IoError(name + ": PNG encode failed: " + png.message);
  out.resize(size);
  return out;
}

void check_image(const Image& img, const std::string& name) {
  if ((img.channels != 1 && img.channels != 3) || img.width == 0 || img.height == 0 ||
      img.pixels.size() != img.width * img.height * img.channels)
    throw IoError(name + ": inconsistent image buffer");
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = util::read_file(path);
  const std::string name = path.string();
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(sig, sig + 8, bytes.begin())) return decode_png(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pnm(bytes, name);
  throw IoError(name + ": unrecognized image format");
}

void write_image(const std::filesystem::path& path, const Image& image) {
  const std::string name = path.string();
  check_image(image, name);
  const auto ext = lower_ext(path);
  if (ext == ".png") {
    util::write_file(path, encode_png(image, name));
    return;
  }
  if (ext != ".ppm" && ext != ".pgm") throw IoError(name + ": unsupported output extension");
  Image img = image;
  if (ext == ".ppm" && img.channels == 1) {
    img.channels = 3;
    img.pixels.clear();
    for (auto v : image.pixels) img.pixels.insert(img.pixels.end(), 3, v);
  } else if (ext == ".pgm" && img.channels == 3) {
    throw IoError(name + ": cannot store an RGB image as PGM");
  }
  const std::string header = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  util::Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  util::write_file(path, out);
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  check_image(image, "image");
  const std::size_t H = image.height, W = image.width;
  std::vector<T> v(3 * H * W);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        v[(c * H + y) * W + x] = static_cast<T>(image.at(y, x, image.channels == 1 ? 0 : c)) / T(255);
  return Tensor<T>::from_data({1, 3, H, W}, std::move(v));
}

template <typename T>
Tensor<T> mask_to_tensor(const Image& image) {
  check_image(image, "mask");
  const std::size_t H = image.height, W = image.width;
  std::vector<T> v(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const auto g = image.at(y, x, 0);
      if (image.channels == 3 && (image.at(y, x, 1) != g || image.at(y, x, 2) != g))
        throw ValidationError("mask must be single-channel (found a colored pixel)");
      v[y * W + x] = static_cast<T>(g) / T(255);
    }
  return Tensor<T>::from_data({1, 1, H, W}, std::move(v));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& tensor) {
  if (tensor.rank() != 4 || tensor.dim(0) != 1 || (tensor.dim(1) != 1 && tensor.dim(1) != 3))
    throw DimensionError("tensor_to_image expects [1,1|3,H,W], got " + shape_str(tensor.shape()));
  Image img;
  img.channels = tensor.dim(1);
  img.height = tensor.dim(2);
  img.width = tensor.dim(3);
  img.pixels.resize(img.channels * img.height * img.width);
  const auto d = tensor.data();
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const double v = std::clamp(static_cast<double>(d[(c * img.height + y) * img.width + x]), 0.0, 1.0);
        img.pixels[(y * img.width + x) * img.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

#define ROICODEC_INSTANTIATE(T)                           \
  template Tensor<T> image_to_tensor<T>(const Image&);    \
  template Tensor<T> mask_to_tensor<T>(const Image&);     \
  template Image tensor_to_image<T>(const Tensor<T>&);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::io
