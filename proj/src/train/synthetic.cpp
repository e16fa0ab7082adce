#include "roicodec/train/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "roicodec/io/image.hpp"

namespace roicodec::train {

namespace {

struct Rgb {
  double r, g, b;
};

class Painter {
 public:
  Painter(std::size_t size, std::mt19937_64& rng) : size_(size), rng_(rng), px_(size * size) {}

  double uni(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t pick(std::size_t lo, std::size_t hi) { return lo + rng_() % (hi - lo + 1); }
  Rgb color() { return {uni(0.05, 0.95), uni(0.05, 0.95), uni(0.05, 0.95)}; }

  // Two-color linear gradient with a faint low-frequency wave.
  void background() {
    const Rgb a = color(), b = color();
    const double angle = uni(0, 2 * std::numbers::pi), freq = uni(0.02, 0.08), phase = uni(0, 6.3);
    for (std::size_t y = 0; y < size_; ++y)
      for (std::size_t x = 0; x < size_; ++x) {
        const double t = 0.5 + 0.5 * std::sin((std::cos(angle) * x + std::sin(angle) * y) / size_ * 3.0);
        const double w = 0.04 * std::sin(freq * (x + 0.7 * y) + phase);
        px_[y * size_ + x] = {mix(a.r, b.r, t) + w, mix(a.g, b.g, t) + w, mix(a.b, b.b, t) + w};
      }
  }

  // Textured rectangle: stripes, checkers or dots between two colors, plus noise.
  void textured_rect(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    const Rgb a = color(), b = color();
    const int kind = static_cast<int>(rng_() % 3);
    const double period = uni(10.0, 20.0), angle = uni(0, std::numbers::pi), noise = uni(0.01, 0.03);
    std::normal_distribution<double> n(0.0, noise);
    for (std::size_t y = y0; y < std::min(size_, y0 + h); ++y)
      for (std::size_t x = x0; x < std::min(size_, x0 + w); ++x) {
        const double u = std::cos(angle) * x + std::sin(angle) * y, v = -std::sin(angle) * x + std::cos(angle) * y;
        double t = 0;
        if (kind == 0) t = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * u / period);
        else if (kind == 1) t = (static_cast<long>(std::floor(u / period)) + static_cast<long>(std::floor(v / period))) & 1;
        else {
          const double du = std::fmod(std::abs(u), period) - period / 2, dv = std::fmod(std::abs(v), period) - period / 2;
          t = du * du + dv * dv < period * period / 8 ? 1.0 : 0.0;
        }
        const double e = n(rng_);
        px_[y * size_ + x] = {mix(a.r, b.r, t) + e, mix(a.g, b.g, t) + e, mix(a.b, b.b, t) + e};
      }
  }

  io::Image image() const {
    io::Image img;
    img.width = img.height = size_;
    img.channels = 3;
    for (const auto& p : px_)
      for (double v : {p.r, p.g, p.b})
        img.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return img;
  }

 private:
  static double mix(double a, double b, double t) { return a + (b - a) * t; }

  std::size_t size_;
  std::mt19937_64& rng_;
  std::vector<Rgb> px_;
};

}  // namespace

void generate_roi_corpus(const std::filesystem::path& dir, std::size_t count, std::size_t size, std::uint64_t seed) {
  if (size < 16) throw ContractError("corpus image size must be at least 16");
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    Painter p(size, rng);
    p.background();
    // Clutter outside the ROI so the background also costs bits.
    const std::size_t clutter = p.pick(1, 2);
    for (std::size_t k = 0; k < clutter; ++k) {
      const std::size_t h = p.pick(size / 6, size / 3), w = p.pick(size / 6, size / 3);
      p.textured_rect(p.pick(0, size - h), p.pick(0, size - w), h, w);
    }
    const std::size_t h = p.pick(size / 4, size / 2), w = p.pick(size / 4, size / 2);
    const std::size_t y0 = p.pick(0, size - h), x0 = p.pick(0, size - w);
    p.textured_rect(y0, x0, h, w);

    io::Image mask;
    mask.width = mask.height = size;
    mask.channels = 1;
    mask.pixels.assign(size * size, 0);
    for (std::size_t y = y0; y < y0 + h; ++y)
      for (std::size_t x = x0; x < x0 + w; ++x) mask.pixels[y * size + x] = 255;

    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.png", i);
    io::write_image(dir / "images" / name, p.image());
    io::write_image(dir / "masks" / name, mask);
  }
}

}  // namespace roicodec::train
