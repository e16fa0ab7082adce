#include "roicodec/train/dataset.hpp"

#include <algorithm>
#include <iostream>
#include <map>

namespace roicodec::train {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && io::is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Dataset Dataset::load(const fs::path& image_dir, const fs::path& mask_dir, std::size_t crop, const WarningSink& warn) {
  auto emit = [&](const std::string& msg) {
    if (warn) warn(msg);
    else std::cerr << "warning: " << msg << "\n";
  };
  std::map<std::string, fs::path> masks;
  for (const auto& p : list_images(mask_dir)) {
    const auto stem = p.stem().string();
    if (masks.count(stem)) throw IoError(p.string() + ": duplicate mask for stem '" + stem + "'");
    masks[stem] = p;
  }
  Dataset d;
  for (const auto& p : list_images(image_dir)) {
    const auto stem = p.stem().string();
    auto m = masks.find(stem);
    if (m == masks.end()) {
      d.skipped_.push_back(p.string());
      emit(p.string() + ": no mask with stem '" + stem + "', skipped");
      continue;
    }
    Sample s;
    s.id = stem;
    s.image = io::read_image(p);
    s.mask = io::read_image(m->second);
    if (s.mask.width != s.image.width || s.mask.height != s.image.height)
      throw DimensionError(m->second.string() + ": mask size differs from " + p.string());
    if (s.image.width < crop || s.image.height < crop) {
      d.skipped_.push_back(p.string());
      emit(p.string() + ": smaller than crop " + std::to_string(crop) + ", skipped");
      continue;
    }
    d.samples_.push_back(std::move(s));
  }
  return d;
}

BatchStream::BatchStream(const Dataset& data, std::size_t batch_size, std::size_t crop, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), crop_(crop), rng_(seed) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  if (data.size() < batch_size)
    throw ContractError("dataset has " + std::to_string(data.size()) + " usable samples, fewer than batch size " +
                        std::to_string(batch_size));
  reshuffle();
}

void BatchStream::reshuffle() {
  order_.resize(data_->size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  // Fisher-Yates with explicit modulo draws keeps the order independent of the
  // standard library's distribution implementations.
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_() % i]);
  cursor_ = 0;
}

std::vector<BatchStream::Crop> BatchStream::next_crops() {
  if (cursor_ + batch_size_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  std::vector<Crop> crops;
  for (std::size_t b = 0; b < batch_size_; ++b) {
    const auto idx = order_[cursor_++];
    const auto& s = data_->samples()[idx];
    const std::size_t y = rng_() % (s.image.height - crop_ + 1);
    const std::size_t x = rng_() % (s.image.width - crop_ + 1);
    crops.push_back({idx, y, x});
  }
  return crops;
}

template <typename T>
Batch<T> BatchStream::next() {
  const auto crops = next_crops();
  const std::size_t n = crops.size(), c = crop_;
  std::vector<T> img(n * 3 * c * c), msk(n * c * c);
  Batch<T> batch;
  for (std::size_t b = 0; b < n; ++b) {
    const auto& s = data_->samples()[crops[b].sample];
    batch.ids.push_back(s.id);
    for (std::size_t y = 0; y < c; ++y)
      for (std::size_t x = 0; x < c; ++x) {
        const std::size_t sy = crops[b].y + y, sx = crops[b].x + x;
        for (std::size_t ch = 0; ch < 3; ++ch)
          img[((b * 3 + ch) * c + y) * c + x] =
              static_cast<T>(s.image.at(sy, sx, s.image.channels == 1 ? 0 : ch)) / T(255);
        msk[(b * c + y) * c + x] = static_cast<T>(s.mask.at(sy, sx, 0)) / T(255);
      }
  }
  batch.images = Tensor<T>::from_data({n, 3, c, c}, std::move(img));
  batch.masks = Tensor<T>::from_data({n, 1, c, c}, std::move(msk));
  return batch;
}

template Batch<float> BatchStream::next<float>();
template Batch<double> BatchStream::next<double>();

}  // namespace roicodec::train
