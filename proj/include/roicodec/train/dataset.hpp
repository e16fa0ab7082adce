#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "roicodec/io/image.hpp"

namespace roicodec::train {

template <typename T>
struct Batch {
  Tensor<T> images;  // [N,3,h,w] in [0,1]
  Tensor<T> masks;   // [N,1,h,w] in [0,1]
  std::vector<std::string> ids;
};

using WarningSink = std::function<void(const std::string&)>;

struct Sample {
  std::string id;  // filename stem
  io::Image image, mask;
};

// Image/mask pairs held in memory, sorted by stem.
class Dataset {
 public:
  // Masks are paired with images by filename stem. Images without a mask and
  // images smaller than `crop` are skipped with a warning. Undecodable files
  // throw IoError.
  static Dataset load(const std::filesystem::path& image_dir, const std::filesystem::path& mask_dir,
                      std::size_t crop, const WarningSink& warn = {});

  const std::vector<Sample>& samples() const { return samples_; }
  const std::vector<std::string>& skipped() const { return skipped_; }
  std::size_t size() const { return samples_.size(); }

 private:
  std::vector<Sample> samples_;
  std::vector<std::string> skipped_;
};

// Endless seeded sequence of random crops. Each epoch visits a fresh shuffle of
// the samples; a trailing partial batch is dropped.
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::size_t batch_size, std::size_t crop, std::uint64_t seed);

  template <typename T>
  Batch<T> next();

  std::size_t batches_per_epoch() const { return data_->size() / batch_size_; }
  std::size_t epoch() const { return epoch_; }

  struct Crop {
    std::size_t sample, y, x;
  };
  // Crop coordinates of the next batch, advancing the stream.
  std::vector<Crop> next_crops();

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_, crop_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0, epoch_ = 0;
};

}  // namespace roicodec::train
