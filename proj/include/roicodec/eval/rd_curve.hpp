#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "roicodec/eval/metrics.hpp"
#include "roicodec/io/image.hpp"
#include "roicodec/model/model.hpp"

namespace roicodec::eval {

template <typename T>
struct RdModel {
  std::string omega;  // label written to the omega column
  const model::CodecModel<T>* model = nullptr;
};

struct RdImage {
  std::string id;
  io::Image image, mask;
};

// One measured point. roi_psnr / bg_psnr are NaN when the thresholded mask
// leaves that region empty; such values are left out of the means.
struct RdRow {
  std::string omega, image_id;
  double bpp = 0, psnr = 0, roi_psnr = 0, bg_psnr = 0;
};

// Encodes and decodes every image with every model through the real
// bitstream. Returns data rows (model order, then image order) followed by
// one "mean" row per model.
template <typename T>
std::vector<RdRow> rd_curve(const std::vector<RdModel<T>>& models, const std::vector<RdImage>& corpus,
                            double roi_threshold = kDefaultRoiThreshold);

inline constexpr const char* kRdCsvHeader = "omega,image_id,bpp,psnr,roi_psnr,bg_psnr";

std::string rd_csv(const std::vector<RdRow>& rows);
void write_rd_csv(const std::vector<RdRow>& rows, const std::filesystem::path& path);

}  // namespace roicodec::eval
