#include "roicodec/eval/rd_curve.hpp"

#include <cmath>
#include <cstdio>

#include "roicodec/entropy/bitstream.hpp"
#include "roicodec/util/bytes.hpp"

namespace roicodec::eval {

namespace {

template <typename T>
double region_or_nan(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& mask, double th, bool roi) {
  try {
    return roi ? roi_psnr(x, y, mask, th) : bg_psnr(x, y, mask, th);
  } catch (const ValidationError&) {
    return NAN;
  }
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

template <typename T>
std::vector<RdRow> rd_curve(const std::vector<RdModel<T>>& models, const std::vector<RdImage>& corpus,
                            double roi_threshold) {
  if (models.empty()) throw ContractError("rd_curve: no model given");
  if (corpus.empty()) throw ContractError("rd_curve: corpus is empty");
  std::vector<RdRow> rows, means;
  for (const auto& m : models) {
    RdRow mean{m.omega, "mean"};
    std::size_t n_roi = 0, n_bg = 0;
    for (const auto& item : corpus) {
      const auto x = io::image_to_tensor<T>(item.image);
      const auto mask = io::mask_to_tensor<T>(item.mask);
      const auto enc = entropy::compress(*m.model, x, mask);
      const auto rec = entropy::decompress(*m.model, enc.bytes);
      RdRow r{m.omega, item.id};
      r.bpp = bpp_measure(enc.bytes, item.image.height, item.image.width);
      r.psnr = psnr(x, rec);
      r.roi_psnr = region_or_nan(x, rec, mask, roi_threshold, true);
      r.bg_psnr = region_or_nan(x, rec, mask, roi_threshold, false);
      mean.bpp += r.bpp;
      mean.psnr += r.psnr;
      if (!std::isnan(r.roi_psnr)) mean.roi_psnr += r.roi_psnr, ++n_roi;
      if (!std::isnan(r.bg_psnr)) mean.bg_psnr += r.bg_psnr, ++n_bg;
      rows.push_back(r);
    }
    const double n = static_cast<double>(corpus.size());
    mean.bpp /= n;
    mean.psnr /= n;
    mean.roi_psnr = n_roi ? mean.roi_psnr / static_cast<double>(n_roi) : NAN;
    mean.bg_psnr = n_bg ? mean.bg_psnr / static_cast<double>(n_bg) : NAN;
    means.push_back(mean);
  }
  rows.insert(rows.end(), means.begin(), means.end());
  return rows;
}

std::string rd_csv(const std::vector<RdRow>& rows) {
  std::string out = std::string(kRdCsvHeader) + "\n";
  for (const auto& r : rows)
    out += r.omega + "," + r.image_id + "," + fmt(r.bpp) + "," + fmt(r.psnr) + "," + fmt(r.roi_psnr) + "," +
           fmt(r.bg_psnr) + "\n";
  return out;
}

void write_rd_csv(const std::vector<RdRow>& rows, const std::filesystem::path& path) {
  const auto text = rd_csv(rows);
  util::write_file(path.string(), {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

template std::vector<RdRow> rd_curve(const std::vector<RdModel<float>>&, const std::vector<RdImage>&, double);
template std::vector<RdRow> rd_curve(const std::vector<RdModel<double>>&, const std::vector<RdImage>&, double);

}  // namespace roicodec::eval
