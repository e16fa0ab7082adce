#include "roicodec/eval/attention.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "roicodec/entropy/likelihood.hpp"
#include "roicodec/io/image.hpp"

namespace roicodec::eval {

std::vector<Query> grid_queries(std::size_t height, std::size_t width, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || height == 0 || width == 0) throw ValidationError("query grid must be non-empty");
  std::vector<Query> q;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) q.push_back({(2 * r + 1) * height / (2 * rows), (2 * c + 1) * width / (2 * cols)});
  return q;
}

template <typename T>
std::vector<std::string> site_names(model::CodecModel<T>& model) {
  std::vector<std::string> names;
  for (const auto& [name, block] : model.swin_sites()) names.push_back(name);
  return names;
}

template <typename T>
std::vector<std::string> resolve_sites(model::CodecModel<T>& model, const std::vector<std::string>& requested) {
  const auto all = site_names(model);
  std::vector<std::string> out;
  auto push = [&](const std::string& s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  for (const auto& r : requested) {
    if (r == "all" || r == "enc" || r == "dec") {
      for (const auto& s : all)
        if (r == "all" || s.rfind(r + ".", 0) == 0) push(s);
      continue;
    }
    if (!r.empty() && std::all_of(r.begin(), r.end(), [](unsigned char c) { return std::isdigit(c); })) {
      const auto idx = std::stoul(r);
      if (idx >= all.size())
        throw ValidationError("site index " + r + " out of range (model has " + std::to_string(all.size()) +
                              " attention sites)");
      push(all[idx]);
      continue;
    }
    if (std::find(all.begin(), all.end(), r) == all.end()) throw ValidationError("unknown attention site '" + r + "'");
    push(r);
  }
  if (out.empty()) throw ValidationError("no attention site requested");
  return out;
}

template <typename T>
AttentionDump attention_dump(model::CodecModel<T>& model, const Tensor<T>& image, const Tensor<T>& mask,
                             const std::vector<std::string>& sites, const std::vector<Query>& queries) {
  if (image.rank() != 4 || image.dim(0) != 1) throw DimensionError("attention_dump expects a single image [1,3,H,W]");
  const std::size_t H = image.dim(2), W = image.dim(3);
  for (const auto& q : queries)
    if (q.y >= H || q.x >= W)
      throw ValidationError("query (" + std::to_string(q.y) + ", " + std::to_string(q.x) + ") outside the " +
                            std::to_string(H) + "x" + std::to_string(W) + " image");
  const auto resolved = resolve_sites(model, sites);
  auto blocks = model.swin_sites();
  std::vector<nn::SwinBlock<T>*> chosen;
  for (const auto& s : resolved)
    for (auto& [name, block] : blocks)
      if (name == s) chosen.push_back(block);

  for (auto* b : chosen) b->record_attention = true;
  model::Geometry geo;
  try {
    NoGradGuard guard;
    const auto enc = model.encode_latents(image, mask);
    geo = enc.latents.geometry;
    auto y_hat = entropy::quantize(enc.latents.y, entropy::QuantMode::Round);
    auto z_hat = entropy::quantize(enc.latents.z, entropy::QuantMode::Round);
    model.hyper_analysis_params(z_hat);
    model.decode_latents(y_hat, z_hat, geo);
  } catch (...) {
    for (auto* b : chosen) b->record_attention = false;
    throw;
  }
  for (auto* b : chosen) b->record_attention = false;

  AttentionDump dump;
  dump.sites = resolved;
  dump.queries = queries;
  for (std::size_t si = 0; si < chosen.size(); ++si) {
    const auto* block = chosen[si];
    const auto& shape = block->last_input_shape;  // [1,Hf,Wf,C]
    const std::size_t Hf = shape[1], Wf = shape[2];
    const auto [w, s] = block->layout_for(Hf, Wf);
    const auto& att = block->last_attention;  // [nW, heads, T, T]
    const std::size_t heads = att.dim(1), Tk = att.dim(2);
    const auto a = att.data();
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      const std::size_t fy = queries[qi].y * Hf / geo.padded_height, fx = queries[qi].x * Wf / geo.padded_width;
      // position after the cyclic roll by -s
      const std::size_t sy = (fy + Hf - s) % Hf, sx = (fx + Wf - s) % Wf;
      const std::size_t win = (sy / w) * (Wf / w) + sx / w;
      const std::size_t tok = (sy % w) * w + sx % w;
      std::vector<std::pair<std::size_t, std::size_t>> keys(Tk);
      for (std::size_t k = 0; k < Tk; ++k) {
        const std::size_t ky = (sy / w) * w + k / w, kx = (sx / w) * w + k % w;
        keys[k] = {(ky + s) % Hf, (kx + s) % Wf};
      }
      AttentionMap avg;
      avg.weights.assign(Tk, 0.0);
      for (std::size_t h = 0; h < heads; ++h) {
        AttentionMap m;
        m.site = resolved[si];
        m.query_index = qi;
        m.pixel = queries[qi];
        m.head = h;
        m.feature_y = fy;
        m.feature_x = fx;
        m.window = w;
        m.shift = s;
        m.keys = keys;
        m.weights.resize(Tk);
        for (std::size_t k = 0; k < Tk; ++k) {
          m.weights[k] = static_cast<double>(a[((win * heads + h) * Tk + tok) * Tk + k]);
          avg.weights[k] += m.weights[k] / static_cast<double>(heads);
        }
        dump.maps.push_back(std::move(m));
      }
      auto w_avg = std::move(avg.weights);
      AttentionMap mean = dump.maps.back();
      mean.head_average = true;
      mean.head = heads;
      mean.weights = std::move(w_avg);
      dump.maps.push_back(std::move(mean));
    }
  }
  return dump;
}

namespace {

std::string file_safe(std::string s) {
  std::replace(s.begin(), s.end(), '.', '-');
  return s;
}

}  // namespace

void write_attention_dump(const AttentionDump& dump, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "attention.csv");
  if (!csv) throw IoError((dir / "attention.csv").string() + ": cannot write");
  csv << kAttentionCsvHeader << "\n";
  char buf[64];
  for (const auto& m : dump.maps) {
    const std::string head = m.head_average ? "mean" : std::to_string(m.head);
    for (std::size_t k = 0; k < m.weights.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", m.weights[k]);
      csv << m.site << "," << m.query_index << "," << m.pixel.y << "," << m.pixel.x << "," << m.feature_y << ","
          << m.feature_x << "," << head << "," << k << "," << m.keys[k].first << "," << m.keys[k].second << ","
          << buf << "\n";
    }
    // Window-local grid, upscaled so small windows stay visible.
    const std::size_t scale = std::max<std::size_t>(1, 64 / m.window);
    const auto [lo, hi] = std::minmax_element(m.weights.begin(), m.weights.end());
    io::Image img;
    img.width = img.height = m.window * scale;
    img.channels = 1;
    img.pixels.resize(img.width * img.height);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const double v = m.weights[(y / scale) * m.window + x / scale];
        const double t = *hi > *lo ? (v - *lo) / (*hi - *lo) : 1.0;
        img.pixels[y * img.width + x] = static_cast<std::uint8_t>(std::lround(t * 255.0));
      }
    io::write_image(dir / (file_safe(m.site) + "_q" + std::to_string(m.query_index) + "_h" + head + ".png"), img);
  }
  if (!csv) throw IoError((dir / "attention.csv").string() + ": write failed");
}

#define ROICODEC_INSTANTIATE(T)                                                                              \
  template std::vector<std::string> site_names(model::CodecModel<T>&);                                      \
  template std::vector<std::string> resolve_sites(model::CodecModel<T>&, const std::vector<std::string>&);   \
  template AttentionDump attention_dump(model::CodecModel<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                        const std::vector<std::string>&, const std::vector<Query>&);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::eval
