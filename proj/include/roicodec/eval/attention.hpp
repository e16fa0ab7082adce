#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "roicodec/model/model.hpp"

namespace roicodec::eval {

struct Query {
  std::size_t y = 0, x = 0;  // pixel coordinates in the original image
};

// rows x cols query points at the centers of an even grid over the image.
std::vector<Query> grid_queries(std::size_t height, std::size_t width, std::size_t rows, std::size_t cols);

// One attention row: how the query token attends over the keys of its window.
struct AttentionMap {
  std::string site;
  std::size_t query_index = 0;
  Query pixel;
  bool head_average = false;
  std::size_t head = 0;                  // meaningful when !head_average
  std::size_t feature_y = 0, feature_x = 0;  // query position on the site's feature map
  std::size_t window = 0;                // side of the (possibly shrunk) window
  std::size_t shift = 0;
  std::vector<double> weights;           // window*window, window-local row-major
  std::vector<std::pair<std::size_t, std::size_t>> keys;  // feature-map position of each key
};

struct AttentionDump {
  std::vector<std::string> sites;
  std::vector<Query> queries;
  std::vector<AttentionMap> maps;  // site-major, then query, then heads followed by the average
};

// Site names known to the model, in forward order.
template <typename T>
std::vector<std::string> site_names(model::CodecModel<T>& model);

// Accepts site names, integer indices into site_names(), or the groups
// "all", "enc" and "dec". Throws ValidationError for unknown names and
// out-of-range indices.
template <typename T>
std::vector<std::string> resolve_sites(model::CodecModel<T>& model, const std::vector<std::string>& requested);

// Runs encoder, hyper decoder and decoder on the image with attention
// recording enabled at the requested sites and extracts one row per query,
// per head plus the head average.
template <typename T>
AttentionDump attention_dump(model::CodecModel<T>& model, const Tensor<T>& image, const Tensor<T>& mask,
                             const std::vector<std::string>& sites, const std::vector<Query>& queries);

// Writes <dir>/attention.csv and one 8-bit PNG per map, min-max normalized,
// named <site>_q<k>_h<head|mean>.png.
void write_attention_dump(const AttentionDump& dump, const std::filesystem::path& dir);

inline constexpr const char* kAttentionCsvHeader =
    "site,query,query_y,query_x,feature_y,feature_x,head,key,key_y,key_x,weight";

}  // namespace roicodec::eval
