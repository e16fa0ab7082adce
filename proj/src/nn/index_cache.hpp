#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "roicodec/tensor/ops.hpp"

namespace roicodec::nn::detail {

// Layout permutations depend only on shapes; build each one once.
inline IndexMap cached_index(const std::string& key, const std::function<std::vector<std::size_t>()>& build) {
  static std::mutex mutex;
  static std::map<std::string, IndexMap> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto map = std::make_shared<const std::vector<std::size_t>>(build());
  cache.emplace(key, map);
  return map;
}

inline std::string key_of(const char* tag, std::initializer_list<std::size_t> dims) {
  std::string k(tag);
  for (auto d : dims) k += ':' + std::to_string(d);
  return k;
}

}  // namespace roicodec::nn::detail
