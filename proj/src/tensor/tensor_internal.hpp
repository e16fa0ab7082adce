#pragma once

#include <cmath>

namespace roicodec::detail {

template <typename T>
inline T stable_sigmoid(T v) {
  if (v >= T(0)) {
    T e = std::exp(-v);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(v);
  return e / (T(1) + e);
}

}  // namespace roicodec::detail
