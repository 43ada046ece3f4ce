#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "streamforge/memory.hpp"
#include "streamforge/types.hpp"

namespace streamforge {

/// Non-owning description of a typed host array: dtype, shape and an
/// optional byte-stride vector (empty means row-major contiguous).
struct HostArray {
  DType dtype = DType::f64;
  std::vector<std::int64_t> shape;
  std::byte* data = nullptr;
  std::vector<std::int64_t> strides;

  template <typename T>
  static HostArray from(std::span<T> values, std::vector<std::int64_t> shape) {
    return HostArray{dtype_of_v<T>, std::move(shape),
                     const_cast<std::byte*>(
                         reinterpret_cast<const std::byte*>(values.data())),
                     {}};
  }

  /// 1-D view of the whole span.
  template <typename T>
  static HostArray from(std::span<T> values) {
    return from(values, {static_cast<std::int64_t>(values.size())});
  }

  std::size_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::int64_t b) {
                             return a * static_cast<std::size_t>(b);
                           });
  }
  std::size_t nbytes() const { return size() * elem_size(dtype); }

  bool is_contiguous() const {
    if (strides.empty()) {
      return true;
    }
    if (strides.size() != shape.size()) {
      return false;
    }
    std::int64_t expect = static_cast<std::int64_t>(elem_size(dtype));
    for (std::size_t i = shape.size(); i-- > 0;) {
      if (shape[i] != 1 && strides[i] != expect) {
        return false;
      }
      expect *= shape[i];
    }
    return true;
  }

  HostBufferRef buffer() const { return {data, nbytes(), true}; }
};

}  // namespace streamforge
