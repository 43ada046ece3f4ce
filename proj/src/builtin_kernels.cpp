#include <algorithm>
#include <complex>
#include <cstdint>
#include <cstring>
#include <vector>

#include "streamforge/kernel.hpp"

namespace streamforge {

namespace {

template <typename T>
T* as(void* p) {
  return static_cast<T*>(p);
}

std::int64_t count_arg(void* p) { return *as<std::int64_t>(p); }

// Scalars are staged as int64, double or complex<double>; convert to the
// element type of the array being processed.
template <typename T>
T scalar_arg(void* p) {
  if constexpr (std::is_same_v<T, std::int64_t>) {
    return *as<std::int64_t>(p);
  } else if constexpr (std::is_same_v<T, std::complex<double>>) {
    return *as<std::complex<double>>(p);
  } else {
    return static_cast<T>(*as<double>(p));
  }
}

template <typename T>
void add_elementwise(IntrinsicKernelMap& m, const std::string& suffix) {
  m["fill_" + suffix] = [](std::span<void* const> a) {
    T* x = as<T>(a[0]);
    std::fill_n(x, count_arg(a[1]), scalar_arg<T>(a[2]));
  };
  m["zero_" + suffix] = [](std::span<void* const> a) {
    std::fill_n(as<T>(a[0]), count_arg(a[1]), T{});
  };
  m["add_" + suffix] = [](std::span<void* const> a) {
    T* x = as<T>(a[0]);
    const T* y = as<T>(a[1]);
    const auto n = count_arg(a[2]);
    for (std::int64_t i = 0; i < n; ++i) {
      x[i] += y[i];
    }
  };
  m["multiply_" + suffix] = [](std::span<void* const> a) {
    T* x = as<T>(a[0]);
    const T* y = as<T>(a[1]);
    const auto n = count_arg(a[2]);
    for (std::int64_t i = 0; i < n; ++i) {
      x[i] *= y[i];
    }
  };
}

// C = alpha*A*B + beta*C, all row-major; A is m x k, B is k x n.
// With beta == 0 the prior contents of C are never read.
template <typename T>
void gemm(const T* A, const T* B, T* C, std::int64_t m, std::int64_t n,
          std::int64_t k, T alpha, T beta) {
  constexpr std::int64_t kRowBlock = 4;
  constexpr std::int64_t kDepthBlock = 128;
  std::vector<T> acc(static_cast<std::size_t>(kRowBlock * n));
  for (std::int64_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::int64_t rows = std::min(kRowBlock, m - i0);
    std::fill(acc.begin(), acc.end(), T{});
    for (std::int64_t p0 = 0; p0 < k; p0 += kDepthBlock) {
      const std::int64_t p1 = std::min(k, p0 + kDepthBlock);
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* a = A + (i0 + r) * k;
        T* out = acc.data() + r * n;
        for (std::int64_t p = p0; p < p1; ++p) {
          const T ap = a[p];
          const T* b = B + p * n;
          for (std::int64_t j = 0; j < n; ++j) {
            out[j] += ap * b[j];
          }
        }
      }
    }
    for (std::int64_t r = 0; r < rows; ++r) {
      T* c = C + (i0 + r) * n;
      const T* out = acc.data() + r * n;
      if (beta == T{}) {
        for (std::int64_t j = 0; j < n; ++j) {
          c[j] = alpha * out[j];
        }
      } else {
        for (std::int64_t j = 0; j < n; ++j) {
          c[j] = alpha * out[j] + beta * c[j];
        }
      }
    }
  }
}

template <typename T>
IntrinsicKernel gemm_kernel() {
  return [](std::span<void* const> a) {
    gemm<T>(as<const T>(a[0]), as<const T>(a[1]), as<T>(a[2]), count_arg(a[3]),
            count_arg(a[4]), count_arg(a[5]),
            static_cast<T>(*as<double>(a[6])),
            static_cast<T>(*as<double>(a[7])));
  };
}

}  // namespace

std::map<std::string, IntrinsicKernelMap> builtin_intrinsic_libraries() {
  IntrinsicKernelMap elementwise;
  add_elementwise<std::int64_t>(elementwise, "i64");
  add_elementwise<float>(elementwise, "f32");
  add_elementwise<double>(elementwise, "f64");
  add_elementwise<std::complex<double>>(elementwise, "c128");

  IntrinsicKernelMap blas;
  blas["mydgemm"] = gemm_kernel<double>();
  blas["mysgemm"] = gemm_kernel<float>();

  return {{kBuiltinElementwise, std::move(elementwise)},
          {kBuiltinGemm, std::move(blas)}};
}

}  // namespace streamforge
