#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <type_traits>

namespace streamforge {

/// Element types a host array may describe. Only i64, f32, f64 and c128 can
/// be offloaded; the rest exist so host arrays of other numpy-like types can
/// be rejected with a proper error instead of being misread.
enum class DType : std::uint8_t { i64, f32, f64, c128, i32, u8 };

constexpr std::size_t elem_size(DType t) noexcept {
  switch (t) {
    case DType::i64: return 8;
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::c128: return 16;
    case DType::i32: return 4;
    case DType::u8: return 1;
  }
  return 0;
}

constexpr bool is_offloadable(DType t) noexcept {
  return t == DType::i64 || t == DType::f32 || t == DType::f64 ||
         t == DType::c128;
}

std::string_view to_string(DType t) noexcept;

template <typename T>
struct dtype_of;
template <>
struct dtype_of<std::int64_t> : std::integral_constant<DType, DType::i64> {};
template <>
struct dtype_of<float> : std::integral_constant<DType, DType::f32> {};
template <>
struct dtype_of<double> : std::integral_constant<DType, DType::f64> {};
template <>
struct dtype_of<std::complex<double>>
    : std::integral_constant<DType, DType::c128> {};
template <>
struct dtype_of<std::int32_t> : std::integral_constant<DType, DType::i32> {};
template <>
struct dtype_of<std::uint8_t> : std::integral_constant<DType, DType::u8> {};

template <typename T>
inline constexpr DType dtype_of_v = dtype_of<std::remove_cv_t<T>>::value;

/// Floating-point precision of generated kernels and of the solver.
enum class Precision : std::uint8_t { f32, f64 };

std::string_view to_string(Precision p) noexcept;

template <Precision P>
using precision_type = std::conditional_t<P == Precision::f32, float, double>;

}  // namespace streamforge
