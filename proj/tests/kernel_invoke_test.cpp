#include <complex>
#include <cstring>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "streamforge/runtime.hpp"

namespace streamforge {
namespace {

Runtime make_runtime(int n_devices = 1) {
  RuntimeOptions opts;
  opts.n_devices = n_devices;
  opts.device.arena_bytes = 1 << 24;
  return Runtime(opts);
}

template <typename T>
std::int64_t arg_i64(void* p) {
  return *static_cast<std::int64_t*>(p);
}

TEST(KernelLibrary, LoadsBuiltinIntrinsics) {
  auto rt = make_runtime();
  auto lib = rt.device(0).load_library(kBuiltinGemm);
  EXPECT_EQ(lib.source(), LibrarySource::intrinsic_registry);
  EXPECT_EQ(lib.device_id(), 0);
  auto syms = lib.symbols();
  EXPECT_NE(std::find(syms.begin(), syms.end(), "mydgemm"), syms.end());
  EXPECT_NE(std::find(syms.begin(), syms.end(), "mysgemm"), syms.end());
  auto k = lib.get_kernel("mydgemm");
  EXPECT_EQ(k.name(), "mydgemm");
  EXPECT_EQ(k, lib.get_kernel("mydgemm"));
}

TEST(KernelLibrary, UnknownSymbolAndLibrary) {
  auto rt = make_runtime();
  auto lib = rt.device(0).load_library(kBuiltinGemm);
  try {
    lib.get_kernel("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::symbol_not_found);
  }
  try {
    rt.device(0).load_library("/nonexistent/libmissing.so");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::library_load_error);
  }
}

TEST(KernelLibrary, RegisteredNameMustBeUnique) {
  auto rt = make_runtime();
  rt.register_intrinsic_library("mine", {{"k", [](std::span<void* const>) {}}});
  EXPECT_THROW(rt.register_intrinsic_library("mine", {}), Error);
  EXPECT_THROW(rt.register_intrinsic_library(kBuiltinGemm, {}), Error);
}

TEST(KernelLibrary, NativeModule) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  auto lib = rt.device(0).load_library(STREAMFORGE_TEST_MODULE);
  EXPECT_EQ(lib.source(), LibrarySource::native_module);
  std::vector<double> v{1, 2, 3, 4};
  s.invoke(lib.get_kernel("scale_f64"),
           {HostArray::from(std::span(v)), std::int64_t{4}, 2.5});
  s.sync();
  EXPECT_EQ(v, (std::vector<double>{2.5, 5, 7.5, 10}));
  EXPECT_THROW(lib.get_kernel("missing_symbol"), Error);
  s.invoke(lib.get_kernel("no_args"), {});
  s.sync();
}

TEST(KernelLibrary, NativeHandleOutlivesLibraryObject) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  KernelHandle k;
  {
    auto lib = rt.device(0).load_library(STREAMFORGE_TEST_MODULE);
    k = lib.get_kernel("scale_f64");
  }
  std::vector<double> v{1, 2};
  s.invoke(k, {HostArray::from(std::span(v)), 2, 3.0});
  s.sync();
  EXPECT_EQ(v, (std::vector<double>{3, 6}));
}

TEST(Invoke, MarshalsRawHostArrays) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  rt.register_intrinsic_library(
      "t", {{"double_it", [](std::span<void* const> a) {
               auto* x = static_cast<double*>(a[0]);
               const auto n = *static_cast<std::int64_t*>(a[1]);
               for (std::int64_t i = 0; i < n; ++i) x[i] *= 2;
             }}});
  auto k = rt.device(0).load_library("t").get_kernel("double_it");
  std::vector<double> v{1, 2, 3};
  s.invoke(k, {HostArray::from(std::span(v)), 3});
  s.sync();
  EXPECT_EQ(v, (std::vector<double>{2, 4, 6}));

  auto log = s.request_log();
  std::vector<std::pair<RequestKind, RequestRole>> got;
  for (const auto& r : log) got.emplace_back(r.kind, r.role);
  using K = RequestKind;
  using R = RequestRole;
  std::vector<std::pair<K, R>> want{
      {K::alloc, R::marshal},        {K::transfer_h2d, R::array_copy_in},
      {K::alloc, R::marshal},        {K::transfer_h2d, R::scalar_copy_in},
      {K::invoke, R::user},          {K::transfer_d2h, R::array_copy_out},
      {K::dealloc, R::marshal},      {K::dealloc, R::marshal}};
  EXPECT_EQ(got, want);
  EXPECT_EQ(log[4].label, "double_it");
  EXPECT_EQ(rt.device(0).live_allocations(), 0u);
}

TEST(Invoke, ScalarEncodings) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  std::int64_t got_i = 0;
  double got_d = 0;
  std::complex<double> got_c;
  rt.register_intrinsic_library(
      "enc", {{"k", [&](std::span<void* const> a) {
                 std::memcpy(&got_i, a[0], 8);
                 std::memcpy(&got_d, a[1], 8);
                 std::memcpy(&got_c, a[2], 16);
               }}});
  auto k = rt.device(0).load_library("enc").get_kernel("k");
  s.invoke(k, {std::int32_t{-7}, 1.5f, std::complex<double>(1, -2)});
  s.sync();
  EXPECT_EQ(got_i, -7);
  EXPECT_EQ(got_d, 1.5);
  EXPECT_EQ(got_c, std::complex<double>(1, -2));
  auto log = s.request_log();
  EXPECT_EQ(log[1].nbytes, 8u);
  EXPECT_EQ(log[3].nbytes, 8u);
  EXPECT_EQ(log[5].nbytes, 16u);
}

TEST(Invoke, OffloadArrayAndDevicePointerArgsNeedNoTransfers) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  rt.register_intrinsic_library(
      "inc", {{"inc", [](std::span<void* const> a) {
                 auto* x = static_cast<double*>(a[0]);
                 auto* y = static_cast<double*>(a[1]);
                 x[0] += 1;
                 y[0] += 1;
               }}});
  auto k = rt.device(0).load_library("inc").get_kernel("inc");
  std::vector<double> host{10.0};
  auto arr = s.bind(HostArray::from(std::span(host)));
  auto raw = s.allocate_device_memory(8);
  double zero = 0;
  s.transfer_host2device(HostBufferRef::from(std::span(&zero, 1)), raw, 8);
  s.sync();
  const auto before = s.counters();
  s.invoke(k, {arr, raw});
  s.invoke(k, {arr, raw});
  s.sync();
  const auto after = s.counters();
  EXPECT_EQ(after.host_array_transfers, before.host_array_transfers);
  EXPECT_EQ(after.automatic_transfers(), before.automatic_transfers());
  EXPECT_EQ(after.kind(RequestKind::invoke), 2u);
  EXPECT_EQ(host[0], 10.0);  // host copy only changes on update_host
  arr.update_host();
  s.sync();
  EXPECT_EQ(host[0], 12.0);
}

TEST(Invoke, KernelFailureIsDeferred) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  rt.register_intrinsic_library(
      "bad", {{"boom", [](std::span<void* const>) {
                 throw std::runtime_error("kaput");
               }}});
  auto k = rt.device(0).load_library("bad").get_kernel("boom");
  std::vector<double> v(4, 1.0);
  s.invoke(k, {HostArray::from(std::span(v)), 1});
  try {
    s.sync();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kernel_failure);
    EXPECT_NE(std::string(e.what()).find("kaput"), std::string::npos);
    EXPECT_EQ(*e.seq(), 5u);
  }
  // Staging buffers are released even though the invoke failed.
  EXPECT_EQ(rt.device(0).live_allocations(), 0u);
  auto log = s.request_log();
  EXPECT_EQ(log[5].status, RequestStatus::failed);  // copy-out skipped
  EXPECT_EQ(log[6].status, RequestStatus::done);    // staging dealloc ran
}

TEST(Invoke, RejectsKernelFromOtherDevice) {
  auto rt = make_runtime(2);
  auto k = rt.device(1).load_library(kBuiltinGemm).get_kernel("mydgemm");
  auto s = rt.get_default_stream(0);
  try {
    s.invoke(k, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_argument);
  }
  EXPECT_TRUE(s.request_log().empty());
}

TEST(Invoke, RejectsBadHostArrays) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  auto k = rt.device(0).load_library(kBuiltinGemm).get_kernel("mydgemm");
  std::vector<std::int32_t> ints(4);
  EXPECT_THROW(s.invoke(k, {HostArray::from(std::span(ints))}), Error);
  std::vector<double> v(6);
  HostArray strided = HostArray::from(std::span(v), {3});
  strided.strides = {16};
  EXPECT_THROW(s.invoke(k, {strided}), Error);
  EXPECT_TRUE(s.request_log().empty());
}

TEST(Invoke, PositionalArgumentsReachTheirSlots) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  auto lib = rt.device(0).load_library(STREAMFORGE_TEST_MODULE);
  std::vector<std::int64_t> out(8, 0);
  std::vector<std::int64_t> a3{33};
  auto dev = s.bind(HostArray::from(std::span(a3)));
  std::vector<std::int64_t> a5{55};
  auto raw = s.allocate_device_memory(8);
  s.transfer_host2device(HostBufferRef::from(std::span(a5)), raw, 8);
  s.invoke(lib.get_kernel("gather8"),
           {HostArray::from(std::span(out)), 10, 11, 12, dev, 14, raw, 16, 17});
  s.sync();
  EXPECT_EQ(out, (std::vector<std::int64_t>{10, 11, 12, 33, 14, 55, 16, 17}));
}

TEST(Gemm, SmallKnownProduct) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  auto k = rt.device(0).load_library(kBuiltinGemm).get_kernel("mydgemm");
  // [1 2 3; 4 5 6] * [7 8; 9 10; 11 12] = [58 64; 139 154]
  std::vector<double> A{1, 2, 3, 4, 5, 6}, B{7, 8, 9, 10, 11, 12}, C{1, 1, 1, 1};
  s.invoke(k, {HostArray::from(std::span(A)), HostArray::from(std::span(B)),
               HostArray::from(std::span(C)), 2, 2, 3, 1.0, 0.0});
  s.sync();
  EXPECT_EQ(C, (std::vector<double>{58, 64, 139, 154}));
  s.invoke(k, {HostArray::from(std::span(A)), HostArray::from(std::span(B)),
               HostArray::from(std::span(C)), 2, 2, 3, 2.0, -1.0});
  s.sync();
  EXPECT_EQ(C, (std::vector<double>{58, 64, 139, 154}));
}

TEST(Gemm, BetaZeroIgnoresGarbageInC) {
  auto rt = make_runtime();
  auto s = rt.get_default_stream(0);
  auto k = rt.device(0).load_library(kBuiltinGemm).get_kernel("mysgemm");
  std::vector<float> A{1, 2}, B{3, 4};
  std::vector<float> C{std::numeric_limits<float>::quiet_NaN()};
  s.invoke(k, {HostArray::from(std::span(A)), HostArray::from(std::span(B)),
               HostArray::from(std::span(C)), 1, 1, 2, 1.0, 0.0});
  s.sync();
  EXPECT_EQ(C[0], 11.0f);
}

}  // namespace
}  // namespace streamforge
