#include "streamforge/fr/kernels.hpp"

#include <atomic>

#include "fr_detail.hpp"
#include "streamforge/error.hpp"

namespace streamforge::fr {

namespace {

KernelParam array(const char* name, Intent intent, std::int64_t extent = 1,
                  bool indexed = false) {
  return {name, intent, BaseType::fpdtype, extent, indexed};
}

KernelParam scalar(const char* name) {
  return {name, Intent::scalar, BaseType::fpdtype, 1, false};
}

std::atomic<std::uint64_t> g_library_serial{0};

}  // namespace

double riemann_upwind(double left, double right, double a) {
  return a > 0 ? a * left : a * right;
}

KernelSpec riemann_kernel_spec(Precision precision) {
  KernelSpec spec;
  spec.name = "riemann";
  spec.params = {array("prev", Intent::in, 2), array("cur", Intent::in, 2),
                 array("next", Intent::in, 2), scalar("a"),
                 array("jmp", Intent::out, 2)};
  spec.body = {
      std::string("fpdtype_t fl = (a > 0 ? a*prev[1] : a*cur[0]);"),
      std::string("fpdtype_t fr = (a > 0 ? a*cur[1] : a*next[0]);"),
      std::string("jmp[0] = fl - a*cur[0];"),
      std::string("jmp[1] = fr - a*cur[1];"),
  };
  spec.context.precision = precision;
  spec.layout = PointLayout::point_major;
  return spec;
}

KernelSpec negdivconf_kernel_spec(std::vector<std::string> srcex,
                                  Precision precision, int ndims, int nvars) {
  KernelSpec spec;
  spec.name = "negdivconf";
  spec.params = {scalar("t"), array("tdivf", Intent::inout, nvars, true),
                 array("ploc", Intent::in, ndims, true),
                 array("rcpdjac", Intent::in)};
  BodyLoop loop;
  loop.index = "i";
  loop.bound = "nvars";
  loop.element = "ex";
  loop.list = "srcex";
  loop.statements = {"tdivf[${i}] = -rcpdjac*tdivf[${i}] + ${ex};"};
  spec.body = {loop};
  spec.context.ndims = ndims;
  spec.context.nvars = nvars;
  spec.context.precision = precision;
  spec.context.expr_lists["srcex"] = std::move(srcex);
  return spec;
}

KernelSpec rk_axpy_kernel_spec(Precision precision) {
  KernelSpec spec;
  spec.name = "rk_axpy";
  spec.params = {array("out", Intent::out), array("u", Intent::in),
                 array("k", Intent::in), scalar("c")};
  spec.body = {std::string("out = u + c*k;")};
  spec.context.precision = precision;
  return spec;
}

KernelSpec rk4_update_kernel_spec(Precision precision) {
  KernelSpec spec;
  spec.name = "rk4_update";
  spec.params = {array("u", Intent::inout), array("k1", Intent::in),
                 array("k2", Intent::in),   array("k3", Intent::in),
                 array("k4", Intent::in),   scalar("dt")};
  spec.body = {std::string("u = u + dt/6.0*(k1 + 2.0*k2 + 2.0*k3 + k4);")};
  spec.context.precision = precision;
  return spec;
}

namespace detail {

KernelSet::KernelSet(Runtime& runtime, int device_id, SolverBackend backend,
                     CompileOptions compile)
    : runtime_(&runtime),
      device_id_(device_id),
      backend_(backend),
      compile_(std::move(compile)) {}

std::size_t KernelSet::add(const KernelSpec& spec, IntrinsicFactory intrinsic) {
  sources_.push_back(generate_pointwise_source(spec));
  factories_.push_back(std::move(intrinsic));
  generated_.push_back(true);
  helpers_.emplace_back();
  return sources_.size() - 1;
}

std::size_t KernelSet::add_intrinsic(const std::string& name,
                                     IntrinsicKernel kernel) {
  GeneratedSource src;
  src.kernel_name = name;
  src.entry_symbol = name;
  sources_.push_back(std::move(src));
  factories_.emplace_back();
  generated_.push_back(false);
  helpers_.push_back(std::move(kernel));
  return sources_.size() - 1;
}

void KernelSet::build() {
  if (!handles_.empty()) {
    throw Error(Errc::invalid_state, "kernel set already built");
  }
  const auto device = runtime_->device(device_id_);
  IntrinsicKernelMap intrinsics;
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    if (!generated_[i]) {
      intrinsics[sources_[i].entry_symbol] = helpers_[i];
    } else if (backend_ == SolverBackend::intrinsic) {
      intrinsics[sources_[i].entry_symbol] = factories_[i](sources_[i]);
    }
  }
  KernelLibrary intrinsic_lib;
  if (!intrinsics.empty()) {
    const std::string name =
        "streamforge-fr-" + std::to_string(++g_library_serial);
    runtime_->register_intrinsic_library(name, std::move(intrinsics));
    intrinsic_lib = device.load_library(name);
    libraries_.push_back(intrinsic_lib);
  }
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    if (!generated_[i] || backend_ == SolverBackend::intrinsic) {
      handles_.push_back(intrinsic_lib.get_kernel(sources_[i].entry_symbol));
    } else {
      const auto path = compile_to_library(sources_[i], compile_);
      auto lib = device.load_library(path.string());
      handles_.push_back(lib.get_kernel(sources_[i].entry_symbol));
      libraries_.push_back(std::move(lib));
    }
  }
}

SlicedBlock allocate_sliced(OffloadStream& stream,
                            const std::vector<std::size_t>& sizes) {
  constexpr std::size_t kAlign = 64;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (auto s : sizes) {
    offsets.push_back(total);
    total += (s + kAlign - 1) / kAlign * kAlign;
  }
  SlicedBlock out;
  out.block = stream.allocate_device_memory(total == 0 ? kAlign : total, kAlign);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    out.parts.push_back(out.block.slice(offsets[i], sizes[i]));
    out.used = offsets[i] + sizes[i];
  }
  return out;
}

}  // namespace detail

}  // namespace streamforge::fr
