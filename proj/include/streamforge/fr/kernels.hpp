#pragma once

#include <string>
#include <vector>

#include "streamforge/codegen.hpp"

namespace streamforge::fr {

/// Common flux of the upwind scheme: a*left when a > 0, else a*right.
double riemann_upwind(double left, double right, double a);

/// Per element: from the face values of the previous, own and next element
/// (each [left, right], point-major) writes the two flux jumps
/// jmp = f_common - a*u at the left and right face.
KernelSpec riemann_kernel_spec(Precision precision);

/// tdivf <- -rcpdjac*tdivf + S, one statement per variable; `srcex` holds the
/// C source-term expressions in terms of t and ploc.
KernelSpec negdivconf_kernel_spec(std::vector<std::string> srcex,
                                  Precision precision, int ndims = 1,
                                  int nvars = 1);

/// out <- u + c*k
KernelSpec rk_axpy_kernel_spec(Precision precision);

/// u <- u + dt/6*(k1 + 2*k2 + 2*k3 + k4)
KernelSpec rk4_update_kernel_spec(Precision precision);

}  // namespace streamforge::fr
