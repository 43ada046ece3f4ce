#pragma once

#include <cstddef>
#include <vector>

namespace streamforge::fr {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }
  Matrix transposed() const;
};

struct Quadrature {
  std::vector<double> points;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1], points ascending.
Quadrature gauss_legendre(int n);

/// P_n(x) and P_n'(x).
double legendre(int n, double x);
double legendre_derivative(int n, double x);

/// Values of the Lagrange basis polynomials on `nodes` at x.
std::vector<double> lagrange_values(const std::vector<double>& nodes, double x);

/// Matrix E with E(i, j) = l_j(targets[i]).
Matrix lagrange_matrix(const std::vector<double>& nodes,
                       const std::vector<double>& targets);

/// Per-element operators of a degree-p discretisation on the reference
/// element [-1, 1].
struct FROperators {
  int p = 0;
  std::vector<double> xi;       // p+1 Gauss-Legendre solution points
  std::vector<double> weights;  // matching quadrature weights
  Matrix m_interp;              // 2 x (p+1): values at the faces -1, +1
  Matrix d;                     // (p+1) x (p+1): d(i, j) = l_j'(xi_i)
  Matrix c_corr;                // (p+1) x 2: left/right correction slopes

  std::size_t npts() const noexcept { return xi.size(); }
};

/// Corrections are the derivatives of the left and right Radau polynomials
/// g_L = (-1)^p (P_p - P_{p+1}) / 2 and g_R = (P_p + P_{p+1}) / 2.
/// Throws Error(invalid_argument) unless 1 <= p <= 10.
FROperators build_operators(int p);

}  // namespace streamforge::fr
