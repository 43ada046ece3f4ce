#include "streamforge/fr/operators.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "streamforge/error.hpp"

namespace streamforge::fr {

namespace {

// (P_n(x), P_n'(x)) by the three-term recurrences.
std::pair<double, double> legendre_pair(int n, double x) {
  double p0 = 1.0, p1 = x;
  double d0 = 0.0, d1 = 1.0;
  if (n == 0) return {p0, d0};
  for (int k = 1; k < n; ++k) {
    const double p2 = ((2 * k + 1) * x * p1 - k * p0) / (k + 1);
    const double d2 = d0 + (2 * k + 1) * p1;
    p0 = p1;
    p1 = p2;
    d0 = d1;
    d1 = d2;
  }
  return {p1, d1};
}

}  // namespace

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      t(j, i) = (*this)(i, j);
    }
  }
  return t;
}

double legendre(int n, double x) { return legendre_pair(n, x).first; }
double legendre_derivative(int n, double x) {
  return legendre_pair(n, x).second;
}

Quadrature gauss_legendre(int n) {
  if (n < 1) {
    throw Error(Errc::invalid_argument,
                "quadrature needs at least one point, got " + std::to_string(n));
  }
  Quadrature q;
  q.points.resize(static_cast<std::size_t>(n));
  q.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // Chebyshev-like initial guess for the i-th root from the right.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre_pair(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-17) break;
    }
    const double dp = legendre_pair(n, x).second;
    const auto slot = static_cast<std::size_t>(n - 1 - i);
    q.points[slot] = x;
    q.weights[slot] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  if (n % 2 == 1) {
    q.points[static_cast<std::size_t>(n / 2)] = 0.0;
  }
  return q;
}

std::vector<double> lagrange_values(const std::vector<double>& nodes,
                                    double x) {
  std::vector<double> out(nodes.size(), 1.0);
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (k != j) {
        out[j] *= (x - nodes[k]) / (nodes[j] - nodes[k]);
      }
    }
  }
  return out;
}

Matrix lagrange_matrix(const std::vector<double>& nodes,
                       const std::vector<double>& targets) {
  Matrix m(targets.size(), nodes.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto row = lagrange_values(nodes, targets[i]);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      m(i, j) = row[j];
    }
  }
  return m;
}

FROperators build_operators(int p) {
  if (p < 1 || p > 10) {
    throw Error(Errc::invalid_argument,
                "polynomial order must be in 1..10, got " + std::to_string(p));
  }
  FROperators ops;
  ops.p = p;
  auto quad = gauss_legendre(p + 1);
  ops.xi = std::move(quad.points);
  ops.weights = std::move(quad.weights);
  const std::size_t n = ops.xi.size();

  ops.m_interp = lagrange_matrix(ops.xi, {-1.0, 1.0});

  // Barycentric form; the diagonal is the negated row sum so constants are
  // annihilated to rounding.
  std::vector<double> bw(n, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      if (k != j) bw[j] /= ops.xi[j] - ops.xi[k];
    }
  }
  ops.d = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double diag = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      ops.d(i, j) = (bw[j] / bw[i]) / (ops.xi[i] - ops.xi[j]);
      diag -= ops.d(i, j);
    }
    ops.d(i, i) = diag;
  }

  const double sign = (p % 2 == 0) ? 1.0 : -1.0;
  ops.c_corr = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = legendre_derivative(p, ops.xi[i]);
    const double dp1 = legendre_derivative(p + 1, ops.xi[i]);
    ops.c_corr(i, 0) = sign * 0.5 * (dp - dp1);
    ops.c_corr(i, 1) = 0.5 * (dp + dp1);
  }
  return ops;
}

}  // namespace streamforge::fr
