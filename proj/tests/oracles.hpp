#pragma once

// Independent brute-force oracles used by the tests only.

#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "sosmm/linalg.hpp"
#include "sosmm/polynomial.hpp"

namespace oracles {

using sosmm::Matrix;
using sosmm::Polynomial;
using sosmm::Vector;

struct GridResult {
  double value = std::numeric_limits<double>::infinity();
  double arg = 0.0;
};

// Minimum of f over an n-point grid on [0,1).
inline GridResult grid_min_1d(const std::function<double(double)>& f, int n) {
  GridResult out;
  for (int k = 0; k < n; ++k) {
    const double x = static_cast<double>(k) / n;
    const double v = f(x);
    if (v < out.value) {
      out.value = v;
      out.arg = x;
    }
  }
  return out;
}

inline GridResult grid_min_1d(const Polynomial& p, int n) {
  return grid_min_1d(
      [&](double x) {
        Vector v(1);
        v << x;
        return p.evaluate_unchecked(v);
      },
      n);
}

// min over x-grid of max_j g_j(x), all on [0,1).
inline GridResult grid_minmax_1d(const std::vector<Polynomial>& gs, int n) {
  GridResult out;
  Vector v(1);
  for (int k = 0; k < n; ++k) {
    v[0] = static_cast<double>(k) / n;
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& g : gs) m = std::max(m, g.evaluate_unchecked(v));
    if (m < out.value) {
      out.value = m;
      out.arg = v[0];
    }
  }
  return out;
}

// Nested grid oracle for min_x max_y g(x, y) on [0,1)^2.
inline GridResult grid_minmax_2d(const std::function<double(double, double)>& g, int nx, int ny) {
  GridResult out;
  for (int i = 0; i < nx; ++i) {
    const double x = static_cast<double>(i) / nx;
    double inner = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < ny; ++j) inner = std::max(inner, g(x, static_cast<double>(j) / ny));
    if (inner < out.value) {
      out.value = inner;
      out.arg = x;
    }
  }
  return out;
}

// Exhaustive min-max over the Boolean cube {-1,1}^d.
inline double cube_minmax(const std::vector<Polynomial>& gs, int d) {
  double best = std::numeric_limits<double>::infinity();
  for (long long mask = 0; mask < (1LL << d); ++mask) {
    Vector x(d);
    for (int j = 0; j < d; ++j) x[j] = ((mask >> j) & 1) ? 1.0 : -1.0;
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& g : gs) m = std::max(m, g.evaluate_unchecked(x));
    best = std::min(best, m);
  }
  return best;
}

// Distance on the unit circle [0,1).
inline double torus_dist(double a, double b) {
  double d = std::abs(a - b);
  while (d > 0.5) d = std::abs(d - 1.0);
  return d;
}

}  // namespace oracles
