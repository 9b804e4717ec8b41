#pragma once

// Independent reference computations for the test suites. Nothing here calls
// the library code it is used to check.

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace oracles {

// Central differences of f at x.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step) {
  std::vector<double> g(x.size());
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + step;
    const double up = f(probe);
    probe[i] = keep - step;
    const double down = f(probe);
    probe[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double max_relative_error(std::span<const double> analytic, std::span<const double> reference) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - reference[i]) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

// LQ with f = v, l1 = |q|^2/2, g = c|q|^2/2 solved as a hyperbolic two-point
// boundary value problem: q = A cosh t + B sinh t, p = -q'.
struct LqBvp {
  double gain = 0.0;  // p0 = gain * q0

  LqBvp(double c, double horizon)
      : gain((c * std::cosh(horizon) + std::sinh(horizon)) / (std::cosh(horizon) + c * std::sinh(horizon))) {}

  // Optimal cost 1/2 <q0, p0>.
  double cost(std::span<const double> q0) const {
    double s = 0.0;
    for (double v : q0) s += v * v;
    return 0.5 * gain * s;
  }
  double q(double q0, double t) const { return q0 * (std::cosh(t) - gain * std::sinh(t)); }
  double p(double q0, double t) const { return q0 * (gain * std::cosh(t) - std::sinh(t)); }
};

// Perimeter over square root of area for any disk.
inline double disk_functional() { return 2.0 * std::sqrt(std::numbers::pi); }

}  // namespace oracles
