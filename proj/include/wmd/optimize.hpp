#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace wmd {

struct MinimizeResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
  /// Final bracket; the whole search interval when the objective is flat.
  double lo = 0.0;
  double hi = 0.0;
  bool flat = false;
};

struct GoldenOptions {
  double x_tol = 1e-8;
  int max_iterations = 400;
  /// Objective spread below which the interval counts as flat.
  double flat_tol = 1e-10;
};

/// Golden-section search for a minimum of f on [lo, hi]. Non-finite values are
/// treated as +inf so divergent regions push the bracket away.
template <class F>
MinimizeResult golden_section(F&& f, double lo, double hi, const GoldenOptions& opt = {}) {
  auto eval = [&](double x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  // Flatness probe on an interior grid.
  double fmin = std::numeric_limits<double>::infinity();
  double fmax = -std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 7; ++i) {
    const double v = eval(lo + (hi - lo) * i / 8.0);
    fmin = std::min(fmin, v);
    fmax = std::max(fmax, v);
  }
  if (std::isfinite(fmax) && fmax - fmin <= opt.flat_tol * (1.0 + std::abs(fmin))) {
    const double mid = 0.5 * (lo + hi);
    return MinimizeResult{mid, eval(mid), 0, lo, hi, true};
  }

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = eval(c), fd = eval(d);
  int it = 0;
  while (std::abs(b - a) > opt.x_tol && it < opt.max_iterations) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
    }
    ++it;
  }
  const double x = fc <= fd ? c : d;
  return MinimizeResult{x, std::min(fc, fd), it, a, b, false};
}

/// Grows [lo, hi] geometrically until f(hi) stops decreasing or turns non-finite,
/// giving a bracket for a minimum on [lo, inf). Returns the upper end.
template <class F>
double expand_upper_bracket(F&& f, double lo, double hi, double limit = 1e6, double growth = 2.0) {
  double prev = f(hi);
  while (hi < limit && std::isfinite(prev)) {
    const double next_hi = lo + (hi - lo) * growth;
    const double v = f(next_hi);
    if (!std::isfinite(v) || v >= prev) return next_hi;
    hi = next_hi;
    prev = v;
  }
  return hi;
}

}  // namespace wmd
