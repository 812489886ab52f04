#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature with bisection of the
// worst panel, in the style of QUADPACK's QAG.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "wmd/error.hpp"

namespace wmd {

struct QuadratureOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-12;
  int max_depth = 40;
  std::size_t max_panels = 20000;
  /// Interior points where the initial partition is split.
  std::vector<double> breakpoints;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
  std::size_t panels = 0;
  int depth = 0;
  bool converged = false;
};

/// Defaults for integrands on [0,1]: one panel on [0,0.9] and ten on [0.9,1],
/// where powers like r^199 concentrate their mass.
inline QuadratureOptions unit_interval_options() {
  QuadratureOptions o;
  o.breakpoints = {0.9};
  for (int i = 1; i < 10; ++i) o.breakpoints.push_back(0.9 + 0.01 * i);
  return o;
}

namespace detail {

// Kronrod abscissae (descending) on [-1,1]; odd indices are the 7-point Gauss nodes.
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  int depth;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gauss_kronrod_15(F& f, double a, double b, int depth) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  double abs_sum = std::abs(kronrod);
  std::array<double, 7> f1{}, f2{};
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    f1[j] = f(center - dx);
    f2[j] = f(center + dx);
    const double pair = f1[j] + f2[j];
    kronrod += kWgk[j] * pair;
    abs_sum += kWgk[j] * (std::abs(f1[j]) + std::abs(f2[j]));
    if (j % 2 == 1) gauss += kWg[j / 2] * pair;
  }
  const double mean = 0.5 * kronrod;
  double asc = kWgk[7] * std::abs(fc - mean);
  for (int j = 0; j < 7; ++j) asc += kWgk[j] * (std::abs(f1[j] - mean) + std::abs(f2[j] - mean));

  const double value = kronrod * half;
  asc *= std::abs(half);
  abs_sum *= std::abs(half);
  double err = std::abs((kronrod - gauss) * half);
  if (asc != 0.0 && err != 0.0) err = asc * std::min(1.0, std::pow(200.0 * err / asc, 1.5));
  const double eps = std::numeric_limits<double>::epsilon();
  if (abs_sum > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * abs_sum, err);
  if (!std::isfinite(value)) err = std::numeric_limits<double>::infinity();
  return Panel{a, b, value, err, depth};
}

}  // namespace detail

/// Integrates f over [a,b]. Never throws: non-convergence is reported through
/// QuadratureResult::converged.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
  std::vector<double> cuts{a};
  for (double x : opt.breakpoints) {
    if (x > a && x < b) cuts.push_back(x);
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());

  std::priority_queue<detail::Panel> open;
  std::vector<detail::Panel> settled;
  QuadratureResult res;
  double value = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    auto p = detail::gauss_kronrod_15(f, cuts[i], cuts[i + 1], 0);
    res.evaluations += 15;
    value += p.value;
    error += p.error;
    open.push(p);
  }

  auto tolerance = [&] { return std::max(opt.abs_tol, opt.rel_tol * std::abs(value)); };
  while (!open.empty() && !(error <= tolerance())) {
    if (!std::isfinite(value)) break;
    if (open.size() + settled.size() >= opt.max_panels) break;
    detail::Panel worst = open.top();
    open.pop();
    if (worst.depth >= opt.max_depth) {
      settled.push_back(worst);
      continue;
    }
    const double mid = 0.5 * (worst.a + worst.b);
    auto left = detail::gauss_kronrod_15(f, worst.a, mid, worst.depth + 1);
    auto right = detail::gauss_kronrod_15(f, mid, worst.b, worst.depth + 1);
    res.evaluations += 30;
    res.depth = std::max(res.depth, worst.depth + 1);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    open.push(left);
    open.push(right);
  }

  // Re-sum from the panels to shed accumulated cancellation in the running totals.
  value = 0.0;
  error = 0.0;
  res.panels = open.size() + settled.size();
  while (!open.empty()) {
    settled.push_back(open.top());
    open.pop();
  }
  for (const auto& p : settled) {
    value += p.value;
    error += p.error;
  }
  res.value = value;
  res.error = error;
  res.converged = std::isfinite(value) && error <= std::max(opt.abs_tol, opt.rel_tol * std::abs(value));
  return res;
}

/// integrate() that throws NumericError with diagnostics when the tolerance is not met.
template <class F>
double integrate_or_throw(F&& f, double a, double b, const QuadratureOptions& opt, const char* what) {
  const auto r = integrate(f, a, b, opt);
  if (!r.converged) {
    throw NumericError(std::string("quadrature for ") + what + " did not converge: value=" +
                       std::to_string(r.value) + " error=" + std::to_string(r.error) +
                       " panels=" + std::to_string(r.panels) + " depth=" + std::to_string(r.depth));
  }
  return r.value;
}

}  // namespace wmd
