#pragma once

// Rejection thresholds for both error regimes and both schemes, plus the
// fixed-alpha (R) and sum-of-errors (S) error exponents evaluated at the
// least-favourable configurations.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "wmd/core.hpp"
#include "wmd/generation.hpp"
#include "wmd/normal.hpp"
#include "wmd/optimize.hpp"
#include "wmd/quadrature.hpp"
#include "wmd/statistics.hpp"

namespace wmd {

enum class Regime { fixed_alpha, sum };

inline std::string_view to_string(Regime r) { return r == Regime::fixed_alpha ? "fixed_alpha" : "sum"; }

inline Regime parse_regime(std::string_view s) {
  if (s == "fixed_alpha" || s == "fixed-alpha" || s == "fixed") return Regime::fixed_alpha;
  if (s == "sum") return Regime::sum;
  throw ValidationError("unknown regime '" + std::string(s) + "'");
}

/// How a Gumbel sum-of-errors threshold is formed.
enum class SumThresholdRule {
  /// log(a*/(1-a*)), independent of n; the rule attached to the optimal score.
  constant,
  /// n * (log M0(t1) - log M1(t2)) / (t1 + t2) at the minimisers of the S objective,
  /// i.e. the point where the two Chernoff bounds meet. Scales with n.
  chernoff_balanced,
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of h(U), U ~ U(0,1).
template <class H>
Moments moments_h0(const H& h) {
  const auto opt = unit_interval_options();
  const double mean = integrate_or_throw([&](double r) { return h(r); }, 0.0, 1.0, opt, "E0 h");
  const double second = integrate_or_throw([&](double r) { const double v = h(r); return v * v; }, 0.0, 1.0, opt,
                                           "E0 h^2");
  return Moments{mean, std::max(0.0, second - mean * mean)};
}

struct ThresholdSpec {
  Regime regime = Regime::fixed_alpha;
  Scheme scheme = Scheme::gumbel;
  Mode mode = Mode::complete;
  std::size_t n = 0;
  double threshold = kNaN;
  double alpha = kNaN;
  double delta = kNaN;
  double theta = kNaN;
  double gamma = kNaN;
  /// alpha* / beta* of the sum-of-errors integral, when one was solved.
  std::optional<double> optimum;
  std::string optimum_name;
  double objective = kNaN;
  bool flat = false;
};

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1), got " + std::to_string(alpha));
}

/// n E0 h + z_{1-alpha} sqrt(n Var0 h).
inline ThresholdSpec fixed_alpha_threshold(const Moments& mom, std::size_t n, double alpha) {
  if (n < 1) throw ValidationError("n must be positive");
  check_alpha(alpha);
  ThresholdSpec spec;
  spec.n = n;
  spec.alpha = alpha;
  const double nn = static_cast<double>(n);
  const double z = alpha == 0.5 ? 0.0 : inverse_normal_cdf(1.0 - alpha);
  spec.threshold = nn * mom.mean + z * std::sqrt(nn * mom.variance);
  return spec;
}

inline ThresholdSpec fixed_alpha_threshold(const ScoreFunction& h, std::size_t n, double alpha) {
  auto spec = fixed_alpha_threshold(moments_h0(h), n, alpha);
  spec.mode = h.kind() == ScoreKind::opt_partial ? Mode::partial : Mode::complete;
  spec.delta = h.delta();
  spec.theta = h.theta();
  return spec;
}

struct SumOptimum {
  double optimum = kNaN;
  double objective = kNaN;
  double threshold = kNaN;
  bool flat = false;
  double lo = kNaN;
  double hi = kNaN;
};

namespace detail {

/// Minimises a -> integral_0^1 exp(a h(r)) dr over (0,1) and returns log(a*/(1-a*)).
inline SumOptimum solve_power_integral(const ScoreFunction& h) {
  const auto qopt = unit_interval_options();
  auto objective = [&](double a) {
    const auto r = integrate([&](double x) { return std::exp(a * h(x)); }, 0.0, 1.0, qopt);
    return r.converged ? r.value : std::numeric_limits<double>::infinity();
  };
  const auto res = golden_section(objective, 0.0, 1.0, GoldenOptions{1e-8, 400, 1e-11});
  SumOptimum out;
  out.optimum = res.x;
  out.objective = res.fx;
  out.flat = res.flat;
  out.lo = res.lo;
  out.hi = res.hi;
  out.threshold = std::log(res.x / (1.0 - res.x));
  return out;
}

}  // namespace detail

/// alpha* = argmin_a integral (k r^{d/(1-d)} + r^{dt/(1-dt)})^a dr; threshold log(a*/(1-a*)).
inline SumOptimum sum_threshold_gumbel_complete(double delta) {
  return detail::solve_power_integral(ScoreFunction::opt_complete(delta));
}

/// Partial-inheritance analogue; the integrand branch follows delta >= 1/2 or < 1/2.
inline SumOptimum sum_threshold_gumbel_partial(double delta, double theta) {
  return detail::solve_power_integral(ScoreFunction::opt_partial(delta, theta));
}

/// n gamma + sqrt(n gamma (1-gamma)) z_{1-alpha}.
inline double rg_fixed_alpha_threshold(std::size_t n, double gamma, double alpha) {
  if (n < 1) throw ValidationError("n must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0,1)");
  check_alpha(alpha);
  const double nn = static_cast<double>(n);
  const double z = alpha == 0.5 ? 0.0 : inverse_normal_cdf(1.0 - alpha);
  return nn * gamma + std::sqrt(nn * gamma * (1.0 - gamma)) * z;
}

/// Fraction c with threshold ceil(n c) for partial red-green; tends to gamma as theta -> gamma.
inline double rg_sum_threshold_fraction(double gamma, double theta) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0,1)");
  if (!(theta < 1.0)) throw ContractError("partial red-green sum threshold needs theta < 1");
  if (theta < gamma) throw ContractError("partial red-green sum threshold needs theta >= gamma");
  if (theta - gamma < 1e-12) return gamma;
  const double num = std::log(1.0 - gamma) - std::log(1.0 - theta);
  const double den = std::log(theta) + std::log(1.0 - gamma) - std::log(gamma) - std::log(1.0 - theta);
  return num / den;
}

/// Complete: n. Partial: ceil(n (log(1-g) - log(1-t)) / (log t + log(1-g) - log g - log(1-t))).
inline std::size_t rg_sum_threshold(std::size_t n, double gamma, double theta, Mode mode) {
  if (n < 1) throw ValidationError("n must be positive");
  if (mode == Mode::complete) return n;
  if (mode != Mode::partial) throw ContractError("red-green sum threshold needs complete or partial mode");
  const double c = rg_sum_threshold_fraction(gamma, theta);
  // Guard against n*c landing a hair above an integer through rounding.
  const double x = static_cast<double>(n) * c;
  const double nearest = std::round(x);
  return static_cast<std::size_t>(std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x));
}

struct ExponentReport {
  double value = kNaN;
  /// Minimising theta of the fixed-alpha objective.
  double theta = kNaN;
  /// Minimising (theta1, theta2) of the sum objective.
  double theta1 = kNaN;
  double theta2 = kNaN;
  double log_mgf0 = kNaN;
  double log_mgf1 = kNaN;
  int passes = 0;
  /// The search bracket was cut back because an MGF diverged.
  bool bracket_shrunk = false;
};

/// H1 density of the Gumbel pivotal value at P*(delta) (complete) or (P*, Q*(theta)) (partial).
inline std::function<double(double)> least_favorable_density(double delta, std::optional<double> theta = {}) {
  const std::size_t m = dominant_count(delta) + 1;
  const NtpDistribution p = least_favorable_ntp(delta, m);
  std::vector<double> probs(p.probs().begin(), p.probs().end());
  if (!theta || *theta == 1.0) {
    return [probs](double r) { return density_h1_gumbel_complete(r, probs); };
  }
  FeatureMatrix q = least_favorable_feature_matrix(*theta, m);
  return [probs, q](double r) { return density_h1_gumbel_partial(r, probs, q); };
}

namespace detail {

/// Panel budget for MGF integrals; a divergent MGF exhausts it and reads as +inf.
inline constexpr std::size_t kMgfPanels = 1500;

template <class F>
double log_integral(F&& f) {
  auto opt = unit_interval_options();
  opt.max_panels = kMgfPanels;
  const auto r = integrate(f, 0.0, 1.0, opt);
  if (!r.converged || !(r.value > 0.0)) return std::numeric_limits<double>::infinity();
  return std::log(r.value);
}

}  // namespace detail

/// R(h) = -inf_{t >= 0} { t E0 h + log E1 exp(-t h) } with E1 taken against density f1.
template <class H, class D1>
ExponentReport fixed_alpha_exponent(const H& h, const D1& f1) {
  const double mean0 = integrate_or_throw([&](double r) { return h(r); }, 0.0, 1.0, unit_interval_options(), "E0 h");
  auto objective = [&](double t) {
    return t * mean0 + detail::log_integral([&](double r) { return std::exp(-t * h(r)) * f1(r); });
  };
  ExponentReport rep;
  const double hi = expand_upper_bracket(objective, 0.0, 1.0, 1e4);
  rep.bracket_shrunk = !std::isfinite(objective(hi));
  const auto res = golden_section(objective, 0.0, hi, GoldenOptions{1e-9, 400, 1e-12});
  const double at_zero = objective(0.0);
  if (at_zero < res.fx) {
    rep.theta = 0.0;
    rep.value = -at_zero;
  } else {
    rep.theta = res.x;
    rep.value = -res.fx;
  }
  return rep;
}

/// S(h) = -inf_{t1,t2 > 0} { t2/(t1+t2) log E0 e^{t1 h} + t1/(t1+t2) log E1 e^{-t2 h} },
/// E0 against density f0 and E1 against f1. Coordinate descent, golden section per axis.
template <class H, class D0, class D1>
ExponentReport sum_exponent(const H& h, const D0& f0, const D1& f1) {
  auto log_m0 = [&](double t1) { return detail::log_integral([&](double r) { return std::exp(t1 * h(r)) * f0(r); }); };
  auto log_m1 = [&](double t2) { return detail::log_integral([&](double r) { return std::exp(-t2 * h(r)) * f1(r); }); };
  auto combine = [](double t1, double t2, double l0, double l1) {
    if (!std::isfinite(l0) || !std::isfinite(l1)) return std::numeric_limits<double>::infinity();
    return (t2 * l0 + t1 * l1) / (t1 + t2);
  };

  constexpr double kLower = 1e-9;
  double t1 = 0.5, t2 = 0.5;
  double l0 = log_m0(t1), l1 = log_m1(t2);
  ExponentReport rep;
  // Back off until both MGFs are finite at the start point.
  while ((!std::isfinite(l0) || !std::isfinite(l1)) && t1 > 1e-6) {
    if (!std::isfinite(l0)) t1 *= 0.5, l0 = log_m0(t1);
    if (!std::isfinite(l1)) t2 *= 0.5, l1 = log_m1(t2);
    rep.bracket_shrunk = true;
  }
  double best = combine(t1, t2, l0, l1);

  for (int pass = 0; pass < 200; ++pass) {
    rep.passes = pass + 1;
    const double prev_t1 = t1, prev_t2 = t2, prev_best = best;

    auto f_t1 = [&](double x) { return combine(x, t2, log_m0(x), l1); };
    double hi1 = expand_upper_bracket(f_t1, kLower, std::max(2.0 * t1, 0.1), 1e4);
    if (!std::isfinite(f_t1(hi1))) rep.bracket_shrunk = true;
    auto r1 = golden_section(f_t1, kLower, hi1, GoldenOptions{1e-9, 400, 0.0});
    if (r1.fx < best) {
      t1 = r1.x;
      l0 = log_m0(t1);
      best = r1.fx;
    }

    auto f_t2 = [&](double x) { return combine(t1, x, l0, log_m1(x)); };
    double hi2 = expand_upper_bracket(f_t2, kLower, std::max(2.0 * t2, 0.1), 1e4);
    if (!std::isfinite(f_t2(hi2))) rep.bracket_shrunk = true;
    auto r2 = golden_section(f_t2, kLower, hi2, GoldenOptions{1e-9, 400, 0.0});
    if (r2.fx < best) {
      t2 = r2.x;
      l1 = log_m1(t2);
      best = r2.fx;
    }

    if (std::abs(t1 - prev_t1) < 1e-6 && std::abs(t2 - prev_t2) < 1e-6 && prev_best - best < 1e-12) break;
  }
  rep.theta1 = t1;
  rep.theta2 = t2;
  rep.log_mgf0 = l0;
  rep.log_mgf1 = l1;
  rep.value = -std::min(best, 0.0);
  return rep;
}

/// Fixed-alpha exponent of h at P*(delta).
template <class H>
ExponentReport exponent_complete(const H& h, double delta) {
  return fixed_alpha_exponent(h, least_favorable_density(delta));
}

/// Fixed-alpha exponent of h at (P*(delta), Q*(theta)).
template <class H>
ExponentReport exponent_partial(const H& h, double delta, double theta) {
  return fixed_alpha_exponent(h, least_favorable_density(delta, theta));
}

/// Sum-of-errors exponent at the least-favourable point; partial when theta is given.
template <class H>
ExponentReport exponent_sum(const H& h, double delta, std::optional<double> theta = {}) {
  return sum_exponent(h, [](double) { return 1.0; }, least_favorable_density(delta, theta));
}

/// The threshold at which the two Chernoff bounds behind S meet.
inline double chernoff_balanced_threshold(const ExponentReport& s, std::size_t n) {
  return static_cast<double>(n) * (s.log_mgf0 - s.log_mgf1) / (s.theta1 + s.theta2);
}

/// Which score a detector sums. For red-green, only `opt` (the green count) is defined.
enum class ScoreChoice { opt, ars, log };

inline std::string_view to_string(ScoreChoice c) {
  switch (c) {
    case ScoreChoice::opt: return "opt";
    case ScoreChoice::ars: return "ars";
    case ScoreChoice::log: return "log";
  }
  return "?";
}

inline ScoreChoice parse_score(std::string_view s) {
  if (s == "opt") return ScoreChoice::opt;
  if (s == "ars") return ScoreChoice::ars;
  if (s == "log") return ScoreChoice::log;
  throw ValidationError("unknown score '" + std::string(s) + "' (expected opt, ars or log)");
}

inline ScoreFunction make_score(Scheme scheme, Mode mode, ScoreChoice choice, double delta, double theta) {
  if (mode == Mode::null) throw ValidationError("detection needs a complete or partial mode assumption");
  if (scheme == Scheme::redgreen) {
    if (choice != ScoreChoice::opt) throw ValidationError("red-green detection only supports the count score (opt)");
    return ScoreFunction::indicator();
  }
  switch (choice) {
    case ScoreChoice::ars: return ScoreFunction::ars();
    case ScoreChoice::log: return ScoreFunction::log();
    case ScoreChoice::opt:
      return mode == Mode::partial ? ScoreFunction::opt_partial(delta, theta) : ScoreFunction::opt_complete(delta);
  }
  throw ContractError("unknown score choice");
}

struct CalibrationRequest {
  Scheme scheme = Scheme::gumbel;
  Mode mode = Mode::complete;
  Regime regime = Regime::fixed_alpha;
  ScoreChoice score = ScoreChoice::opt;
  std::size_t n = 0;
  double delta = 0.5;
  double theta = 0.8;
  double gamma = 0.5;
  double alpha = 0.05;
  /// Only consulted for the Gumbel opt score in the sum regime; the baselines
  /// have no closed-form rule and always use the Chernoff-balanced one.
  SumThresholdRule sum_rule = SumThresholdRule::constant;
};

/// Resolves the threshold for one detector configuration.
inline ThresholdSpec calibrate(const CalibrationRequest& req) {
  if (req.n < 1) throw ValidationError("n must be positive");
  if (req.scheme == Scheme::gumbel) validate_delta(req.delta);
  if (req.mode == Mode::partial) validate_theta(req.theta);
  const ScoreFunction h = make_score(req.scheme, req.mode, req.score, req.delta, req.theta);

  ThresholdSpec spec;
  if (req.scheme == Scheme::gumbel && req.regime == Regime::fixed_alpha) {
    spec = fixed_alpha_threshold(h, req.n, req.alpha);
  } else if (req.scheme == Scheme::gumbel) {
    spec.n = req.n;
    if (req.score == ScoreChoice::opt && req.sum_rule == SumThresholdRule::constant) {
      const SumOptimum o = req.mode == Mode::partial ? sum_threshold_gumbel_partial(req.delta, req.theta)
                                                     : sum_threshold_gumbel_complete(req.delta);
      spec.threshold = o.threshold;
      spec.optimum = o.optimum;
      spec.optimum_name = req.mode == Mode::partial && req.delta < 0.5 ? "beta_star" : "alpha_star";
      spec.objective = o.objective;
      spec.flat = o.flat;
    } else {
      const auto s = exponent_sum(h, req.delta, req.mode == Mode::partial ? std::optional(req.theta) : std::nullopt);
      spec.threshold = chernoff_balanced_threshold(s, req.n);
      spec.optimum = s.theta1;
      spec.optimum_name = "theta1";
      spec.objective = -s.value;
    }
  } else if (req.regime == Regime::fixed_alpha) {
    spec.n = req.n;
    spec.alpha = req.alpha;
    spec.threshold = rg_fixed_alpha_threshold(req.n, req.gamma, req.alpha);
  } else {
    spec.n = req.n;
    spec.threshold = static_cast<double>(rg_sum_threshold(req.n, req.gamma, req.theta, req.mode));
  }
  spec.regime = req.regime;
  spec.scheme = req.scheme;
  spec.mode = req.mode;
  if (req.regime == Regime::fixed_alpha) spec.alpha = req.alpha;
  if (req.scheme == Scheme::gumbel) spec.delta = req.delta;
  if (req.mode == Mode::partial) spec.theta = req.theta;
  if (req.scheme == Scheme::redgreen) spec.gamma = req.gamma;
  if (!std::isfinite(spec.threshold)) throw NumericError("threshold is not finite");
  return spec;
}

}  // namespace wmd
