#pragma once

// Pivotal statistics, score functions and the closed-form H1 laws of the
// Gumbel pivotal value.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wmd/core.hpp"
#include "wmd/keying.hpp"

namespace wmd {

/// Y_t: U_{t,w_t} in (0,1) for Gumbel, the green indicator in {0,1} for red-green.
struct PivotalValue {
  double value = 0.0;
  friend bool operator==(PivotalValue, PivotalValue) = default;
};

enum class ScoreKind { ars, log, opt_complete, opt_partial, indicator };

/// Score h applied to each pivotal value before summation.
class ScoreFunction {
 public:
  /// -log(1-r)
  static ScoreFunction ars() { return ScoreFunction(ScoreKind::ars); }
  /// log r
  static ScoreFunction log() { return ScoreFunction(ScoreKind::log); }
  /// Optimal complete-inheritance score: log of the H1 density at P*.
  static ScoreFunction opt_complete(double delta) {
    ScoreFunction h(ScoreKind::opt_complete);
    h.set_delta(delta);
    return h;
  }
  /// Optimal partial-inheritance score at (P*, Q*).
  static ScoreFunction opt_partial(double delta, double theta) {
    validate_theta(theta);
    ScoreFunction h(ScoreKind::opt_partial);
    h.set_delta(delta);
    h.theta_ = theta;
    return h;
  }
  /// Identity on {0,1}; the red-green statistic is the green count.
  static ScoreFunction indicator() { return ScoreFunction(ScoreKind::indicator); }

  ScoreKind kind() const { return kind_; }
  double delta() const { return delta_; }
  double theta() const { return theta_; }

  std::string name() const {
    switch (kind_) {
      case ScoreKind::ars: return "ars";
      case ScoreKind::log: return "log";
      case ScoreKind::opt_complete:
      case ScoreKind::opt_partial: return "opt";
      case ScoreKind::indicator: return "count";
    }
    return "?";
  }

  double operator()(double r) const {
    if (!(r >= 0.0 && r <= 1.0)) throw ContractError("score argument " + std::to_string(r) + " outside [0,1]");
    switch (kind_) {
      case ScoreKind::ars: return -std::log1p(-r);
      case ScoreKind::log: return std::log(r);
      case ScoreKind::opt_complete: return std::log(dominant_ * std::pow(r, lead_exp_) + tail(r));
      case ScoreKind::opt_partial:
        if (delta_ >= 0.5) {
          return std::log((1.0 - theta_) / delta_ +
                          (dominant_ * theta_ + theta_ / delta_ - 1.0 / delta_) * std::pow(r, lead_exp_) +
                          theta_ * tail(r));
        }
        return std::log(2.0 * (1.0 - theta_) +
                        (2.0 * theta_ - 1.0) * (std::pow(r, (1.0 - delta_) / delta_) + std::pow(r, lead_exp_)));
      case ScoreKind::indicator: return r;
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  /// True when (1-delta)*floor(1/(1-delta)) == 1, where r^{dt/(1-dt)} is read as its pointwise limit.
  bool tail_is_limit() const { return tail_limit_; }

 private:
  explicit ScoreFunction(ScoreKind k) : kind_(k) {}

  void set_delta(double delta) {
    validate_delta(delta);
    delta_ = delta;
    dominant_ = static_cast<double>(dominant_count(delta));
    lead_exp_ = delta / (1.0 - delta);
    const double dt = dominant_mass(delta);
    tail_limit_ = std::abs(1.0 - dt) < kFloorGuard;
    tail_exp_ = tail_limit_ ? 0.0 : dt / (1.0 - dt);
  }

  // r^{dt/(1-dt)}; in the limit case 0 on [0,1) and 1 at r = 1.
  double tail(double r) const {
    if (tail_limit_) return r == 1.0 ? 1.0 : 0.0;
    return std::pow(r, tail_exp_);
  }

  ScoreKind kind_;
  double delta_ = 0.0;
  double theta_ = 1.0;
  double dominant_ = 0.0;
  double lead_exp_ = 0.0;
  double tail_exp_ = 0.0;
  bool tail_limit_ = false;
};

inline PivotalValue pivotal_gumbel(Token token, const GumbelKey& key) {
  if (token < 0 || static_cast<std::size_t>(token) >= key.size()) throw ContractError("token outside Gumbel key");
  return PivotalValue{key.u[static_cast<std::size_t>(token)]};
}

/// Same value as pivotal_gumbel(token, gumbel_key(seed, m)) without materialising the key.
inline PivotalValue pivotal_gumbel(Token token, std::uint64_t seed, std::size_t m) {
  if (token < 0 || static_cast<std::size_t>(token) >= m) throw ContractError("token outside vocabulary");
  return PivotalValue{gumbel_key_entry(seed, static_cast<std::size_t>(token))};
}

inline PivotalValue pivotal_rg(Token token, const GreenList& green) {
  if (token < 0 || static_cast<std::size_t>(token) >= green.vocab_size()) {
    throw ContractError("token outside vocabulary");
  }
  return PivotalValue{green.contains(token) ? 1.0 : 0.0};
}

namespace detail {
inline void check_unit(double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw ContractError("argument " + std::to_string(r) + " outside [0,1]");
}
}  // namespace detail

/// P_H1(Y <= r | P) = sum_w p_w r^{1/p_w} under complete inheritance.
inline double cdf_h1_gumbel_complete(double r, const NtpDistribution& p) {
  detail::check_unit(r);
  double sum = 0.0;
  for (double pi : p.probs()) {
    if (pi > 0.0) sum += pi * std::pow(r, 1.0 / pi);
  }
  return sum;
}

/// d/dr of cdf_h1_gumbel_complete: sum_w r^{1/p_w - 1}.
inline double density_h1_gumbel_complete(double r, std::span<const double> p) {
  double sum = 0.0;
  for (double pi : p) {
    if (pi > 0.0) sum += std::pow(r, 1.0 / pi - 1.0);
  }
  return sum;
}

/// P_H1(Y <= r | P, Q) under partial inheritance with feature matrix Q.
/// Rows with p_i = 0 never occur as the argmax and are skipped, which also
/// avoids the 0/0 when some p_j = 1.
inline double cdf_h1_gumbel_partial(double r, const NtpDistribution& p, const FeatureMatrix& q) {
  detail::check_unit(r);
  const std::size_t m = p.size();
  if (q.rows() != m || q.cols() != m) throw ContractError("feature matrix must be m x m");
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double pi = p[i];
    if (pi <= 0.0) continue;
    sum += pi * std::pow(r, 1.0 / pi) * q(i, i);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i || q(i, j) == 0.0) continue;
      const double pj = p[j];
      const double own = pj > 0.0 ? pj * std::pow(r, 1.0 / pj) : 0.0;
      sum += pi / (1.0 - pj) * (r - own) * q(i, j);
    }
  }
  return sum;
}

/// d/dr of cdf_h1_gumbel_partial.
inline double density_h1_gumbel_partial(double r, std::span<const double> p, const FeatureMatrix& q) {
  const std::size_t m = p.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double pi = p[i];
    if (pi <= 0.0) continue;
    sum += q(i, i) * std::pow(r, 1.0 / pi - 1.0);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i || q(i, j) == 0.0) continue;
      const double pj = p[j];
      const double own = pj > 0.0 ? std::pow(r, 1.0 / pj - 1.0) : 0.0;
      sum += pi / (1.0 - pj) * (1.0 - own) * q(i, j);
    }
  }
  return sum;
}

/// sum_t h(Y_t). Any -inf term makes the whole statistic -inf, so it can never reach a finite threshold.
inline double sum_scores(std::span<const PivotalValue> pivotals, const ScoreFunction& h) {
  if (pivotals.empty()) throw ContractError("cannot score an empty sequence");
  double total = 0.0;
  for (PivotalValue y : pivotals) {
    const double s = h(y.value);
    if (s == -std::numeric_limits<double>::infinity()) return s;
    total += s;
  }
  return total;
}

}  // namespace wmd
