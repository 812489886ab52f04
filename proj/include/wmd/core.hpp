#pragma once

// Vocabulary, next-token-prediction (NTP) distributions, the distribution
// classes P_delta / Q_theta and their least-favourable members.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wmd/error.hpp"

namespace wmd {

using Token = std::int32_t;

inline constexpr double kProbabilityTolerance = 1e-12;
inline constexpr double kFloorGuard = 1e-9;

struct VocabSpec {
  std::size_t m;

  explicit VocabSpec(std::size_t size) : m(size) {
    if (m < 2) throw ValidationError("vocabulary size must be at least 2, got " + std::to_string(m));
  }
  bool contains(Token t) const { return t >= 0 && static_cast<std::size_t>(t) < m; }
};

namespace detail {

inline void check_probability_vector(std::span<const double> p) {
  if (p.size() < 2) throw ValidationError("probability vector needs at least 2 entries");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !std::isfinite(p[i])) {
      throw ValidationError("probability entry " + std::to_string(i) + " is negative or not finite");
    }
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    throw ValidationError("probability vector sums to " + std::to_string(sum) + ", expected 1");
  }
}

}  // namespace detail

/// A next-token distribution over tokens 0..m-1. Validated on construction and
/// never renormalised.
class NtpDistribution {
 public:
  explicit NtpDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    detail::check_probability_vector(probs_);
  }

  static NtpDistribution uniform(std::size_t m) {
    VocabSpec{m};
    return NtpDistribution(std::vector<double>(m, 1.0 / static_cast<double>(m)));
  }

  /// Mass 1-delta on `peak`, the remaining delta spread evenly over the other m-1 tokens.
  static NtpDistribution spike(std::size_t m, double delta, std::size_t peak) {
    VocabSpec{m};
    if (!(delta >= 0.0 && delta <= 1.0)) throw ValidationError("spike delta must lie in [0,1]");
    if (peak >= m) throw ContractError("spike index out of range");
    std::vector<double> p(m, delta / static_cast<double>(m - 1));
    p[peak] = 1.0 - delta;
    return NtpDistribution(std::move(p));
  }

  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  double max() const { return *std::max_element(probs_.begin(), probs_.end()); }

  friend bool operator==(const NtpDistribution&, const NtpDistribution&) = default;

 private:
  std::vector<double> probs_;
};

struct DistributionClassParams {
  double delta = 0.5;
  double theta = 1.0;
  double gamma = 0.5;
};

inline void validate_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0,1), got " + std::to_string(delta));
}

inline void validate_theta(double theta) {
  if (!(theta > 0.5 && theta <= 1.0)) throw ValidationError("theta must lie in (1/2,1], got " + std::to_string(theta));
}

/// Size of the green list gamma*m; throws unless gamma*m is an integer.
inline std::size_t green_list_size(double gamma, std::size_t m) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in (0,1], got " + std::to_string(gamma));
  const double exact = gamma * static_cast<double>(m);
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) > kFloorGuard || rounded < 1.0) {
    throw ContractError("gamma*m = " + std::to_string(exact) + " is not a positive integer");
  }
  return static_cast<std::size_t>(rounded);
}

/// floor(1/(1-delta)) with a small upward guard so that deltas meant to make
/// 1/(1-delta) integral do not drop to the integer below.
inline std::size_t dominant_count(double delta) {
  validate_delta(delta);
  return static_cast<std::size_t>(std::floor(1.0 / (1.0 - delta) + kFloorGuard));
}

/// (1-delta) * floor(1/(1-delta)): the total mass carried by the dominant entries of P*.
inline double dominant_mass(double delta) {
  return (1.0 - delta) * static_cast<double>(dominant_count(delta));
}

/// True iff the largest entry of p is at most 1-delta.
inline bool validate_ntp(std::span<const double> p, double delta) {
  detail::check_probability_vector(p);
  const double top = *std::max_element(p.begin(), p.end());
  return top <= 1.0 - delta + kProbabilityTolerance;
}

inline bool validate_ntp(const NtpDistribution& p, double delta) { return validate_ntp(p.probs(), delta); }

/// P* = (1-delta, ..., 1-delta, remainder, 0, ...): the worst case of P_delta.
inline NtpDistribution least_favorable_ntp(double delta, std::size_t m) {
  const std::size_t k = dominant_count(delta);
  if (m < k + 1) {
    throw CapacityError("least-favourable NTP for delta=" + std::to_string(delta) + " needs m >= " +
                        std::to_string(k + 1) + ", got " + std::to_string(m));
  }
  std::vector<double> p(m, 0.0);
  for (std::size_t i = 0; i < k; ++i) p[i] = 1.0 - delta;
  p[k] = std::max(0.0, 1.0 - (1.0 - delta) * static_cast<double>(k));
  return NtpDistribution(std::move(p));
}

/// Dense row-stochastic matrix: row i is the law of the emitted token given
/// that the watermark rule alone would produce the i-th decoding distribution.
class FeatureMatrix {
 public:
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), q_(std::move(entries)) {
    if (q_.size() != rows_ * cols_) throw ValidationError("feature matrix entry count mismatch");
    for (std::size_t i = 0; i < rows_; ++i) detail::check_probability_vector(row(i));
  }

  static FeatureMatrix identity(std::size_t m) {
    std::vector<double> q(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) q[i * m + i] = 1.0;
    return FeatureMatrix(m, m, std::move(q));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t i, std::size_t j) const { return q_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const { return {q_.data() + i * cols_, cols_}; }

  /// Membership in the partial-inheritance class for Gumbel: q_ii >= theta.
  bool diagonal_at_least(double theta) const {
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) {
      if ((*this)(i, i) < theta - kProbabilityTolerance) return false;
    }
    return true;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> q_;
};

/// Q*: theta on the diagonal; row 0 puts 1-theta on column 1, every other row on column 0.
inline FeatureMatrix least_favorable_feature_matrix(double theta, std::size_t m) {
  validate_theta(theta);
  VocabSpec{m};
  std::vector<double> q(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    q[i * m + i] = theta;
    q[i * m + (i == 0 ? 1 : 0)] += 1.0 - theta;
  }
  return FeatureMatrix(m, m, std::move(q));
}

}  // namespace wmd
