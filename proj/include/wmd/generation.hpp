#pragma once

// Token-sequence simulators for the null hypothesis and for every inheritance
// variant of the Gumbel-max and red-green watermarks.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wmd/core.hpp"
#include "wmd/keying.hpp"
#include "wmd/rng.hpp"

namespace wmd {

enum class Scheme { gumbel, redgreen };
enum class Mode { null, complete, partial };

inline std::string_view to_string(Scheme s) { return s == Scheme::gumbel ? "gumbel" : "redgreen"; }

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::null: return "null";
    case Mode::complete: return "complete";
    case Mode::partial: return "partial";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "gumbel") return Scheme::gumbel;
  if (s == "redgreen" || s == "red-green") return Scheme::redgreen;
  throw ValidationError("unknown scheme '" + std::string(s) + "'");
}

inline Mode parse_mode(std::string_view s) {
  if (s == "null") return Mode::null;
  if (s == "complete") return Mode::complete;
  if (s == "partial") return Mode::partial;
  throw ValidationError("unknown mode '" + std::string(s) + "'");
}

/// Rule producing the NTP distribution P_t at each step.
class NtpPolicy {
 public:
  enum class Kind { uniform, spike, fixed };

  static NtpPolicy uniform() { return NtpPolicy(Kind::uniform, 0.0, {}); }
  /// Mass 1-delta on an index drawn from the noise stream, delta spread evenly over the rest.
  static NtpPolicy spike(double delta) {
    if (!(delta >= 0.0 && delta < 1.0)) throw ValidationError("spike delta must lie in [0,1)");
    return NtpPolicy(Kind::spike, delta, {});
  }
  static NtpPolicy fixed(NtpDistribution p) { return NtpPolicy(Kind::fixed, 0.0, std::move(p)); }

  Kind kind() const { return kind_; }
  double delta() const { return delta_; }
  const std::optional<NtpDistribution>& fixed_distribution() const { return fixed_; }

  template <NoiseSource R>
  NtpDistribution at_step(std::size_t m, R& noise) const {
    switch (kind_) {
      case Kind::uniform: return NtpDistribution::uniform(m);
      case Kind::spike: return NtpDistribution::spike(m, delta_, static_cast<std::size_t>(noise.uniform_index(m)));
      case Kind::fixed:
        if (fixed_->size() != m) throw ContractError("fixed NTP size does not match vocabulary");
        return *fixed_;
    }
    throw ContractError("unknown NTP policy");
  }

 private:
  NtpPolicy(Kind k, double d, std::optional<NtpDistribution> f) : kind_(k), delta_(d), fixed_(std::move(f)) {}
  Kind kind_;
  double delta_;
  std::optional<NtpDistribution> fixed_;
};

struct ScenarioSpec {
  Scheme scheme = Scheme::gumbel;
  Mode mode = Mode::null;
  DistributionClassParams params{};
  NtpPolicy ntp = NtpPolicy::uniform();
  std::size_t m = 1000;
  std::size_t n = 100;
  std::vector<Token> prompt;
  WindowConfig window{};
  bool record_ntp = false;
};

inline void validate(const ScenarioSpec& spec) {
  VocabSpec vocab{spec.m};
  if (spec.n < 1) throw ValidationError("sequence length must be positive");
  if (spec.window.width < 1) throw ValidationError("key window width must be positive");
  if (spec.mode == Mode::partial) validate_theta(spec.params.theta);
  if (spec.scheme == Scheme::redgreen) green_list_size(spec.params.gamma, spec.m);
  for (Token t : spec.prompt) {
    if (!vocab.contains(t)) throw ValidationError("prompt token " + std::to_string(t) + " outside vocabulary");
  }
  if (spec.ntp.kind() == NtpPolicy::Kind::fixed && spec.ntp.fixed_distribution()->size() != spec.m) {
    throw ValidationError("fixed NTP size does not match vocabulary");
  }
}

struct GeneratedText {
  std::vector<Token> prompt;
  std::vector<Token> tokens;
  /// Key seed per step; the keys themselves are recomputable from these.
  std::vector<std::uint64_t> key_seeds;
  /// Per-step NTP vectors, only filled when ScenarioSpec::record_ntp is set.
  std::vector<NtpDistribution> ntps;
};

namespace detail {

/// Categorical draw restricted to indices where `include(i)` holds; `total` is the
/// included mass. Falls back to the last included index on rounding.
template <NoiseSource R, class Include>
Token draw_restricted(std::span<const double> p, double total, R& noise, Include include) {
  const double target = noise.uniform01() * total;
  double cum = 0.0;
  Token last = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!include(i) || p[i] <= 0.0) continue;
    cum += p[i];
    last = static_cast<Token>(i);
    if (target < cum) return last;
  }
  return last;
}

inline void check_token(Token t, std::size_t m) {
  if (t < 0 || static_cast<std::size_t>(t) >= m) {
    throw ContractError("token " + std::to_string(t) + " outside vocabulary of size " + std::to_string(m));
  }
}

}  // namespace detail

/// Null sampler: token i with probability p_i, ignoring any key.
template <NoiseSource R>
Token sample_null(const NtpDistribution& p, R& noise) {
  return detail::draw_restricted(p.probs(), 1.0, noise, [](std::size_t) { return true; });
}

/// argmax_i log(u_i)/p_i over tokens with p_i > 0; ties go to the lowest index.
inline Token gumbel_complete_next(const NtpDistribution& p, const GumbelKey& key) {
  if (key.size() != p.size()) throw ContractError("Gumbel key size does not match NTP size");
  Token best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    const double s = std::log(key.u[i]) / p[i];
    if (best < 0 || s > best_score) {
      best = static_cast<Token>(i);
      best_score = s;
    }
  }
  if (best < 0) throw ContractError("NTP distribution has no positive entry");
  return best;
}

/// Emits the watermark argmax with probability theta' ~ U[theta,1], otherwise a
/// different token drawn from p renormalised over the remaining vocabulary.
template <NoiseSource R>
Token gumbel_partial_next(const NtpDistribution& p, const GumbelKey& key, double theta, R& noise) {
  validate_theta(theta);
  const Token top = gumbel_complete_next(p, key);
  const double keep = theta + (1.0 - theta) * noise.uniform01();
  if (noise.uniform01() < keep) return top;
  const auto top_index = static_cast<std::size_t>(top);
  const double rest = 1.0 - p[top_index];
  if (rest <= 0.0) return top;
  return detail::draw_restricted(p.probs(), rest, noise, [top_index](std::size_t i) { return i != top_index; });
}

/// Emits a token from row argmax of an explicit feature matrix.
template <NoiseSource R>
Token gumbel_feature_matrix_next(const NtpDistribution& p, const GumbelKey& key, const FeatureMatrix& q,
                                 R& noise) {
  if (q.rows() != p.size() || q.cols() != p.size()) throw ContractError("feature matrix must be m x m");
  const Token top = gumbel_complete_next(p, key);
  return detail::draw_restricted(q.row(static_cast<std::size_t>(top)), 1.0, noise,
                                 [](std::size_t) { return true; });
}

namespace detail {

inline double green_mass(const NtpDistribution& p, const GreenList& green) {
  if (green.vocab_size() != p.size()) throw ContractError("green list vocabulary does not match NTP size");
  double mass = 0.0;
  for (Token t : green.members()) mass += p[static_cast<std::size_t>(t)];
  return mass;
}

}  // namespace detail

/// Draw from p renormalised over the green list.
template <NoiseSource R>
Token rg_complete_next(const NtpDistribution& p, const GreenList& green, R& noise) {
  const double mass = detail::green_mass(p, green);
  if (!(mass > 0.0)) throw DegenerateSupportError("green list carries no probability mass");
  return detail::draw_restricted(p.probs(), mass, noise,
                                 [&green](std::size_t i) { return green.contains(static_cast<Token>(i)); });
}

/// Green-renormalised draw with probability theta, red-renormalised otherwise.
template <NoiseSource R>
Token rg_partial_next(const NtpDistribution& p, const GreenList& green, double theta, R& noise) {
  validate_theta(theta);
  if (theta == 1.0) return rg_complete_next(p, green, noise);
  const double mass = detail::green_mass(p, green);
  const double red = 1.0 - mass;
  if (!(mass > 0.0) || !(red > kProbabilityTolerance)) {
    throw DegenerateSupportError("partial red-green sampling needs positive mass on both lists");
  }
  const bool pick_green = noise.uniform01() < theta;
  return detail::draw_restricted(p.probs(), pick_green ? mass : red, noise, [&green, pick_green](std::size_t i) {
    return green.contains(static_cast<Token>(i)) == pick_green;
  });
}

/// Uniformly random prompt of `width` tokens.
template <NoiseSource R>
std::vector<Token> random_prompt(std::size_t m, std::size_t width, R& noise) {
  std::vector<Token> prompt(width);
  for (auto& t : prompt) t = static_cast<Token>(noise.uniform_index(m));
  return prompt;
}

/// Runs the scenario for n steps. Keys come from (window, salt); every other
/// random choice, including P_t, comes from `noise`.
template <NoiseSource R>
GeneratedText generate_sequence(const ScenarioSpec& spec, KeySalt salt, R& noise) {
  validate(spec);
  GeneratedText out;
  out.prompt = spec.prompt;
  out.tokens.reserve(spec.n);
  out.key_seeds.reserve(spec.n);
  std::vector<Token> window;
  GumbelKey key{std::vector<double>(spec.scheme == Scheme::gumbel ? spec.m : 0)};
  GreenList green;
  std::vector<Token> perm;

  for (std::size_t t = 0; t < spec.n; ++t) {
    const std::uint64_t seed = seed_at(out.prompt, out.tokens, t, salt, spec.window, window);
    NtpDistribution p = spec.ntp.at_step(spec.m, noise);
    Token next = 0;
    if (spec.mode == Mode::null) {
      next = sample_null(p, noise);
    } else if (spec.scheme == Scheme::gumbel) {
      gumbel_key_into(seed, key.u);
      next = spec.mode == Mode::complete ? gumbel_complete_next(p, key)
                                         : gumbel_partial_next(p, key, spec.params.theta, noise);
    } else {
      greenlist_key_into(seed, spec.m, spec.params.gamma, green, perm);
      next = spec.mode == Mode::complete ? rg_complete_next(p, green, noise)
                                         : rg_partial_next(p, green, spec.params.theta, noise);
    }
    out.tokens.push_back(next);
    out.key_seeds.push_back(seed);
    if (spec.record_ntp) out.ntps.push_back(std::move(p));
  }
  return out;
}

}  // namespace wmd
