#pragma once

// Recompute keys from a token sequence, score it, and compare against the
// calibrated threshold.

#include <optional>
#include <vector>

#include "wmd/calibration.hpp"
#include "wmd/keying.hpp"
#include "wmd/statistics.hpp"

namespace wmd {

struct DetectionRequest {
  std::vector<Token> tokens;
  std::vector<Token> prompt;
  KeySalt salt{};
  WindowConfig window{};
  std::size_t m = 1000;
  Scheme scheme = Scheme::gumbel;
  /// Inheritance the detector assumes; null is rejected.
  Mode mode = Mode::complete;
  ScoreChoice score = ScoreChoice::opt;
  Regime regime = Regime::fixed_alpha;
  double delta = 0.5;
  double theta = 0.8;
  double gamma = 0.5;
  double alpha = 0.05;
  SumThresholdRule sum_rule = SumThresholdRule::constant;
  bool dump_pivotals = false;
  bool with_exponents = false;
};

enum class Decision { reject, retain };

inline std::string_view to_string(Decision d) { return d == Decision::reject ? "reject" : "retain"; }

struct DetectionReport {
  double statistic = 0.0;
  ThresholdSpec threshold;
  Decision decision = Decision::retain;
  std::size_t n = 0;
  std::string score;
  std::vector<PivotalValue> pivotals;
  std::optional<ExponentReport> fixed_exponent;
  std::optional<ExponentReport> sum_exponent;
};

/// Y_t for every generated position; keys are rebuilt from the sliding window.
inline std::vector<PivotalValue> compute_pivotals(std::span<const Token> prompt, std::span<const Token> tokens,
                                                  KeySalt salt, const WindowConfig& window, Scheme scheme,
                                                  std::size_t m, double gamma) {
  VocabSpec{m};
  std::vector<PivotalValue> out;
  out.reserve(tokens.size());
  std::vector<Token> scratch;
  GreenList green;
  std::vector<Token> perm;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::uint64_t seed = seed_at(prompt, tokens, t, salt, window, scratch);
    if (scheme == Scheme::gumbel) {
      out.push_back(pivotal_gumbel(tokens[t], seed, m));
    } else {
      greenlist_key_into(seed, m, gamma, green, perm);
      out.push_back(pivotal_rg(tokens[t], green));
    }
  }
  return out;
}

inline CalibrationRequest calibration_of(const DetectionRequest& req) {
  CalibrationRequest c;
  c.scheme = req.scheme;
  c.mode = req.mode;
  c.regime = req.regime;
  c.score = req.score;
  c.n = req.tokens.size();
  c.delta = req.delta;
  c.theta = req.theta;
  c.gamma = req.gamma;
  c.alpha = req.alpha;
  c.sum_rule = req.sum_rule;
  return c;
}

/// Reject iff statistic >= threshold; the boundary counts as a rejection.
inline Decision decide(double statistic, double threshold) {
  return statistic >= threshold ? Decision::reject : Decision::retain;
}

inline DetectionReport detect(const DetectionRequest& req) {
  if (req.tokens.empty()) throw ValidationError("cannot run detection on an empty token sequence");
  const ScoreFunction h = make_score(req.scheme, req.mode, req.score, req.delta, req.theta);
  DetectionReport rep;
  rep.n = req.tokens.size();
  rep.score = std::string(to_string(req.score));
  rep.threshold = calibrate(calibration_of(req));

  auto pivotals = compute_pivotals(req.prompt, req.tokens, req.salt, req.window, req.scheme, req.m, req.gamma);
  rep.statistic = sum_scores(pivotals, h);
  rep.decision = decide(rep.statistic, rep.threshold.threshold);
  if (req.dump_pivotals) rep.pivotals = std::move(pivotals);

  if (req.with_exponents && req.scheme == Scheme::gumbel) {
    const std::optional<double> theta = req.mode == Mode::partial ? std::optional(req.theta) : std::nullopt;
    rep.fixed_exponent = theta ? exponent_partial(h, req.delta, *theta) : exponent_complete(h, req.delta);
    rep.sum_exponent = exponent_sum(h, req.delta, theta);
  }
  return rep;
}

}  // namespace wmd
