#pragma once

// Monte Carlo harness: error rates against text length for both schemes, both
// inheritance modes and both regimes, with a fixed CSV contract.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "wmd/calibration.hpp"
#include "wmd/detection.hpp"
#include "wmd/generation.hpp"
#include "wmd/rng.hpp"

namespace wmd {

/// Delta used by a rep: one fixed value, or a uniform draw from [lo, hi] per rep.
struct DeltaPolicy {
  enum class Kind { fixed, interval };
  Kind kind = Kind::interval;
  double lo = 0.001;
  double hi = 0.5;
  double value = 0.005;

  static DeltaPolicy fixed(double v) { return DeltaPolicy{Kind::fixed, v, v, v}; }
  static DeltaPolicy interval(double lo, double hi) { return DeltaPolicy{Kind::interval, lo, hi, lo}; }

  template <NoiseSource R>
  double draw(R& noise) const {
    return kind == Kind::fixed ? value : noise.uniform(lo, hi);
  }
  friend bool operator==(const DeltaPolicy&, const DeltaPolicy&) = default;
};

struct ExperimentConfig {
  std::string name = "custom";
  Scheme scheme = Scheme::gumbel;
  Mode mode = Mode::complete;
  Regime regime = Regime::fixed_alpha;
  std::size_t m = 1000;
  std::size_t reps = 5000;
  std::vector<std::size_t> lengths{100, 200, 300, 400, 500};
  double alpha = 0.05;
  DeltaPolicy delta{};
  double theta = 0.8;
  double gamma = 0.5;
  std::uint64_t seed = 1;
  std::vector<ScoreChoice> scores{ScoreChoice::opt, ScoreChoice::ars, ScoreChoice::log};
  /// Thresholds swept in the partial red-green sum regime.
  std::vector<double> theta_sweep{0.7, 0.8, 0.9, 0.95};
  std::size_t workers = 1;
  std::size_t prompt_length = 5;
  SumThresholdRule opt_sum_rule = SumThresholdRule::constant;
  /// When non-empty, per-rep delta values are written here as CSV.
  std::string delta_trace;
};

/// Defaults for a (scheme, mode, regime) triple before any overrides.
inline ExperimentConfig default_config(Scheme scheme, Mode mode, Regime regime) {
  ExperimentConfig c;
  c.scheme = scheme;
  c.mode = mode;
  c.regime = regime;
  c.delta = mode == Mode::partial ? DeltaPolicy::fixed(0.005) : DeltaPolicy::interval(0.001, 0.5);
  if (scheme == Scheme::redgreen) c.scores = {ScoreChoice::opt};
  return c;
}

inline void validate(const ExperimentConfig& c) {
  VocabSpec{c.m};
  if (c.reps < 1) throw ValidationError("reps must be at least 1");
  if (c.lengths.empty()) throw ValidationError("lengths must not be empty");
  for (auto n : c.lengths) {
    if (n < 1) throw ValidationError("every length must be at least 1");
  }
  check_alpha(c.alpha);
  if (c.mode == Mode::null) throw ValidationError("experiment mode must be complete or partial");
  if (c.workers < 1) throw ValidationError("workers must be at least 1");
  if (c.prompt_length < 5) throw ValidationError("prompt_length must cover the 5-token key window");
  if (c.scores.empty()) throw ValidationError("scores must not be empty");
  if (c.mode == Mode::partial) validate_theta(c.theta);
  if (c.scheme == Scheme::gumbel) {
    if (c.delta.kind == DeltaPolicy::Kind::fixed) {
      validate_delta(c.delta.value);
    } else {
      validate_delta(c.delta.lo);
      validate_delta(c.delta.hi);
      if (c.delta.lo > c.delta.hi) throw ValidationError("delta_min exceeds delta_max");
    }
  } else {
    green_list_size(c.gamma, c.m);
    if (!(c.gamma < 1.0)) throw ValidationError("gamma must be below 1");
    for (auto s : c.scores) {
      if (s != ScoreChoice::opt) throw ValidationError("red-green experiments only support the opt score");
    }
    if (c.mode == Mode::partial && c.regime == Regime::sum) {
      if (c.theta_sweep.empty()) throw ValidationError("theta_sweep must not be empty");
      for (double t : c.theta_sweep) {
        if (!(t >= c.gamma && t < 1.0)) throw ValidationError("theta_sweep values must lie in [gamma, 1)");
      }
    }
  }
}

// ---- presets ---------------------------------------------------------------

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "paper-fig1",          "paper-fig2",           "paper-fig3-complete",    "paper-fig3-partial",
      "paper-fig4-complete", "paper-fig4-partial",   "paper-fig5-complete",    "paper-fig5-partial",
      "desk-gumbel-complete", "desk-gumbel-partial", "desk-gumbel-complete-sum", "desk-gumbel-partial-sum",
      "desk-redgreen-complete", "desk-redgreen-partial", "desk-redgreen-complete-sum", "desk-redgreen-partial-sum"};
  return names;
}

inline ExperimentConfig preset(std::string_view name) {
  struct Row {
    std::string_view name;
    Scheme scheme;
    Mode mode;
    Regime regime;
    bool desk;
  };
  static constexpr Row rows[] = {
      {"paper-fig1", Scheme::gumbel, Mode::complete, Regime::fixed_alpha, false},
      {"paper-fig2", Scheme::gumbel, Mode::partial, Regime::fixed_alpha, false},
      {"paper-fig3-complete", Scheme::gumbel, Mode::complete, Regime::sum, false},
      {"paper-fig3-partial", Scheme::gumbel, Mode::partial, Regime::sum, false},
      {"paper-fig4-complete", Scheme::redgreen, Mode::complete, Regime::fixed_alpha, false},
      {"paper-fig4-partial", Scheme::redgreen, Mode::partial, Regime::fixed_alpha, false},
      {"paper-fig5-complete", Scheme::redgreen, Mode::complete, Regime::sum, false},
      {"paper-fig5-partial", Scheme::redgreen, Mode::partial, Regime::sum, false},
      {"desk-gumbel-complete", Scheme::gumbel, Mode::complete, Regime::fixed_alpha, true},
      {"desk-gumbel-partial", Scheme::gumbel, Mode::partial, Regime::fixed_alpha, true},
      {"desk-gumbel-complete-sum", Scheme::gumbel, Mode::complete, Regime::sum, true},
      {"desk-gumbel-partial-sum", Scheme::gumbel, Mode::partial, Regime::sum, true},
      {"desk-redgreen-complete", Scheme::redgreen, Mode::complete, Regime::fixed_alpha, true},
      {"desk-redgreen-partial", Scheme::redgreen, Mode::partial, Regime::fixed_alpha, true},
      {"desk-redgreen-complete-sum", Scheme::redgreen, Mode::complete, Regime::sum, true},
      {"desk-redgreen-partial-sum", Scheme::redgreen, Mode::partial, Regime::sum, true},
  };
  for (const auto& r : rows) {
    if (r.name != name) continue;
    ExperimentConfig c = default_config(r.scheme, r.mode, r.regime);
    c.name = std::string(name);
    if (r.desk) {
      c.m = 100;
      c.reps = 1000;
    }
    return c;
  }
  throw ValidationError("unknown preset '" + std::string(name) + "'");
}

// ---- JSON config -------------------------------------------------------------

inline std::string_view to_string(SumThresholdRule r) {
  return r == SumThresholdRule::constant ? "constant" : "chernoff_balanced";
}

inline SumThresholdRule parse_sum_rule(std::string_view s) {
  if (s == "constant") return SumThresholdRule::constant;
  if (s == "chernoff_balanced") return SumThresholdRule::chernoff_balanced;
  throw ValidationError("unknown sum_rule '" + std::string(s) + "' (expected constant or chernoff_balanced)");
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{"preset", "name",      "scheme",      "mode",     "regime",
                                             "m",      "reps",      "lengths",     "alpha",    "delta",
                                             "delta_min", "delta_max", "theta",    "gamma",    "seed",
                                             "scores", "theta_sweep", "workers",   "prompt_length",
                                             "sum_rule", "delta_trace"};
  return keys;
}

/// Builds a config from a flat JSON object. Starts from `preset` when given,
/// otherwise from the defaults of (scheme, mode, regime). Unknown keys are an error.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("experiment config must be a JSON object");
  std::vector<std::string> unknown;
  for (const auto& [k, v] : j.items()) {
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) unknown.push_back(k);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ValidationError(msg);
  }
  try {
    ExperimentConfig c;
    if (j.contains("preset")) {
      c = preset(j.at("preset").get<std::string>());
    } else {
      c = default_config(parse_scheme(j.value("scheme", std::string("gumbel"))),
                         parse_mode(j.value("mode", std::string("complete"))),
                         parse_regime(j.value("regime", std::string("fixed_alpha"))));
    }
    if (j.contains("name")) c.name = j["name"].get<std::string>();
    if (j.contains("scheme")) c.scheme = parse_scheme(j["scheme"].get<std::string>());
    if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("regime")) c.regime = parse_regime(j["regime"].get<std::string>());
    if (j.contains("m")) c.m = j["m"].get<std::size_t>();
    if (j.contains("reps")) c.reps = j["reps"].get<std::size_t>();
    if (j.contains("lengths")) c.lengths = j["lengths"].get<std::vector<std::size_t>>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("delta") && (j.contains("delta_min") || j.contains("delta_max"))) {
      throw ValidationError("give either delta or delta_min/delta_max, not both");
    }
    if (j.contains("delta")) c.delta = DeltaPolicy::fixed(j["delta"].get<double>());
    if (j.contains("delta_min") || j.contains("delta_max")) {
      if (!j.contains("delta_min") || !j.contains("delta_max")) {
        throw ValidationError("delta_min and delta_max must be given together");
      }
      c.delta = DeltaPolicy::interval(j["delta_min"].get<double>(), j["delta_max"].get<double>());
    }
    if (j.contains("theta")) c.theta = j["theta"].get<double>();
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("scores")) {
      c.scores.clear();
      for (const auto& s : j["scores"]) c.scores.push_back(parse_score(s.get<std::string>()));
    } else if (j.contains("scheme") && !j.contains("preset")) {
      c.scores = c.scheme == Scheme::redgreen ? std::vector{ScoreChoice::opt}
                                              : std::vector{ScoreChoice::opt, ScoreChoice::ars, ScoreChoice::log};
    }
    if (j.contains("theta_sweep")) c.theta_sweep = j["theta_sweep"].get<std::vector<double>>();
    if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
    if (j.contains("prompt_length")) c.prompt_length = j["prompt_length"].get<std::size_t>();
    if (j.contains("sum_rule")) c.opt_sum_rule = parse_sum_rule(j["sum_rule"].get<std::string>());
    if (j.contains("delta_trace")) c.delta_trace = j["delta_trace"].get<std::string>();
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed experiment config: ") + e.what());
  }
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["scheme"] = std::string(to_string(c.scheme));
  j["mode"] = std::string(to_string(c.mode));
  j["regime"] = std::string(to_string(c.regime));
  j["m"] = c.m;
  j["reps"] = c.reps;
  j["lengths"] = c.lengths;
  j["alpha"] = c.alpha;
  if (c.delta.kind == DeltaPolicy::Kind::fixed) {
    j["delta"] = c.delta.value;
  } else {
    j["delta_min"] = c.delta.lo;
    j["delta_max"] = c.delta.hi;
  }
  j["theta"] = c.theta;
  j["gamma"] = c.gamma;
  j["seed"] = c.seed;
  std::vector<std::string> scores;
  for (auto s : c.scores) scores.emplace_back(to_string(s));
  j["scores"] = scores;
  j["theta_sweep"] = c.theta_sweep;
  j["workers"] = c.workers;
  j["prompt_length"] = c.prompt_length;
  j["sum_rule"] = std::string(to_string(c.opt_sum_rule));
  if (!c.delta_trace.empty()) j["delta_trace"] = c.delta_trace;
  return j;
}

// ---- curves ------------------------------------------------------------------

namespace metrics {
inline constexpr std::string_view kType1 = "type1";
inline constexpr std::string_view kType2 = "type2";
inline constexpr std::string_view kSum = "type1+type2";
inline constexpr std::string_view kType2Theory = "type2_theory";
}  // namespace metrics

struct CurvePoint {
  std::size_t n = 0;
  std::string metric;
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t reps = 0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct ErrorCurve {
  Scheme scheme = Scheme::gumbel;
  Mode mode = Mode::complete;
  Regime regime = Regime::fixed_alpha;
  std::string score;
  /// Detector theta for partial modes (the swept value for red-green sum); 1 for complete.
  double theta = 1.0;
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;
  friend bool operator==(const ErrorCurve&, const ErrorCurve&) = default;

  /// Point with the given n and metric; throws when missing.
  const CurvePoint& at(std::size_t n, std::string_view metric) const {
    for (const auto& p : points) {
      if (p.n == n && p.metric == metric) return p;
    }
    throw ContractError("curve has no point n=" + std::to_string(n) + " metric=" + std::string(metric));
  }
};

/// Binomial standard error sqrt(p(1-p)/reps).
inline double binomial_se(double p, std::size_t reps) {
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(reps));
}

/// Normal-approximation type II error of the red-green fixed-alpha test when P(Y=1) = theta.
inline double rg_type2_theory(std::size_t n, double gamma, double theta, double alpha) {
  if (theta >= 1.0) return 0.0;
  const double s = std::sqrt(theta * (1.0 - theta));
  const double z = alpha == 0.5 ? 0.0 : inverse_normal_cdf(1.0 - alpha);
  const double arg = std::sqrt(static_cast<double>(n)) * (gamma - theta) / s + std::sqrt(gamma * (1.0 - gamma)) / s * z;
  return normal_cdf(arg);
}

// ---- thresholds ----------------------------------------------------------------

/// A threshold as a function of n: slope*n + root*sqrt(n) + constant, or ceil(n*fraction) for
/// the partial red-green sum rule.
struct ThresholdForm {
  double slope = 0.0;
  double root = 0.0;
  double constant = 0.0;
  bool ceil_rule = false;
  double gamma = 0.5;
  double theta = 0.8;

  double at(std::size_t n) const {
    if (ceil_rule) return static_cast<double>(rg_sum_threshold(n, gamma, theta, Mode::partial));
    const double nn = static_cast<double>(n);
    return slope * nn + root * std::sqrt(nn) + constant;
  }
};

/// Runs body(i) for i in [0, count) on up to `workers` threads; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t count, std::size_t workers, F&& body) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) body(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(count);
    }
  };
  const std::size_t w = std::min(workers, count);
  if (w <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < w; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

/// Chernoff-balanced sum threshold per token, tabulated over delta and linearly
/// interpolated. Nodes are spaced quadratically, denser towards small delta.
class ChernoffTable {
 public:
  ChernoffTable() = default;
  ChernoffTable(ScoreChoice score, Mode mode, double theta, double lo, double hi, std::size_t workers = 1,
                std::size_t nodes = 41)
      : lo_(lo), hi_(hi) {
    const std::size_t count = lo == hi ? 1 : std::max<std::size_t>(nodes, 2);
    tau_.resize(count);
    parallel_for(count, workers, [&](std::size_t i) { tau_[i] = per_token(score, mode, theta, node(i, count)); });
  }

  static double per_token(ScoreChoice score, Mode mode, double theta, double delta) {
    const ScoreFunction h = make_score(Scheme::gumbel, mode, score, delta, theta);
    const auto s = exponent_sum(h, delta, mode == Mode::partial ? std::optional(theta) : std::nullopt);
    return chernoff_balanced_threshold(s, 1);
  }

  double at(double delta) const {
    if (tau_.empty()) throw ContractError("empty Chernoff table");
    if (tau_.size() == 1) return tau_[0];
    const double u = std::clamp((delta - lo_) / (hi_ - lo_), 0.0, 1.0);
    const double x = std::sqrt(u) * static_cast<double>(tau_.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(x), tau_.size() - 2);
    const double d0 = node(i, tau_.size()), d1 = node(i + 1, tau_.size());
    const double w = std::clamp((delta - d0) / (d1 - d0), 0.0, 1.0);
    return (1.0 - w) * tau_[i] + w * tau_[i + 1];
  }

 private:
  double node(std::size_t i, std::size_t count) const {
    if (count == 1) return lo_;
    const double u = static_cast<double>(i) / static_cast<double>(count - 1);
    return lo_ + (hi_ - lo_) * u * u;
  }

  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<double> tau_;
};

struct DetectorSpec {
  ScoreChoice score = ScoreChoice::opt;
  double theta = 1.0;
};

inline std::vector<DetectorSpec> detectors_of(const ExperimentConfig& c) {
  std::vector<DetectorSpec> out;
  const double label_theta = c.mode == Mode::partial ? c.theta : 1.0;
  if (c.scheme == Scheme::redgreen && c.mode == Mode::partial && c.regime == Regime::sum) {
    for (double t : c.theta_sweep) out.push_back({ScoreChoice::opt, t});
    return out;
  }
  for (auto s : c.scores) out.push_back({s, label_theta});
  return out;
}

/// Threshold rules for every detector of an experiment. Immutable once built.
class ThresholdModel {
 public:
  explicit ThresholdModel(const ExperimentConfig& c) : config_(c), detectors_(detectors_of(c)) {
    if (c.scheme == Scheme::gumbel) {
      for (const auto& d : detectors_) {
        if (d.score != ScoreChoice::opt) const_moments_.push_back(moments_h0(make_score(c.scheme, c.mode, d.score, 0.5, d.theta)));
        else const_moments_.push_back(Moments{});
      }
      z_ = c.alpha == 0.5 ? 0.0 : inverse_normal_cdf(1.0 - c.alpha);
      if (c.regime == Regime::sum) {
        for (const auto& d : detectors_) {
          if (uses_chernoff(d)) {
            tables_.emplace_back(d.score, c.mode, d.theta, c.delta.kind == DeltaPolicy::Kind::fixed ? c.delta.value : c.delta.lo,
                                 c.delta.kind == DeltaPolicy::Kind::fixed ? c.delta.value : c.delta.hi, c.workers);
          } else {
            tables_.emplace_back();
          }
        }
      }
    } else {
      z_ = c.alpha == 0.5 ? 0.0 : inverse_normal_cdf(1.0 - c.alpha);
    }
    // A fixed delta gives one threshold form per detector; solve it once.
    if (c.delta.kind == DeltaPolicy::Kind::fixed || c.scheme == Scheme::redgreen) {
      for (std::size_t i = 0; i < detectors_.size(); ++i) fixed_forms_.push_back(solve_form(i, c.delta.value));
    }
  }

  const std::vector<DetectorSpec>& detectors() const { return detectors_; }

  bool uses_chernoff(const DetectorSpec& d) const {
    return config_.scheme == Scheme::gumbel && config_.regime == Regime::sum &&
           (d.score != ScoreChoice::opt || config_.opt_sum_rule == SumThresholdRule::chernoff_balanced);
  }

  ScoreFunction score(std::size_t i, double delta) const {
    return make_score(config_.scheme, config_.mode, detectors_[i].score, delta, detectors_[i].theta);
  }

  ThresholdForm form(std::size_t i, double delta) const {
    if (!fixed_forms_.empty()) return fixed_forms_[i];
    return solve_form(i, delta);
  }

 private:
  ThresholdForm solve_form(std::size_t i, double delta) const {
    const auto& d = detectors_[i];
    ThresholdForm f;
    if (config_.scheme == Scheme::redgreen) {
      if (config_.regime == Regime::fixed_alpha) {
        f.slope = config_.gamma;
        f.root = std::sqrt(config_.gamma * (1.0 - config_.gamma)) * z_;
      } else if (config_.mode == Mode::complete) {
        f.slope = 1.0;
      } else {
        f.ceil_rule = true;
        f.gamma = config_.gamma;
        f.theta = d.theta;
      }
      return f;
    }
    if (config_.regime == Regime::fixed_alpha) {
      const Moments mom = d.score == ScoreChoice::opt ? moments_h0(score(i, delta)) : const_moments_[i];
      f.slope = mom.mean;
      f.root = z_ * std::sqrt(mom.variance);
      return f;
    }
    if (uses_chernoff(d)) {
      f.slope = tables_[i].at(delta);
    } else {
      f.constant = config_.mode == Mode::partial ? sum_threshold_gumbel_partial(delta, d.theta).threshold
                                                 : sum_threshold_gumbel_complete(delta).threshold;
    }
    return f;
  }

  ExperimentConfig config_;
  std::vector<DetectorSpec> detectors_;
  std::vector<Moments> const_moments_;
  std::vector<ChernoffTable> tables_;
  std::vector<ThresholdForm> fixed_forms_;
  double z_ = 0.0;
};

// ---- simulation ------------------------------------------------------------------

namespace streams {
inline constexpr std::uint64_t kRepDelta = 0x44454c5441ULL;
inline constexpr std::uint64_t kRepSequence = 0x53455155454eULL;
}  // namespace streams

/// One simulated text: the sequence for (hypothesis, n, rep). Hypothesis 0 is H0.
inline std::vector<PivotalValue> simulate_pivotals(const ExperimentConfig& c, int hypothesis, std::size_t n,
                                                   std::size_t rep, double delta) {
  Rng noise(derive_stream(c.seed, {streams::kRepSequence, static_cast<std::uint64_t>(hypothesis), n, rep}));
  const KeySalt salt{noise()};
  ScenarioSpec spec;
  spec.scheme = c.scheme;
  spec.mode = hypothesis == 0 ? Mode::null : c.mode;
  spec.params = DistributionClassParams{delta, c.theta, c.gamma};
  spec.ntp = hypothesis == 1 && c.scheme == Scheme::gumbel ? NtpPolicy::spike(delta) : NtpPolicy::uniform();
  spec.m = c.m;
  spec.n = n;
  spec.prompt = random_prompt(c.m, c.prompt_length, noise);
  const GeneratedText text = generate_sequence(spec, salt, noise);

  std::vector<PivotalValue> out;
  out.reserve(n);
  if (c.scheme == Scheme::gumbel) {
    for (std::size_t t = 0; t < n; ++t) out.push_back(pivotal_gumbel(text.tokens[t], text.key_seeds[t], c.m));
  } else {
    GreenList green;
    std::vector<Token> perm;
    for (std::size_t t = 0; t < n; ++t) {
      greenlist_key_into(text.key_seeds[t], c.m, c.gamma, green, perm);
      out.push_back(pivotal_rg(text.tokens[t], green));
    }
  }
  return out;
}

/// Delta assigned to (hypothesis, rep); shared by every length.
inline double rep_delta(const ExperimentConfig& c, int hypothesis, std::size_t rep) {
  if (c.scheme != Scheme::gumbel) return 0.5;
  Rng noise(derive_stream(c.seed, {streams::kRepDelta, static_cast<std::uint64_t>(hypothesis), rep}));
  return c.delta.draw(noise);
}

/// Rejection counts indexed [hypothesis][length][detector].
struct Tally {
  std::size_t lengths = 0;
  std::size_t detectors = 0;
  std::vector<std::uint64_t> rejects;

  Tally(std::size_t l, std::size_t d) : lengths(l), detectors(d), rejects(2 * l * d, 0) {}
  std::uint64_t& at(int h, std::size_t li, std::size_t di) {
    return rejects[(static_cast<std::size_t>(h) * lengths + li) * detectors + di];
  }
  std::uint64_t at(int h, std::size_t li, std::size_t di) const {
    return rejects[(static_cast<std::size_t>(h) * lengths + li) * detectors + di];
  }
};

struct SimulationResult {
  Tally tally;
  /// Delta per (hypothesis, rep), only for Gumbel.
  std::vector<std::array<double, 2>> deltas;
};

/// Runs every (hypothesis, rep) task for the requested hypotheses. Each task depends only on
/// its own streams and its outcome bits are stored by index, so the counts do not depend on
/// the worker count or scheduling.
inline SimulationResult simulate(const ExperimentConfig& c, bool run_h0, bool run_h1) {
  validate(c);
  const ThresholdModel model(c);
  const std::size_t nd = model.detectors().size();
  const std::size_t nl = c.lengths.size();
  std::vector<int> hyps;
  if (run_h0) hyps.push_back(0);
  if (run_h1) hyps.push_back(1);
  const std::size_t tasks = hyps.size() * c.reps;
  std::vector<std::uint8_t> outcome(tasks * nl * nd, 0);
  std::vector<std::array<double, 2>> deltas(c.reps, {kNaN, kNaN});

  parallel_for(tasks, c.workers, [&](std::size_t task) {
    const int h = hyps[task / c.reps];
    const std::size_t rep = task % c.reps;
    const double delta = rep_delta(c, h, rep);
    deltas[rep][static_cast<std::size_t>(h)] = delta;
    std::vector<ScoreFunction> scores;
    std::vector<ThresholdForm> forms;
    for (std::size_t d = 0; d < nd; ++d) {
      scores.push_back(model.score(d, c.scheme == Scheme::gumbel ? delta : 0.5));
      forms.push_back(model.form(d, delta));
    }
    for (std::size_t li = 0; li < nl; ++li) {
      const auto piv = simulate_pivotals(c, h, c.lengths[li], rep, delta);
      for (std::size_t d = 0; d < nd; ++d) {
        const double stat = sum_scores(piv, scores[d]);
        outcome[(task * nl + li) * nd + d] = decide(stat, forms[d].at(c.lengths[li])) == Decision::reject;
      }
    }
  });

  SimulationResult res{Tally(nl, nd), std::move(deltas)};
  for (std::size_t task = 0; task < tasks; ++task) {
    const int h = hyps[task / c.reps];
    for (std::size_t li = 0; li < nl; ++li) {
      for (std::size_t d = 0; d < nd; ++d) res.tally.at(h, li, d) += outcome[(task * nl + li) * nd + d];
    }
  }
  return res;
}

inline void write_delta_trace(const ExperimentConfig& c, const SimulationResult& res, bool h0, bool h1) {
  if (c.delta_trace.empty() || c.scheme != Scheme::gumbel) return;
  std::ofstream out(c.delta_trace);
  if (!out) throw IoError("cannot open delta trace file '" + c.delta_trace + "'");
  out << "hypothesis,rep,delta\n";
  char buf[64];
  for (int h = 0; h < 2; ++h) {
    if ((h == 0 && !h0) || (h == 1 && !h1)) continue;
    for (std::size_t rep = 0; rep < c.reps; ++rep) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, res.deltas[rep][static_cast<std::size_t>(h)]);
      out << (h == 0 ? "H0" : "H1") << ',' << rep << ',' << std::string_view(buf, end) << '\n';
    }
  }
  if (!out) throw IoError("failed writing delta trace file '" + c.delta_trace + "'");
}

inline std::vector<ErrorCurve> build_curves(const ExperimentConfig& c, const SimulationResult& res, bool h0, bool h1) {
  const auto dets = detectors_of(c);
  std::vector<ErrorCurve> curves;
  const double reps = static_cast<double>(c.reps);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    ErrorCurve curve{c.scheme, c.mode, c.regime, std::string(to_string(dets[d].score)), dets[d].theta, c.seed, {}};
    for (std::size_t li = 0; li < c.lengths.size(); ++li) {
      const std::size_t n = c.lengths[li];
      const double p1 = static_cast<double>(res.tally.at(0, li, d)) / reps;
      const double p2 = 1.0 - static_cast<double>(res.tally.at(1, li, d)) / reps;
      if (h0) curve.points.push_back({n, std::string(metrics::kType1), p1, binomial_se(p1, c.reps), c.reps});
      if (h1) curve.points.push_back({n, std::string(metrics::kType2), p2, binomial_se(p2, c.reps), c.reps});
      if (h0 && h1 && c.regime == Regime::sum) {
        const double se = std::hypot(binomial_se(p1, c.reps), binomial_se(p2, c.reps));
        curve.points.push_back({n, std::string(metrics::kSum), p1 + p2, se, c.reps});
      }
      if (h1 && c.scheme == Scheme::redgreen && c.regime == Regime::fixed_alpha) {
        const double generator_theta = c.mode == Mode::partial ? c.theta : 1.0;
        curve.points.push_back(
            {n, std::string(metrics::kType2Theory), rg_type2_theory(n, c.gamma, generator_theta, c.alpha), 0.0, c.reps});
      }
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

inline std::vector<ErrorCurve> run_hypotheses(const ExperimentConfig& c, bool h0, bool h1) {
  const auto res = simulate(c, h0, h1);
  write_delta_trace(c, res, h0, h1);
  return build_curves(c, res, h0, h1);
}

/// Rejection rate under H0 for every detector and length.
inline std::vector<ErrorCurve> run_type1(const ExperimentConfig& c) { return run_hypotheses(c, true, false); }

/// Retention rate under H1; red-green fixed-alpha runs also carry the normal-approximation rows.
inline std::vector<ErrorCurve> run_type2(const ExperimentConfig& c) { return run_hypotheses(c, false, true); }

/// Both batches with the summed error; uses the sum-regime thresholds regardless of c.regime.
inline std::vector<ErrorCurve> run_sum(ExperimentConfig c) {
  c.regime = Regime::sum;
  return run_hypotheses(c, true, true);
}

/// Both hypotheses under c.regime.
inline std::vector<ErrorCurve> run_experiment(const ExperimentConfig& c) { return run_hypotheses(c, true, true); }

// ---- CSV ---------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader = "scheme,mode,regime,score,theta,n,metric,estimate,stderr,reps,seed";

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline auto curve_key(const ErrorCurve& c) {
  return std::make_tuple(std::string(to_string(c.scheme)), std::string(to_string(c.mode)),
                         std::string(to_string(c.regime)), c.score, c.theta, c.seed);
}

}  // namespace detail

/// Curves sorted by label and points by (n, metric): the order emit_csv writes.
inline std::vector<ErrorCurve> canonical(std::vector<ErrorCurve> curves) {
  for (auto& c : curves) {
    std::sort(c.points.begin(), c.points.end(),
              [](const CurvePoint& a, const CurvePoint& b) { return std::tie(a.n, a.metric) < std::tie(b.n, b.metric); });
  }
  std::stable_sort(curves.begin(), curves.end(),
                   [](const ErrorCurve& a, const ErrorCurve& b) { return detail::curve_key(a) < detail::curve_key(b); });
  return curves;
}

inline void emit_csv(const std::vector<ErrorCurve>& curves, std::ostream& out) {
  if (curves.empty()) throw ContractError("no curves to emit");
  out << kCsvHeader << '\n';
  for (const auto& c : canonical(curves)) {
    for (const auto& p : c.points) {
      out << to_string(c.scheme) << ',' << to_string(c.mode) << ',' << to_string(c.regime) << ',' << c.score << ','
          << detail::format_double(c.theta) << ',' << p.n << ',' << p.metric << ','
          << detail::format_double(p.estimate) << ',' << detail::format_double(p.stderr_) << ',' << p.reps << ','
          << c.seed << '\n';
    }
  }
}

inline void emit_csv(const std::vector<ErrorCurve>& curves, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  emit_csv(curves, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

namespace detail {

template <class T>
T parse_number(std::string_view s, std::size_t line, std::string_view what) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IoError("line " + std::to_string(line) + ": bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// Inverse of emit_csv; consecutive rows with equal labels form one curve.
inline std::vector<ErrorCurve> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw IoError("line 1: expected CSV header");
  std::vector<ErrorCurve> curves;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto pos = rest.find(',');
      f.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (f.size() != 11) throw IoError("line " + std::to_string(lineno) + ": expected 11 fields");
    ErrorCurve key;
    try {
      key.scheme = parse_scheme(f[0]);
      key.mode = parse_mode(f[1]);
      key.regime = parse_regime(f[2]);
    } catch (const ValidationError& e) {
      throw IoError("line " + std::to_string(lineno) + ": " + e.what());
    }
    key.score = std::string(f[3]);
    key.theta = detail::parse_number<double>(f[4], lineno, "theta");
    key.seed = detail::parse_number<std::uint64_t>(f[10], lineno, "seed");
    CurvePoint p{detail::parse_number<std::size_t>(f[5], lineno, "n"), std::string(f[6]),
                 detail::parse_number<double>(f[7], lineno, "estimate"),
                 detail::parse_number<double>(f[8], lineno, "stderr"),
                 detail::parse_number<std::size_t>(f[9], lineno, "reps")};
    if (curves.empty() || detail::curve_key(curves.back()) != detail::curve_key(key)) curves.push_back(std::move(key));
    curves.back().points.push_back(std::move(p));
  }
  return curves;
}

/// Fixed-width table of every curve point, for terminals.
inline void print_summary(const std::vector<ErrorCurve>& curves, std::ostream& out) {
  out << std::left << std::setw(9) << "scheme" << std::setw(9) << "mode" << std::setw(12) << "regime" << std::setw(6)
      << "score" << std::setw(7) << "theta" << std::setw(6) << "n" << std::setw(14) << "metric" << std::setw(10)
      << "estimate" << "stderr\n";
  for (const auto& c : canonical(curves)) {
    for (const auto& p : c.points) {
      std::ostringstream th, est, se;
      th << std::setprecision(3) << c.theta;
      est << std::fixed << std::setprecision(4) << p.estimate;
      se << std::fixed << std::setprecision(4) << p.stderr_;
      out << std::setw(9) << to_string(c.scheme) << std::setw(9) << to_string(c.mode) << std::setw(12)
          << to_string(c.regime) << std::setw(6) << c.score << std::setw(7) << th.str() << std::setw(6) << p.n
          << std::setw(14) << p.metric << std::setw(10) << est.str() << se.str() << '\n';
    }
  }
}

}  // namespace wmd
