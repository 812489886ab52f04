#pragma once

// Command-line front end: calibrate, generate, detect, experiment.
// Exit status: 0 success, 1 runtime error, 2 usage error. A detection decision is
// printed, not encoded in the status.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wmd/calibration.hpp"
#include "wmd/detection.hpp"
#include "wmd/experiments.hpp"
#include "wmd/tokenfile.hpp"

namespace wmd::cli {

class UsageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

using wmd::detail::format_double;

inline std::string salt_text(KeySalt s) {
  std::ostringstream os;
  os << "0x" << std::hex << s.value;
  return os.str();
}

inline std::vector<Token> parse_token_list(const std::string& text) {
  std::vector<Token> out;
  std::string norm = text;
  for (char& ch : norm) {
    if (ch == ',') ch = ' ';
  }
  std::istringstream in(norm);
  std::string tok;
  while (in >> tok) out.push_back(wmd::detail::parse_token(tok, "--prompt"));
  return out;
}

struct CalibrateOptions {
  std::string scheme = "gumbel", mode = "complete", regime = "fixed_alpha", score = "opt", sum_rule = "constant";
  std::size_t n = 0;
  double delta = 0.0, theta = 0.0, gamma = 0.5, alpha = 0.05;
  bool exponents = false;
  std::string csv;
};

struct GenerateOptions {
  std::string scheme = "gumbel", mode = "null", ntp = "uniform", salt, prompt, out = "-";
  std::size_t n = 0, m = 1000, window = 5;
  double delta = 0.0, theta = 0.0, gamma = 0.5;
  std::uint64_t seed = 0;
};

struct DetectOptions {
  std::string file, salt, scheme, mode = "complete", score = "opt", regime = "fixed_alpha", sum_rule = "constant";
  std::string dump_pivotals;
  std::size_t m = 0, window = 0;
  double delta = 0.0, theta = 0.0, gamma = 0.5, alpha = 0.05;
  bool exponents = false, csv = false;
};

struct ExperimentOptions {
  std::string preset, config, out, delta_trace;
  std::size_t workers = 0, reps = 0;
  std::uint64_t seed = 0;
  bool list = false;
};

inline void print_exponent(std::ostream& out, std::string_view label, const ExponentReport& r, bool sum) {
  out << label << ": " << format_double(r.value) << '\n';
  if (sum) {
    out << label << "_theta1: " << format_double(r.theta1) << '\n';
    out << label << "_theta2: " << format_double(r.theta2) << '\n';
  } else {
    out << label << "_theta: " << format_double(r.theta) << '\n';
  }
  if (r.bracket_shrunk) out << label << "_note: search bracket shrunk at a divergent MGF\n";
}

inline int cmd_calibrate(const CalibrateOptions& o, bool has_delta, bool has_theta, std::ostream& out) {
  CalibrationRequest req;
  req.scheme = parse_scheme(o.scheme);
  req.mode = parse_mode(o.mode);
  req.regime = parse_regime(o.regime);
  req.score = parse_score(o.score);
  req.sum_rule = parse_sum_rule(o.sum_rule);
  req.n = o.n;
  req.gamma = o.gamma;
  req.alpha = o.alpha;
  if (req.mode == Mode::null) throw UsageError("--mode must be complete or partial");
  if (req.scheme == Scheme::gumbel && !has_delta) throw UsageError("--delta is required for the gumbel scheme");
  if (req.mode == Mode::partial && !has_theta) throw UsageError("--theta is required in partial mode");
  if (has_delta) req.delta = o.delta;
  if (has_theta) req.theta = o.theta;
  if (req.scheme == Scheme::redgreen && req.mode == Mode::partial && req.regime == Regime::sum &&
      !(req.theta >= req.gamma && req.theta < 1.0)) {
    throw UsageError("partial red-green sum threshold needs gamma <= theta < 1");
  }

  const ThresholdSpec spec = calibrate(req);
  out << "scheme: " << to_string(spec.scheme) << '\n'
      << "mode: " << to_string(spec.mode) << '\n'
      << "regime: " << to_string(spec.regime) << '\n'
      << "score: " << to_string(req.score) << '\n'
      << "n: " << spec.n << '\n';
  if (std::isfinite(spec.delta)) out << "delta: " << format_double(spec.delta) << '\n';
  if (std::isfinite(spec.theta)) out << "theta: " << format_double(spec.theta) << '\n';
  if (std::isfinite(spec.gamma)) out << "gamma: " << format_double(spec.gamma) << '\n';
  if (std::isfinite(spec.alpha)) out << "alpha: " << format_double(spec.alpha) << '\n';
  out << "threshold: " << format_double(spec.threshold) << '\n';
  if (spec.optimum) {
    out << spec.optimum_name << ": " << format_double(*spec.optimum) << '\n';
    out << "objective: " << format_double(spec.objective) << '\n';
    if (spec.flat) out << "note: objective is flat over the search interval\n";
  }
  if (req.regime == Regime::sum && req.scheme == Scheme::gumbel) {
    out << "sum_rule: "
        << to_string(req.score == ScoreChoice::opt ? req.sum_rule : SumThresholdRule::chernoff_balanced) << '\n';
  }
  if (o.exponents && req.scheme == Scheme::gumbel) {
    const ScoreFunction h = make_score(req.scheme, req.mode, req.score, req.delta, req.theta);
    const std::optional<double> th = req.mode == Mode::partial ? std::optional(req.theta) : std::nullopt;
    print_exponent(out, "R", th ? exponent_partial(h, req.delta, *th) : exponent_complete(h, req.delta), false);
    print_exponent(out, "S", exponent_sum(h, req.delta, th), true);
  }
  if (!o.csv.empty()) {
    ErrorCurve c{spec.scheme, spec.mode, spec.regime, std::string(to_string(req.score)),
                 req.mode == Mode::partial ? req.theta : 1.0, 0, {}};
    c.points.push_back({spec.n, "threshold", spec.threshold, 0.0, 0});
    if (spec.optimum) c.points.push_back({spec.n, spec.optimum_name, *spec.optimum, 0.0, 0});
    emit_csv({c}, o.csv);
  }
  return kExitOk;
}

inline int cmd_generate(const GenerateOptions& o, bool has_delta, bool has_theta, std::ostream& out) {
  ScenarioSpec spec;
  spec.scheme = parse_scheme(o.scheme);
  spec.mode = parse_mode(o.mode);
  spec.m = o.m;
  spec.n = o.n;
  spec.window.width = o.window;
  if (spec.mode == Mode::partial && !has_theta) throw UsageError("--theta is required in partial mode");
  if (o.ntp == "spike") {
    if (!has_delta) throw UsageError("--ntp spike needs --delta");
    spec.ntp = NtpPolicy::spike(o.delta);
  } else if (o.ntp != "uniform") {
    throw UsageError("--ntp must be uniform or spike");
  }
  spec.params = DistributionClassParams{has_delta ? o.delta : 0.5, has_theta ? o.theta : 1.0, o.gamma};
  const KeySalt salt = parse_salt(o.salt);
  Rng noise(derive_stream(o.seed, {0x67656eULL}));
  spec.prompt = o.prompt.empty() ? random_prompt(spec.m, spec.window.width, noise) : parse_token_list(o.prompt);
  const GeneratedText text = generate_sequence(spec, salt, noise);

  TokenFile f;
  f.meta["salt"] = salt_text(salt);
  f.meta["scheme"] = std::string(to_string(spec.scheme));
  f.meta["mode"] = std::string(to_string(spec.mode));
  f.meta["seed"] = std::to_string(o.seed);
  f.meta["m"] = std::to_string(spec.m);
  f.meta["n"] = std::to_string(spec.n);
  f.meta["window"] = std::to_string(spec.window.width);
  f.meta["ntp"] = o.ntp;
  if (has_delta) f.meta["delta"] = format_double(o.delta);
  if (spec.mode == Mode::partial) f.meta["theta"] = format_double(o.theta);
  if (spec.scheme == Scheme::redgreen) f.meta["gamma"] = format_double(o.gamma);
  f.prompt = text.prompt;
  f.tokens = text.tokens;
  if (o.out == "-") {
    write_tokens(f, out);
  } else {
    write_tokens(f, o.out);
  }
  return kExitOk;
}

template <class T>
T header_number(const TokenFile& f, const std::string& key, const std::string& file) {
  const auto v = f.get(key);
  T x{};
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), x);
  if (ec != std::errc{} || ptr != v->data() + v->size()) {
    throw IoError(file + ": header " + key + " is not a number: '" + *v + "'");
  }
  return x;
}

inline int cmd_detect(const DetectOptions& o, bool has_delta, bool has_theta, std::ostream& out) {
  const TokenFile f = read_tokens(o.file);
  DetectionRequest req;
  req.tokens = f.tokens;
  req.prompt = f.prompt;
  req.salt = parse_salt(o.salt);
  const std::string scheme = !o.scheme.empty() ? o.scheme : f.get("scheme").value_or("gumbel");
  req.scheme = parse_scheme(scheme);
  req.mode = parse_mode(o.mode);
  req.score = parse_score(o.score);
  req.regime = parse_regime(o.regime);
  req.sum_rule = parse_sum_rule(o.sum_rule);
  if (o.m) {
    req.m = o.m;
  } else if (f.get("m")) {
    req.m = header_number<std::size_t>(f, "m", o.file);
  } else {
    throw UsageError("--m is required when the token file has no m header");
  }
  if (o.window) {
    req.window.width = o.window;
  } else if (f.get("window")) {
    req.window.width = header_number<std::size_t>(f, "window", o.file);
  }
  if (req.mode == Mode::null) throw UsageError("--mode must be complete or partial");
  if (req.scheme == Scheme::gumbel && !has_delta) throw UsageError("--delta is required for the gumbel scheme");
  if (req.mode == Mode::partial && !has_theta) throw UsageError("--theta is required in partial mode");
  if (has_delta) req.delta = o.delta;
  if (has_theta) req.theta = o.theta;
  req.gamma = o.gamma;
  req.alpha = o.alpha;
  req.dump_pivotals = !o.dump_pivotals.empty();
  req.with_exponents = o.exponents;
  if (req.tokens.empty()) throw IoError(o.file + ": no tokens");

  const DetectionReport rep = detect(req);
  if (o.csv) {
    out << "scheme,mode,regime,score,n,statistic,threshold,decision\n"
        << to_string(req.scheme) << ',' << to_string(req.mode) << ',' << to_string(req.regime) << ',' << rep.score
        << ',' << rep.n << ',' << format_double(rep.statistic) << ',' << format_double(rep.threshold.threshold) << ','
        << to_string(rep.decision) << '\n';
  } else {
    out << "n: " << rep.n << '\n'
        << "score: " << rep.score << '\n'
        << "statistic: " << format_double(rep.statistic) << '\n'
        << "threshold: " << format_double(rep.threshold.threshold) << '\n'
        << "decision: " << to_string(rep.decision) << '\n';
    if (rep.fixed_exponent) print_exponent(out, "R", *rep.fixed_exponent, false);
    if (rep.sum_exponent) print_exponent(out, "S", *rep.sum_exponent, true);
  }
  if (req.dump_pivotals) {
    std::ofstream d(o.dump_pivotals, std::ios::binary);
    if (!d) throw IoError("cannot open '" + o.dump_pivotals + "' for writing");
    d << "t,token,pivotal\n";
    for (std::size_t t = 0; t < rep.pivotals.size(); ++t) {
      d << t + 1 << ',' << req.tokens[t] << ',' << format_double(rep.pivotals[t].value) << '\n';
    }
    if (!d) throw IoError("failed writing '" + o.dump_pivotals + "'");
  }
  return kExitOk;
}

inline int cmd_experiment(const ExperimentOptions& o, bool has_seed, std::ostream& out) {
  if (o.list) {
    for (const auto& n : preset_names()) out << n << '\n';
    return kExitOk;
  }
  if (o.preset.empty() == o.config.empty()) throw UsageError("give exactly one of --preset or --config");
  ExperimentConfig c;
  if (!o.preset.empty()) {
    c = preset(o.preset);
  } else {
    std::ifstream in(o.config);
    if (!in) throw IoError("cannot open config '" + o.config + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(o.config + ": " + e.what());
    }
    c = config_from_json(j);
  }
  if (o.workers) c.workers = o.workers;
  if (o.reps) c.reps = o.reps;
  if (has_seed) c.seed = o.seed;
  if (!o.delta_trace.empty()) c.delta_trace = o.delta_trace;
  validate(c);
  const auto curves = run_experiment(c);
  if (o.out.empty()) {
    emit_csv(curves, out);
  } else {
    emit_csv(curves, o.out);
    print_summary(curves, out);
  }
  return kExitOk;
}

}  // namespace detail

/// Runs the CLI on `args` (args[0] is the program name).
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Watermark detection toolkit: calibrate thresholds, generate and detect watermarked token sequences, "
               "run Monte Carlo experiments."};
  app.require_subcommand(1);

  detail::CalibrateOptions co;
  auto* cal = app.add_subcommand("calibrate", "Print the rejection threshold for one detector configuration");
  cal->add_option("--scheme", co.scheme, "gumbel or redgreen")->capture_default_str();
  cal->add_option("--mode", co.mode, "complete or partial")->capture_default_str();
  cal->add_option("--regime", co.regime, "fixed_alpha or sum")->capture_default_str();
  cal->add_option("--score", co.score, "opt, ars or log (red-green: opt only)")->capture_default_str();
  cal->add_option("--n", co.n, "text length")->required();
  auto* cal_delta = cal->add_option("--delta", co.delta, "NTP class parameter Delta in (0,1); required for gumbel");
  auto* cal_theta = cal->add_option("--theta", co.theta, "inheritance parameter theta in (1/2,1]; required for partial");
  cal->add_option("--gamma", co.gamma, "green list fraction")->capture_default_str();
  cal->add_option("--alpha", co.alpha, "type I level for fixed_alpha")->capture_default_str();
  cal->add_option("--sum-rule", co.sum_rule,
                  "gumbel opt sum threshold: constant (log(a/(1-a))) or chernoff_balanced (scales with n)")
      ->capture_default_str();
  cal->add_flag("--exponents", co.exponents, "also print the R and S exponents (gumbel)");
  cal->add_option("--csv", co.csv, "also write the result as CSV rows to this path");

  detail::GenerateOptions go;
  auto* gen = app.add_subcommand("generate", "Generate a token file");
  gen->add_option("--scheme", go.scheme, "gumbel or redgreen")->capture_default_str();
  gen->add_option("--mode", go.mode, "null, complete or partial")->capture_default_str();
  gen->add_option("--n", go.n, "number of tokens")->required();
  gen->add_option("--m", go.m, "vocabulary size")->capture_default_str();
  gen->add_option("--ntp", go.ntp, "NTP policy: uniform, or spike (mass 1-delta on one random token)")
      ->capture_default_str();
  auto* gen_delta = gen->add_option("--delta", go.delta, "spike NTP parameter");
  auto* gen_theta = gen->add_option("--theta", go.theta, "inheritance parameter; required for partial");
  gen->add_option("--gamma", go.gamma, "green list fraction")->capture_default_str();
  gen->add_option("--salt", go.salt, "key salt, decimal or 0x hex")->required();
  gen->add_option("--seed", go.seed, "seed for prompt, NTP and sampling noise")->capture_default_str();
  gen->add_option("--prompt", go.prompt, "prompt tokens, space or comma separated (default: random)");
  gen->add_option("--window", go.window, "key window width")->capture_default_str();
  gen->add_option("--out", go.out, "output path, - for stdout")->capture_default_str();

  detail::DetectOptions dO;
  auto* det = app.add_subcommand("detect", "Test a token file for the watermark");
  det->add_option("file", dO.file, "token file")->required();
  det->add_option("--salt", dO.salt, "key salt, decimal or 0x hex")->required();
  det->add_option("--scheme", dO.scheme, "gumbel or redgreen (default: file header, else gumbel)");
  det->add_option("--m", dO.m, "vocabulary size (default: file header)");
  det->add_option("--window", dO.window, "key window width (default: file header, else 5)");
  det->add_option("--mode", dO.mode, "assumed inheritance: complete or partial")->capture_default_str();
  det->add_option("--score", dO.score, "opt, ars or log")->capture_default_str();
  det->add_option("--regime", dO.regime, "fixed_alpha or sum")->capture_default_str();
  auto* det_delta = det->add_option("--delta", dO.delta, "NTP class parameter; required for gumbel");
  auto* det_theta = det->add_option("--theta", dO.theta, "inheritance parameter; required for partial");
  det->add_option("--gamma", dO.gamma, "green list fraction")->capture_default_str();
  det->add_option("--alpha", dO.alpha, "type I level for fixed_alpha")->capture_default_str();
  det->add_option("--sum-rule", dO.sum_rule, "constant or chernoff_balanced")->capture_default_str();
  det->add_option("--dump-pivotals", dO.dump_pivotals, "write per-token pivotal values as CSV to this path");
  det->add_flag("--exponents", dO.exponents, "also print the R and S exponents (gumbel)");
  det->add_flag("--csv", dO.csv, "print the report as one CSV row");

  detail::ExperimentOptions eo;
  auto* exp = app.add_subcommand("experiment", "Run a Monte Carlo experiment and write its CSV");
  exp->add_option("--preset", eo.preset, "named configuration (see --list-presets)");
  exp->add_option("--config", eo.config, "JSON config file (flat object; unknown keys rejected)");
  exp->add_option("--out", eo.out, "CSV output path (default: CSV to stdout, no summary)");
  exp->add_option("--workers", eo.workers, "worker threads (results do not depend on it)");
  exp->add_option("--reps", eo.reps, "override the number of repetitions");
  auto* exp_seed = exp->add_option("--seed", eo.seed, "override the master seed");
  exp->add_option("--delta-trace", eo.delta_trace, "write per-rep Delta values to this CSV path");
  exp->add_flag("--list-presets", eo.list, "list preset names and exit");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("wmdetect");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (cal->parsed()) return detail::cmd_calibrate(co, cal_delta->count() > 0, cal_theta->count() > 0, out);
    if (gen->parsed()) return detail::cmd_generate(go, gen_delta->count() > 0, gen_theta->count() > 0, out);
    if (det->parsed()) return detail::cmd_detect(dO, det_delta->count() > 0, det_theta->count() > 0, out);
    if (exp->parsed()) return detail::cmd_experiment(eo, exp_seed->count() > 0, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace wmd::cli
