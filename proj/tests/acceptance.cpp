// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "wmd/wmd.hpp"

using namespace wmd;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string csv_of(const std::vector<ErrorCurve>& curves) {
  std::ostringstream os;
  emit_csv(curves, os);
  return os.str();
}

const ErrorCurve& curve_for(const std::vector<ErrorCurve>& curves, const std::string& score, double theta = -1) {
  for (const auto& c : curves) {
    if (c.score == score && (theta < 0 || c.theta == theta)) return c;
  }
  throw std::runtime_error("missing curve " + score);
}

// Desk runs are shared by several criteria.
struct DeskRun {
  std::vector<ErrorCurve> curves;
  std::string csv;
  double seconds = 0.0;
};

std::map<std::string, DeskRun> desk;

const DeskRun& desk_run(const std::string& name) {
  auto it = desk.find(name);
  if (it != desk.end()) return it->second;
  const auto t0 = std::chrono::steady_clock::now();
  DeskRun r;
  r.curves = run_experiment(preset(name));
  r.seconds = seconds_since(t0);
  r.csv = csv_of(r.curves);
  return desk.emplace(name, std::move(r)).first->second;
}

const std::vector<std::string> kTypeOnePresets{"desk-gumbel-complete", "desk-gumbel-partial", "desk-redgreen-complete",
                                               "desk-redgreen-partial"};

void criterion1() {
  bool ok = true;
  double worst = 0.0, total_seconds = 0.0;
  std::string where, misses;
  for (const auto& name : kTypeOnePresets) {
    const auto& run = desk_run(name);
    total_seconds += run.seconds;
    for (const auto& c : run.curves) {
      for (const auto& p : c.points) {
        if (p.metric != metrics::kType1) continue;
        const double band = p.n == 500 ? 0.015 : 0.02;
        const double dev = std::abs(p.estimate - 0.05);
        if (dev > worst) worst = dev, where = name + "/" + c.score + "/n=" + std::to_string(p.n);
        if (dev > band) {
          ok = false;
          misses += " " + name + "/" + c.score + "/n=" + std::to_string(p.n) + "=" + fmt("%.3f", p.estimate);
        }
      }
    }
  }
  const bool fast = total_seconds < 300.0;
  report(1, "type I alignment", ok && fast,
         "max |type1-0.05| = " + fmt("%.4f", worst) + " at " + where + "; serial runtime " +
             fmt("%.1f", total_seconds) + " s" + (misses.empty() ? "" : "; outside band:" + misses));
}

void criterion2() {
  ScenarioSpec spec;
  spec.m = 1000;
  spec.n = 500;
  std::vector<double> y;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng noise(derive_stream(2, {s}));
    spec.prompt = random_prompt(spec.m, 5, noise);
    const auto text = generate_sequence(spec, KeySalt{noise()}, noise);
    for (std::size_t t = 0; t < spec.n; ++t) y.push_back(pivotal_gumbel(text.tokens[t], text.key_seeds[t], spec.m).value);
  }
  const double d = oracle::ks_statistic(y, [](double r) { return r; });
  const double crit = oracle::ks_critical_1pct(y.size());
  report(2, "H0 pivotal law", d < crit,
         "KS D = " + fmt("%.5f", d) + " vs 1% critical " + fmt("%.5f", crit) + " over " + std::to_string(y.size()));
}

// Closed forms written out independently of the library evaluators.
double complete_cdf(double r, const std::vector<double>& p) {
  double s = 0.0;
  for (double pi : p) {
    if (pi > 0) s += pi * std::pow(r, 1.0 / pi);
  }
  return s;
}

double partial_cdf(double r, const std::vector<double>& p, const std::vector<std::vector<double>>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    s += p[i] * std::pow(r, 1.0 / p[i]) * q[i][i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (j != i && q[i][j] > 0) s += p[i] / (1 - p[j]) * (r - (p[j] > 0 ? p[j] * std::pow(r, 1.0 / p[j]) : 0.0)) * q[i][j];
    }
  }
  return s;
}

template <class Draw>
std::vector<double> sample_pivotals(std::size_t m, std::uint64_t seed, Draw draw) {
  Rng keys(seed), noise(seed + 1);
  std::vector<double> y;
  for (int i = 0; i < 10000; ++i) {
    GumbelKey k{std::vector<double>(m)};
    for (auto& u : k.u) u = keys.uniform01();
    y.push_back(k.u[static_cast<std::size_t>(draw(k, noise))]);
  }
  return y;
}

void criterion3() {
  std::string detail;
  bool ok = true;
  auto check = [&](const std::string& label, std::vector<double> y, const std::function<double(double)>& cdf) {
    const double gap = oracle::sup_gap(y, cdf);
    ok = ok && gap < 0.02;
    detail += label + " gap " + fmt("%.4f", gap) + "; ";
  };
  const NtpDistribution half(std::vector<double>{0.5, 0.5});
  check("P=(.5,.5)", sample_pivotals(2, 11, [&](const GumbelKey& k, Rng&) { return gumbel_complete_next(half, k); }),
        [](double r) { return complete_cdf(r, {0.5, 0.5}); });
  const auto pstar = least_favorable_ntp(0.4, 4);
  const std::vector<double> pv(pstar.probs().begin(), pstar.probs().end());
  check("P*(0.4,m=4)", sample_pivotals(4, 13, [&](const GumbelKey& k, Rng&) { return gumbel_complete_next(pstar, k); }),
        [&](double r) { return complete_cdf(r, pv); });

  const std::vector<std::vector<double>> qstar{{0.8, 0.2}, {0.2, 0.8}};
  const auto q = least_favorable_feature_matrix(0.8, 2);
  auto y = sample_pivotals(2, 15, [&](const GumbelKey& k, Rng& n) { return gumbel_feature_matrix_next(half, k, q, n); });
  check("partial Q*(0.8)", y, [&](double r) { return partial_cdf(r, {0.5, 0.5}, qstar); });
  const double spot_formula = partial_cdf(0.5, {0.5, 0.5}, qstar);
  const double spot_lib = cdf_h1_gumbel_partial(0.5, half, q);
  double below = 0;
  for (double v : y) below += v <= 0.5;
  below /= static_cast<double>(y.size());
  const bool spot_ok = std::abs(spot_formula - 0.35) < 1e-12 && std::abs(spot_lib - 0.35) < 1e-12 &&
                       std::abs(below - 0.35) < 0.02;
  ok = ok && spot_ok;
  detail += "F(0.5) formula " + fmt("%.6f", spot_lib) + ", empirical " + fmt("%.4f", below) + "; ";
  // The theta' ~ U[theta,1] sampler averages to diag 0.9 with the residual 0.1 off the diagonal.
  const std::vector<std::vector<double>> qbar{{0.9, 0.1}, {0.1, 0.9}};
  check("theta'-sampler", sample_pivotals(2, 17, [&](const GumbelKey& k, Rng& n) { return gumbel_partial_next(half, k, 0.8, n); }),
        [&](double r) { return partial_cdf(r, {0.5, 0.5}, qbar); });
  report(3, "H1 CDF oracles", ok, detail);
}

void criterion4() {
  bool ok = true;
  double worst = -1.0;
  std::string where;
  for (const std::string name : {"desk-gumbel-complete", "desk-gumbel-partial", "desk-gumbel-complete-sum",
                                 "desk-gumbel-partial-sum"}) {
    const auto& run = desk_run(name);
    const bool sum = name.ends_with("-sum");
    const std::string metric(sum ? metrics::kSum : metrics::kType2);
    const auto& opt = curve_for(run.curves, "opt");
    for (const std::string base : {"ars", "log"}) {
      const auto& b = curve_for(run.curves, base);
      for (std::size_t n = 100; n <= 500; n += 100) {
        const auto& po = opt.at(n, metric);
        const auto& pb = b.at(n, metric);
        const double se = std::hypot(po.stderr_, pb.stderr_);
        const double excess = (po.estimate - pb.estimate) / std::max(se, 1e-12);
        if (excess > worst) worst = excess, where = name + " vs " + base + " n=" + std::to_string(n);
        if (po.estimate > pb.estimate + 2.0 * se) ok = false;
      }
    }
  }
  report(4, "score dominance", ok, "largest (opt - baseline)/SE = " + fmt("%.2f", worst) + " at " + where);
}

void criterion5() {
  auto c = default_config(Scheme::redgreen, Mode::complete, Regime::sum);
  c.m = 100;
  c.reps = 20000;
  c.lengths.clear();
  for (std::size_t n = 1; n <= 12; ++n) c.lengths.push_back(n);
  const auto curves = run_experiment(c);
  bool ok = true;
  double worst = 0.0;
  for (const auto& p : curves[0].points) {
    if (p.metric == metrics::kType2 && p.estimate != 0.0) ok = false;
    if (p.metric != metrics::kType1) continue;
    const double exact = oracle::enumerate_rejection(static_cast<int>(p.n), 0.5, static_cast<double>(p.n));
    const double se = std::sqrt(exact * (1 - exact) / c.reps);
    const double dev = std::abs(p.estimate - exact);
    worst = std::max(worst, dev / (4 * se + 1.0 / c.reps));
    if (dev > 4 * se + 1.0 / c.reps) ok = false;
    if (std::abs(exact - std::pow(0.5, static_cast<double>(p.n))) > 1e-15) ok = false;
  }
  // Statistic is exactly n under complete inheritance.
  for (std::size_t rep = 0; rep < 200 && ok; ++rep) {
    for (std::size_t n : {1u, 50u, 300u}) {
      const auto y = simulate_pivotals(c, 1, n, rep, 0.5);
      if (sum_scores(y, ScoreFunction::indicator()) != static_cast<double>(n)) ok = false;
    }
  }
  report(5, "red-green exactness", ok,
         "H1 rejection 1 at n<=12, H0 rejection vs gamma^n within " + fmt("%.2f", worst) + " of the 4SE+1/reps band");
}

void criterion6() {
  auto c = default_config(Scheme::redgreen, Mode::partial, Regime::fixed_alpha);
  c.m = 100;
  c.reps = 2000;
  c.lengths = {100, 400};
  const auto curves = run_type2(c);
  bool ok = true;
  std::string detail;
  for (std::size_t n : {100u, 400u}) {
    const double emp = curves[0].at(n, metrics::kType2).estimate;
    const double z = oracle::normal_quantile(0.95);
    const double arg = std::sqrt(static_cast<double>(n)) * (0.5 - 0.8) / std::sqrt(0.16) + std::sqrt(0.25 / 0.16) * z;
    const double theory = 0.5 * std::erfc(-arg / std::sqrt(2.0));
    ok = ok && std::abs(emp - theory) <= 0.03;
    detail += "n=" + std::to_string(n) + " empirical " + fmt("%.4f", emp) + " theory " + fmt("%.2e", theory) + "; ";
  }
  report(6, "red-green partial type II closed form", ok, detail);
}

void criterion7() {
  bool ok = true;
  double worst = 0.0;
  auto grid = [](const ScoreFunction& h) {
    return oracle::grid_argmin(
        [&](double a) { return oracle::tanh_sinh([&](double r) { return std::exp(a * h(r)); }, 0.0, 1.0); },
        0.0, 1.0, 10000);
  };
  for (double d : {0.1, 0.3, 0.5, 0.75}) {
    const double gap = std::abs(sum_threshold_gumbel_complete(d).optimum - grid(ScoreFunction::opt_complete(d)).x);
    worst = std::max(worst, gap);
    ok = ok && gap <= 1e-4;
  }
  for (auto [d, t] : {std::pair{0.005, 0.8}, std::pair{0.3, 0.9}, std::pair{0.6, 0.8}}) {
    const double gap = std::abs(sum_threshold_gumbel_partial(d, t).optimum - grid(ScoreFunction::opt_partial(d, t)).x);
    worst = std::max(worst, gap);
    ok = ok && gap <= 1e-4;
  }
  const double closed = 1.0 / std::log(2.0) - 1.0;
  const double half = sum_threshold_gumbel_complete(0.5).optimum;
  ok = ok && std::abs(half - closed) <= 1e-5;
  report(7, "threshold solver oracles", ok,
         "max |golden - grid| = " + fmt("%.2e", worst) + "; alpha*(1/2) = " + fmt("%.8f", half) + " vs " +
             fmt("%.8f", closed));
}

// Exact summed error of the ceil-threshold rule at sweep value th, data at theta 0.8, gamma 0.5.
double exact_sweep_error(std::size_t n, double th) {
  const std::size_t t = rg_sum_threshold(n, 0.5, th, Mode::partial);
  const double e1 = oracle::binomial_upper_tail(static_cast<int>(n), 0.5, static_cast<int>(t));
  const double e2 = 1.0 - oracle::binomial_upper_tail(static_cast<int>(n), 0.8, static_cast<int>(t));
  return e1 + e2;
}

void criterion8() {
  const auto& run = desk_run("desk-redgreen-partial-sum");
  const std::vector<double> sweep{0.7, 0.8, 0.9, 0.95};
  bool ok = true;
  std::string detail;
  for (std::size_t n : {300u, 400u, 500u}) {
    const auto& at08 = curve_for(run.curves, "opt", 0.8).at(n, metrics::kSum);
    double exact_best = 1e9, exact_arg = 0;
    for (double th : sweep) {
      const double e = exact_sweep_error(n, th);
      if (e < exact_best) exact_best = e, exact_arg = th;
    }
    bool n_ok = exact_arg == 0.8;
    for (double th : sweep) {
      if (th == 0.8) continue;
      const auto& other = curve_for(run.curves, "opt", th).at(n, metrics::kSum);
      const double se = std::hypot(at08.stderr_, other.stderr_);
      if (at08.estimate > other.estimate) n_ok = false;
      // Separation is required where the exact gap is resolvable at this rep count.
      const double exact_gap = exact_sweep_error(n, th) - exact_sweep_error(n, 0.8);
      if (exact_gap > 4.0 * std::sqrt(exact_sweep_error(n, th) / static_cast<double>(run.curves[0].points[0].reps))) {
        if (other.estimate - at08.estimate <= 2.0 * se) n_ok = false;
      }
    }
    ok = ok && n_ok;
    detail += "n=" + std::to_string(n) + " sum(0.8)=" + fmt("%.4f", at08.estimate) +
              " sum(0.95)=" + fmt("%.4f", curve_for(run.curves, "opt", 0.95).at(n, metrics::kSum).estimate) +
              " exact argmin " + fmt("%.2f", exact_arg) + "; ";
  }
  report(8, "theta-sweep minimum", ok, detail);
}

void criterion9() {
  bool ok = true;
  std::size_t bytes = 0;
  for (const auto& name : preset_names()) {
    if (!name.starts_with("desk-")) continue;
    const auto& first = desk_run(name);
    const std::string again = csv_of(run_experiment(preset(name)));
    auto par = preset(name);
    par.workers = 4;
    const std::string parallel = csv_of(run_experiment(par));
    ok = ok && again == first.csv && parallel == first.csv;
    bytes += first.csv.size();
  }
  report(9, "determinism audit", ok, "8 desk presets rerun serially and with 4 workers, " + std::to_string(bytes) +
                                         " CSV bytes compared");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<void (*)()> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                         criterion6, criterion7, criterion8, criterion9};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), "error", false, e.what());
    }
  }
  std::cout << failures << " of " << criteria.size() << " criteria failed; total " << fmt("%.1f", seconds_since(t0))
            << " s" << std::endl;
  return failures == 0 ? 0 : 1;
}
