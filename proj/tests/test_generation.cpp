#include <gtest/gtest.h>

#include <chrono>
#include <map>

#include "oracles.hpp"
#include "wmd/generation.hpp"
#include "wmd/statistics.hpp"

using namespace wmd;

namespace {

GumbelKey random_key(Rng& rng, std::size_t m) {
  GumbelKey k{std::vector<double>(m)};
  for (auto& x : k.u) x = rng.uniform01();
  return k;
}

}  // namespace

TEST(SampleNull, PointMass) {
  Rng rng(1);
  const NtpDistribution p(std::vector<double>{1.0, 0.0, 0.0});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_null(p, rng), 0);
}

TEST(SampleNull, FairCoinFrequency) {
  Rng rng(2);
  const NtpDistribution p(std::vector<double>{0.5, 0.5});
  int zero = 0;
  for (int i = 0; i < 100000; ++i) zero += sample_null(p, rng) == 0;
  EXPECT_NEAR(zero / 100000.0, 0.5, 0.01);
}

TEST(SampleNull, UniformChiSquare) {
  Rng rng(3);
  const std::size_t m = 1000;
  const auto p = NtpDistribution::uniform(m);
  std::vector<double> count(m, 0.0);
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) ++count[static_cast<std::size_t>(sample_null(p, rng))];
  const double e = static_cast<double>(draws) / m;
  double chi = 0.0;
  for (double c : count) chi += (c - e) * (c - e) / e;
  // p-value > 0.01 <=> statistic below the 99% quantile of chi-square(999).
  EXPECT_LT(chi, oracle::chi_square_quantile(999.0, 2.326348));
}

TEST(GumbelComplete, HandExample) {
  const NtpDistribution p(std::vector<double>{0.5, 0.5});
  const GumbelKey key{{0.9, 0.1}};
  EXPECT_EQ(gumbel_complete_next(p, key), 0);
  EXPECT_NEAR(std::log(0.9) / 0.5, -0.2107, 1e-4);
  EXPECT_NEAR(std::log(0.1) / 0.5, -4.6052, 1e-4);
}

TEST(GumbelComplete, ZeroProbabilityExcluded) {
  const NtpDistribution p(std::vector<double>{1.0, 0.0});
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(gumbel_complete_next(p, random_key(rng, 2)), 0);
  const NtpDistribution q(std::vector<double>{0.0, 0.3, 0.7});
  EXPECT_NE(gumbel_complete_next(q, GumbelKey{{0.999999, 0.1, 0.1}}), 0);
}

TEST(GumbelComplete, TiesGoToLowestIndex) {
  const NtpDistribution p(std::vector<double>{0.25, 0.25, 0.25, 0.25});
  EXPECT_EQ(gumbel_complete_next(p, GumbelKey{{0.3, 0.7, 0.7, 0.7}}), 1);
}

TEST(GumbelComplete, FrequencyMatchesNtp) {
  const NtpDistribution p(std::vector<double>{0.05, 0.1, 0.15, 0.3, 0.4});
  Rng rng(5);
  std::vector<int> count(5, 0);
  for (int i = 0; i < 100000; ++i) ++count[static_cast<std::size_t>(gumbel_complete_next(p, random_key(rng, 5)))];
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(count[i] / 100000.0, p[i], 0.01) << i;
}

TEST(GumbelComplete, SizeMismatch) {
  EXPECT_THROW(gumbel_complete_next(NtpDistribution::uniform(3), GumbelKey{{0.5, 0.5}}), ContractError);
}

TEST(GumbelPartial, ThetaOneIsComplete) {
  Rng keys(6), noise(7);
  const NtpDistribution p(std::vector<double>{0.2, 0.3, 0.5});
  for (int i = 0; i < 5000; ++i) {
    const auto k = random_key(keys, 3);
    EXPECT_EQ(gumbel_partial_next(p, k, 1.0, noise), gumbel_complete_next(p, k));
  }
}

TEST(GumbelPartial, KeepRateIsMeanOfThetaPrime) {
  Rng keys(8), noise(9);
  const NtpDistribution p(std::vector<double>{0.5, 0.5});
  int kept = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto k = random_key(keys, 2);
    kept += gumbel_partial_next(p, k, 0.8, noise) == gumbel_complete_next(p, k);
  }
  EXPECT_NEAR(kept / 100000.0, 0.9, 0.01);
}

TEST(GumbelPartial, ConditionalTvWithinBound) {
  // For a fixed key the watermark law is a point mass at the argmax, so the TV
  // distance of the emitted law from it is the probability of leaving the argmax.
  Rng keys(10), noise(11);
  const NtpDistribution p(std::vector<double>{0.1, 0.2, 0.3, 0.4});
  for (int trial = 0; trial < 5; ++trial) {
    const auto k = random_key(keys, 4);
    const Token top = gumbel_complete_next(p, k);
    std::vector<int> count(4, 0);
    const int draws = 40000;
    for (int i = 0; i < draws; ++i) ++count[static_cast<std::size_t>(gumbel_partial_next(p, k, 0.8, noise))];
    const double tv = 1.0 - count[static_cast<std::size_t>(top)] / static_cast<double>(draws);
    EXPECT_LE(tv, 0.2 + 0.01);
    // Residual mass is spread proportionally to p over the other tokens.
    const double rest = 1.0 - p[static_cast<std::size_t>(top)];
    for (std::size_t j = 0; j < 4; ++j) {
      if (static_cast<Token>(j) == top) continue;
      EXPECT_NEAR(count[j] / static_cast<double>(draws), 0.1 * p[j] / rest, 0.01);
    }
  }
}

TEST(GumbelFeatureMatrix, RowsAreFollowed) {
  Rng keys(12), noise(13);
  const NtpDistribution p(std::vector<double>{0.5, 0.5});
  const auto q = least_favorable_feature_matrix(0.8, 2);
  int kept = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto k = random_key(keys, 2);
    kept += gumbel_feature_matrix_next(p, k, q, noise) == gumbel_complete_next(p, k);
  }
  EXPECT_NEAR(kept / 100000.0, 0.8, 0.01);
}

TEST(RedGreenComplete, SingletonGreen) {
  Rng rng(14);
  auto g = greenlist_key(0, 2, 0.5);
  const Token only = g.members()[0];
  const NtpDistribution p(std::vector<double>{0.3, 0.7});
  for (int i = 0; i < 200; ++i) EXPECT_EQ(rg_complete_next(p, g, rng), only);
}

TEST(RedGreenComplete, RenormalisedFrequency) {
  // Find a 3-token list whose green set is {0, 2}; gamma = 2/3.
  GreenList g;
  for (std::uint64_t s = 0;; ++s) {
    g = greenlist_key(s, 3, 2.0 / 3.0);
    if (g.contains(0) && g.contains(2)) break;
  }
  Rng rng(15);
  const NtpDistribution p(std::vector<double>{0.2, 0.3, 0.5});
  int zero = 0;
  for (int i = 0; i < 100000; ++i) {
    const Token t = rg_complete_next(p, g, rng);
    ASSERT_TRUE(g.contains(t));
    zero += t == 0;
  }
  EXPECT_NEAR(zero / 100000.0, 2.0 / 7.0, 0.01);
}

TEST(RedGreenComplete, DegenerateSupport) {
  Rng rng(16);
  GreenList g;
  for (std::uint64_t s = 0;; ++s) {
    g = greenlist_key(s, 2, 0.5);
    if (g.contains(1)) break;
  }
  EXPECT_THROW(rg_complete_next(NtpDistribution(std::vector<double>{1.0, 0.0}), g, rng), DegenerateSupportError);
  EXPECT_THROW(rg_partial_next(NtpDistribution(std::vector<double>{0.0, 1.0}), g, 0.8, rng), DegenerateSupportError);
}

TEST(RedGreenPartial, ThetaOneIsComplete) {
  const auto g = greenlist_key(3, 10, 0.5);
  const auto p = NtpDistribution::uniform(10);
  Rng a(17), b(17);
  for (int i = 0; i < 2000; ++i) EXPECT_EQ(rg_partial_next(p, g, 1.0, a), rg_complete_next(p, g, b));
}

TEST(RedGreenPartial, GreenRateAndTv) {
  const std::size_t m = 10;
  const auto g = greenlist_key(4, m, 0.5);
  std::vector<double> raw{0.05, 0.15, 0.1, 0.1, 0.05, 0.05, 0.2, 0.1, 0.1, 0.1};
  const NtpDistribution p(raw);
  Rng rng(18);
  std::vector<int> count(m, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++count[static_cast<std::size_t>(rg_partial_next(p, g, 0.8, rng))];
  double green = 0.0, mass = 0.0;
  for (Token t : g.members()) {
    green += count[static_cast<std::size_t>(t)];
    mass += raw[static_cast<std::size_t>(t)];
  }
  EXPECT_NEAR(green / draws, 0.8, 0.01);
  double tv = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double s = g.contains(static_cast<Token>(i)) ? raw[i] / mass : 0.0;
    tv += std::abs(count[i] / static_cast<double>(draws) - s);
  }
  EXPECT_NEAR(tv / 2.0, 0.2, 0.01);
}

TEST(GenerateSequence, NullKeysIndependentOfTokens) {
  ScenarioSpec spec;
  spec.mode = Mode::null;
  spec.m = 50;
  spec.n = 100000;
  Rng noise(19);
  spec.prompt = random_prompt(spec.m, 5, noise);
  const auto text = generate_sequence(spec, KeySalt{77}, noise);
  // Under H0 the emitted token carries no information about the key at its step:
  // neither the pivotal it selects nor a fixed key entry correlates with it.
  std::vector<double> token, pivotal, entry;
  for (std::size_t t = 0; t < spec.n; ++t) {
    token.push_back(text.tokens[t]);
    pivotal.push_back(pivotal_gumbel(text.tokens[t], text.key_seeds[t], spec.m).value);
    entry.push_back(gumbel_key_entry(text.key_seeds[t], 0));
  }
  auto corr = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sx += x[i], sy += y[i], sxx += x[i] * x[i], syy += y[i] * y[i], sxy += x[i] * y[i];
    }
    return (sxy / n - sx / n * sy / n) / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  };
  EXPECT_LT(std::abs(corr(token, pivotal)), 0.01);
  EXPECT_LT(std::abs(corr(token, entry)), 0.01);
}

TEST(GenerateSequence, CompleteGumbelReplay) {
  ScenarioSpec spec;
  spec.mode = Mode::complete;
  spec.m = 200;
  spec.n = 500;
  spec.ntp = NtpPolicy::spike(0.3);
  spec.record_ntp = true;
  Rng noise(20);
  spec.prompt = random_prompt(spec.m, 5, noise);
  const auto text = generate_sequence(spec, KeySalt{5}, noise);
  ASSERT_EQ(text.tokens.size(), spec.n);
  std::vector<Token> scratch;
  for (std::size_t t = 0; t < spec.n; ++t) {
    const auto seed = seed_at(text.prompt, text.tokens, t, KeySalt{5}, spec.window, scratch);
    ASSERT_EQ(seed, text.key_seeds[t]);
    EXPECT_EQ(gumbel_complete_next(text.ntps[t], gumbel_key(seed, spec.m)), text.tokens[t]);
  }
}

TEST(GenerateSequence, TokensInRangeAndRedGreenAlwaysGreen) {
  for (auto scheme : {Scheme::gumbel, Scheme::redgreen}) {
    for (auto mode : {Mode::null, Mode::complete, Mode::partial}) {
      ScenarioSpec spec;
      spec.scheme = scheme;
      spec.mode = mode;
      spec.params.theta = 0.8;
      spec.m = 100;
      spec.n = 2000;
      Rng noise(21);
      spec.prompt = random_prompt(spec.m, 5, noise);
      const auto text = generate_sequence(spec, KeySalt{9}, noise);
      for (Token t : text.tokens) {
        ASSERT_GE(t, 0);
        ASSERT_LT(t, 100);
      }
      if (scheme == Scheme::redgreen && mode == Mode::complete) {
        for (std::size_t t = 0; t < spec.n; ++t) {
          EXPECT_EQ(pivotal_rg(text.tokens[t], greenlist_key(text.key_seeds[t], 100, 0.5)).value, 1.0);
        }
      }
    }
  }
}

TEST(GenerateSequence, ValidationErrors) {
  ScenarioSpec spec;
  spec.m = 10;
  spec.n = 0;
  Rng noise(1);
  EXPECT_THROW(generate_sequence(spec, KeySalt{}, noise), ValidationError);
  spec.n = 5;
  spec.mode = Mode::partial;
  spec.params.theta = 0.4;
  EXPECT_THROW(generate_sequence(spec, KeySalt{}, noise), ValidationError);
  spec.mode = Mode::complete;
  spec.prompt = {11};
  EXPECT_THROW(generate_sequence(spec, KeySalt{}, noise), ValidationError);
}

TEST(GenerateSequence, FullScaleBudget) {
  // 5,000 reps of n = 500 at m = 1000 with per-rep Delta ~ U[0.001, 0.5].
  const auto start = std::chrono::steady_clock::now();
  std::size_t total = 0;
  for (std::size_t rep = 0; rep < 5000; ++rep) {
    Rng noise(derive_stream(2024, {rep}));
    ScenarioSpec spec;
    spec.mode = Mode::complete;
    spec.m = 1000;
    spec.n = 500;
    spec.ntp = NtpPolicy::spike(noise.uniform(0.001, 0.5));
    spec.prompt = random_prompt(spec.m, 5, noise);
    total += generate_sequence(spec, KeySalt{rep}, noise).tokens.size();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(total, 5000u * 500u);
  EXPECT_LT(secs, 300.0);
  RecordProperty("seconds", std::to_string(secs));
}
