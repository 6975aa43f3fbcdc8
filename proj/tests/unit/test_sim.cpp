#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "chimera/errors.hpp"
#include "chimera/sim/episode_csv.hpp"
#include "chimera/sim/market.hpp"
#include "chimera/sim/policies.hpp"

using namespace chimera;
using namespace chimera::sim;

namespace {

// High-precision reference values (30-digit evaluation of the closed forms).
constexpr double kTwoPow1_2 = 2.29739670999407001359725389356;
constexpr double kHalfPow1_2 = 0.43527528164806206956813500874;
constexpr double kOnePointFivePowK = 1.90150749823037254511681818841;
constexpr double kAdFactor500 = 1.53752784076841650024374320751;

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(SeasonFactor, Examples) {
  SimConfig cfg;
  EXPECT_EQ(season_factor(0, cfg), 1.0);
  EXPECT_NEAR(season_factor(13, cfg), 1.2, 1e-12);
  EXPECT_EQ(season_factor(65, cfg), season_factor(13, cfg));
}

TEST(SeasonFactor, PeriodAndAmplitude) {
  SimConfig cfg;
  double max_dev = 0.0;
  for (int w = 0; w <= 200; ++w) {
    EXPECT_EQ(season_factor(w, cfg), season_factor(w + 52, cfg));
    max_dev = std::max(max_dev, std::abs(season_factor(w, cfg) - 1.0));
  }
  EXPECT_NEAR(max_dev, 0.2, 1e-9);
}

TEST(PriceFactor, Examples) {
  SimConfig cfg;
  EXPECT_EQ(price_factor(cfg.reference_price, cfg), 1.0);
  EXPECT_NEAR(price_factor(50.0, cfg), kTwoPow1_2, 1e-12);
  EXPECT_NEAR(price_factor(200.0, cfg), kHalfPow1_2, 1e-12);
  EXPECT_THROW(price_factor(0.0, cfg), DomainError);
  EXPECT_THROW(price_factor(-3.0, cfg), DomainError);
}

TEST(TrustFactor, Examples) {
  SimConfig cfg;
  EXPECT_EQ(trust_factor(cfg.reference_trust, cfg), 1.0);
  EXPECT_NEAR(trust_factor(0.8, cfg) / trust_factor(0.4, cfg), 3.0, 1e-12);
  EXPECT_NEAR(trust_factor(0.6, cfg) / trust_factor(0.4, cfg), kOnePointFivePowK, 1e-12);
  EXPECT_THROW(trust_factor(0.39, cfg), DomainError);
  EXPECT_THROW(trust_factor(1.01, cfg), DomainError);
}

TEST(AdFactor, Examples) {
  SimConfig cfg;
  EXPECT_EQ(ad_factor(0.0, cfg), 1.0);
  EXPECT_NEAR(ad_factor(500.0, cfg), kAdFactor500, 1e-12);
  EXPECT_LT(ad_factor(5000.0, cfg) - ad_factor(4500.0, cfg), ad_factor(500.0, cfg) - ad_factor(0.0, cfg));
  EXPECT_THROW(ad_factor(-1.0, cfg), DomainError);
}

TEST(Demand, AllFactorsOneGivesBaseDemand) {
  SimConfig cfg;
  EXPECT_EQ(demand(cfg.reference_price, cfg.reference_trust, 0.0, 0, cfg), 800.0);
}

TEST(Demand, DeterministicWithoutNoise) {
  SimConfig cfg;
  EXPECT_EQ(demand(87.0, 0.63, 1200.0, 17, cfg), demand(87.0, 0.63, 1200.0, 17, cfg));
}

TEST(Demand, MatchesIndependentFactorProduct) {
  SimConfig cfg;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> price(1.0, 300.0), trust(0.4, 1.0), ad(0.0, 8000.0);
  std::uniform_int_distribution<int> week(0, 400);
  for (int i = 0; i < 1000; ++i) {
    const double p = price(rng), t = trust(rng), a = ad(rng);
    const int w = week(rng);
    const double oracle = 800.0 * std::pow(100.0 / p, 1.2) * std::pow(t / 0.7, std::log2(3.0)) *
                          (1.0 + 0.3 * std::log(1.0 + a / 100.0)) *
                          (1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * (w % 52) / 52.0));
    ASSERT_LT(rel_err(demand(p, t, a, w, cfg), oracle), 1e-12) << p << " " << t << " " << a << " " << w;
  }
}

TEST(Demand, Monotonicity) {
  SimConfig cfg;
  for (int w : {0, 13, 39}) {
    for (int ti = 0; ti <= 6; ++ti) {
      const double t = std::min(0.4 + 0.1 * ti, 1.0);
      for (double p = 10.0; p < 300.0; p += 5.0) {
        EXPECT_GT(demand(p, t, 500.0, w, cfg), demand(p + 5.0, t, 500.0, w, cfg));
      }
    }
    for (double p = 40.0; p <= 160.0; p += 20.0) {
      for (int ti = 0; ti < 12; ++ti) {
        const double t = 0.4 + 0.05 * ti;
        EXPECT_LT(demand(p, t, 500.0, w, cfg), demand(p, std::min(t + 0.05, 1.0), 500.0, w, cfg));
      }
      double prev_gain = std::numeric_limits<double>::infinity();
      for (double a = 0.0; a < 6000.0; a += 250.0) {
        const double gain = demand(p, 0.7, a + 250.0, w, cfg) - demand(p, 0.7, a, w, cfg);
        EXPECT_GE(gain, 0.0);
        EXPECT_LE(gain, prev_gain + 1e-9);  // second difference <= 0
        prev_gain = gain;
      }
    }
  }
}

TEST(TrustUpdate, FairnessExamples) {
  SimConfig cfg;
  MarketState s;
  s.trust = 0.7;
  EXPECT_NEAR(trust_update(s, Action{0.0, 0.0}, cfg), 0.706, 1e-12);
  EXPECT_NEAR(trust_update(s, Action{-12.0, 0.0}, cfg), 0.706, 1e-12);
  EXPECT_NEAR(trust_update(s, Action{20.0, 0.0}, cfg), 0.694, 1e-12);
}

TEST(TrustUpdate, ThresholdMode) {
  SimConfig cfg;
  cfg.trust_mode = TrustMode::Threshold;
  MarketState s;
  s.trust = 0.5;
  // cut > 5%: x1.03, ad at cap adds the full gain, minus decay
  EXPECT_NEAR(trust_update(s, Action{-6.0, 5000.0}, cfg), 0.5 * 1.03 + 0.01 - 0.002, 1e-12);
  EXPECT_NEAR(trust_update(s, Action{-5.0, 0.0}, cfg), 0.5 - 0.002, 1e-12);
  EXPECT_NEAR(trust_update(s, Action{11.0, 2500.0}, cfg), 0.5 * 0.98 + 0.005 - 0.002, 1e-12);
  EXPECT_NEAR(trust_update(s, Action{10.0, 0.0}, cfg), 0.5 - 0.002, 1e-12);
}

TEST(TrustUpdate, ContainmentOverRandomPairs) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> trust(0.4, 1.0), pct(-100.0, 400.0), ad(0.0, 20000.0), price(1.0, 500.0);
  for (TrustMode mode : {TrustMode::Fairness, TrustMode::Threshold}) {
    SimConfig cfg;
    cfg.trust_mode = mode;
    for (int i = 0; i < 10000; ++i) {
      MarketState s{i % 52, price(rng), trust(rng), ad(rng), 0.0};
      const double t = trust_update(s, Action{pct(rng), ad(rng)}, cfg);
      ASSERT_GE(t, 0.4);
      ASSERT_LE(t, 1.0);
    }
  }
}

TEST(Profit, Examples) {
  SimConfig cfg;
  EXPECT_EQ(profit(80.0, 0.0, 0.0, cfg), -3000.0);
  EXPECT_EQ(profit(100.0, 800.0, 1000.0, cfg), 36000.0);
  EXPECT_EQ(profit(50.0, 1234.5, 0.0, cfg), -3000.0);
}

TEST(Profit, IdentityAgainstOracle) {
  SimConfig cfg;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> price(0.5, 400.0), qty(0.0, 5000.0), ad(0.0, 6000.0);
  for (int i = 0; i < 10000; ++i) {
    const double p = price(rng), q = qty(rng), a = ad(rng);
    const double oracle = p * q - 50.0 * q - 3000.0 - a;
    ASSERT_LE(std::abs(profit(p, q, a, cfg) - oracle), 1e-9 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(Step, IdentityActionPreservesPriceAndAdvancesWeek) {
  SimConfig cfg;
  MarketState s = initial_state(cfg);
  s.prev_ad_spend = 700.0;
  const auto r = step(s, hold_action(s), cfg);
  EXPECT_EQ(r.next.price, s.price);
  EXPECT_EQ(r.next.week, s.week + 1);
  EXPECT_EQ(r.next.prev_ad_spend, 700.0);
  EXPECT_EQ(r.next.cumulative_profit, r.outcome.profit);
  EXPECT_NEAR(r.outcome.profit, (s.price - 50.0) * r.outcome.demand - 3000.0 - 700.0, 1e-9);
  EXPECT_EQ(r.outcome.revenue, r.outcome.price * r.outcome.demand);
}

TEST(Step, NonPositivePriceIsDomainError) {
  SimConfig cfg;
  const MarketState s = initial_state(cfg);
  EXPECT_THROW(step(s, Action{-100.0, 0.0}, cfg), DomainError);
  EXPECT_THROW(step(s, Action{-150.0, 0.0}, cfg), DomainError);
  EXPECT_THROW(step(s, Action{0.0, -5.0}, cfg), DomainError);
  EXPECT_THROW(step(s, Action{std::nan(""), 0.0}, cfg), DomainError);
}

TEST(Step, NoiseIsMeanOneAndSeedKeyed) {
  SimConfig cfg;
  cfg.noise_sigma = 0.1;
  double sum = 0.0;
  for (int w = 0; w < 4000; ++w) sum += noise_factor(w, cfg);
  EXPECT_NEAR(sum / 4000.0, 1.0, 0.01);
  SimConfig other = cfg;
  other.seed = 43;
  EXPECT_NE(noise_factor(3, cfg), noise_factor(3, other));
  EXPECT_EQ(noise_factor(3, cfg), noise_factor(3, cfg));
}

TEST(Episode, DeterministicLogsAreBitIdentical) {
  SimConfig cfg;
  cfg.noise_sigma = 0.05;
  auto write = [&] {
    std::ostringstream out;
    const auto rows = run_policy(cfg, 52, cycle_policy);
    write_episode_csv(out, rows);
    return out.str();
  };
  EXPECT_EQ(write(), write());
}

TEST(Episode, CsvRoundTrip) {
  SimConfig cfg;
  auto rows = run_policy(cfg, 10, cycle_policy);
  rows[3].violations = "price_floor|ad_spend_range";
  std::ostringstream out;
  write_episode_csv(out, rows);
  std::istringstream in(out.str());
  const auto back = read_episode_csv(in);
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_EQ(back[3].violations, "price_floor|ad_spend_range");
  EXPECT_EQ(back[9].cumulative_profit, rows[9].cumulative_profit);
}

// 52 weeks of the cycle policy from seed 42 (noise sigma 0.05) must match the
// committed log byte for byte. Regenerate with CHIMERA_UPDATE_GOLDEN=1.
TEST(Episode, GoldenCycleEpisode) {
  SimConfig cfg;
  cfg.noise_sigma = 0.05;
  cfg.seed = 42;
  std::ostringstream out;
  write_episode_csv(out, run_policy(cfg, 52, cycle_policy));
  const std::filesystem::path golden = std::filesystem::path(CHIMERA_TEST_DATA) / "golden" / "episode_cycle_seed42.csv";
  if (std::getenv("CHIMERA_UPDATE_GOLDEN") != nullptr) {
    std::ofstream(golden) << out.str();
  }
  std::ifstream in(golden);
  ASSERT_TRUE(in) << "missing golden file " << golden;
  std::stringstream expected;
  expected << in.rdbuf();
  EXPECT_EQ(out.str(), expected.str());
}
