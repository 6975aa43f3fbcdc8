#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "chimera/causal/dml.hpp"
#include "chimera/causal/engine.hpp"
#include "chimera/errors.hpp"

using namespace chimera;
using namespace chimera::causal;

namespace {

// Y = 3 A + 2 S + e with A = 0.8 S + u: S drives both treatment and outcome.
struct Scm {
  Matrix x, t, y;
};

Scm make_scm(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Scm d;
  d.x.resize(n, 3);
  d.t.resize(n, 1);
  d.y.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double s = z(rng);
    d.x(i, 0) = s;
    d.x(i, 1) = z(rng);
    d.x(i, 2) = z(rng);
    d.t(i, 0) = 0.8 * s + z(rng);
    d.y(i, 0) = 3.0 * d.t(i, 0) + 2.0 * s + z(rng);
  }
  return d;
}

double naive_slope(const Matrix& t, const Matrix& y) {
  const double mt = t.col(0).mean(), my = y.col(0).mean();
  return ((t.col(0).array() - mt) * (y.col(0).array() - my)).sum() / (t.col(0).array() - mt).square().sum();
}

double held_out_mean_effect(const DmlModel& m, const Matrix& x) {
  Vector one(1);
  one << 1.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) s += m.effect(0, x.row(i).transpose(), one).value;
  return s / static_cast<double>(x.rows());
}

DmlConfig small_config() {
  DmlConfig c;
  c.nuisance.n_trees = 30;
  c.effect.n_trees = 60;
  return c;
}

std::vector<Observation> small_dataset(std::size_t n = 3000, int horizon = 1) {
  DatasetConfig d;
  d.observations = n;
  return generate_dataset(sim::SimConfig{}, guardian::ConstraintSet{}, d, horizon, 0.9);
}

EngineConfig small_engine(int horizon = 1) {
  EngineConfig c;
  c.n_trees = 60;
  c.nuisance_trees = 30;
  c.horizon = horizon;
  return c;
}

}  // namespace

TEST(Binner, CodesMatchThresholds) {
  Matrix x(6, 1);
  x << 1, 2, 2, 3, 5, 8;
  const Binner b(x, 64);
  EXPECT_EQ(b.bins(0), 5);
  EXPECT_EQ(b.code(0, 1.0), 0);
  EXPECT_EQ(b.code(0, 2.0), 1);
  EXPECT_EQ(b.code(0, 100.0), 4);
  for (int bin = 0; bin + 1 < b.bins(0); ++bin) {
    EXPECT_LT(b.code(0, b.threshold(0, bin) - 1e-9), bin + 1);
    EXPECT_EQ(b.code(0, b.threshold(0, bin)), bin + 1);
  }
}

TEST(RegressionForest, LearnsStepAndKeepsConstantsExact) {
  const int n = 2000;
  Matrix x(n, 2), y(n, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
    y(i, 0) = x(i, 0) > 0.2 ? 5.0 : -1.0;
    y(i, 1) = 0.1;
  }
  RegressionForest f;
  f.fit(x, y, TreeParams{.n_trees = 40, .min_leaf = 5});
  Matrix q(2, 2);
  q << 0.8, 0.0, -0.5, 0.3;
  const Matrix p = f.predict(q);
  EXPECT_NEAR(p(0, 0), 5.0, 0.05);
  EXPECT_NEAR(p(1, 0), -1.0, 0.05);
  EXPECT_EQ(p(0, 1), 0.1);
  EXPECT_EQ(p(1, 1), 0.1);
}

TEST(Dml, RecoversKnownEffectUnderConfounding) {
  const Scm train = make_scm(5000, 11);
  const Scm held = make_scm(1000, 12);
  const DmlModel m = fit_dml(train.x, train.t, train.y, DmlConfig{});
  const double dml = held_out_mean_effect(m, held.x);
  const double naive = naive_slope(train.t, train.y);
  EXPECT_NEAR(dml, 3.0, 0.3);
  EXPECT_GE(std::abs(naive - 3.0), 2.0 * std::abs(dml - 3.0)) << "naive " << naive << " dml " << dml;
}

TEST(Dml, ConstantOutcomeGivesZeroEffectEverywhere) {
  Scm d = make_scm(800, 5);
  d.y.setConstant(0.1);
  const DmlModel m = fit_dml(d.x, d.t, d.y, small_config());
  Vector one(1);
  one << 1.0;
  for (Eigen::Index i = 0; i < 50; ++i) {
    EXPECT_EQ(m.effect(0, d.x.row(i).transpose(), one).value, 0.0);
    EXPECT_EQ(m.theta(0, d.x.row(i).transpose())(0), 0.0);
  }
}

TEST(Dml, RefitIsDeterministicAndThreadCountInvariant) {
  const Scm d = make_scm(1000, 8);
  DmlConfig c = small_config();
  const DmlModel a = fit_dml(d.x, d.t, d.y, c);
  const DmlModel b = fit_dml(d.x, d.t, d.y, c);
  c.threads = 3;
  const DmlModel threaded = fit_dml(d.x, d.t, d.y, c);
  for (Eigen::Index i = 0; i < 20; ++i) {
    const Vector xi = d.x.row(i).transpose();
    EXPECT_EQ(a.theta(0, xi), b.theta(0, xi));
    EXPECT_EQ(a.theta(0, xi), threaded.theta(0, xi));
  }
}

TEST(Dml, RejectsSmallAndDegenerateData) {
  Scm d = make_scm(150, 1);
  EXPECT_THROW(fit_dml(d.x, d.t, d.y, DmlConfig{}), InsufficientData);
  d = make_scm(600, 1);
  d.t.setConstant(2.0);
  EXPECT_THROW(fit_dml(d.x, d.t, d.y, small_config()), DegenerateTreatment);
  DmlConfig bad;
  bad.n_folds = 1;
  EXPECT_THROW(fit_dml(d.x, d.t, d.y, bad), ConfigError);
}

TEST(Engine, TreatmentBasisVanishesAtReference) {
  EXPECT_TRUE(treatment_basis(0.0, 1234.0, 1234.0).isZero(0.0));
  const Vector phi = treatment_basis(10.0, 1500.0, 1000.0);
  EXPECT_EQ(phi(0), 1.0);
  EXPECT_EQ(phi(2), 1.0);
  EXPECT_EQ(phi(3), 0.5);
  EXPECT_EQ(phi(5), 0.5);
  EXPECT_EQ(treatment_basis(-10.0, 0.0, 0.0)(2), 0.0);
}

TEST(Engine, LongTermValue) {
  EXPECT_EQ(long_term_value(CausalEstimate{2840.0, 0.0, 0.83, 0.91}, 150000.0), 2840.0);
  EXPECT_NEAR(long_term_value(CausalEstimate{2840.0, -0.012, 0.83, 0.91}, 150000.0), 1040.0, 1e-9);
  EXPECT_EQ(long_term_value(CausalEstimate{2840.0, -0.012, 0.83, 0.91}, 0.0), 2840.0);
}

TEST(Engine, TrajectoryObservations) {
  std::vector<sim::MarketState> states{{0, 100, 0.70, 0, 0},
                                       {1, 110, 0.69, 500, 1000},
                                       {2, 110, 0.71, 500, 3000},
                                       {3, 100, 0.72, 0, 2500}};
  const std::vector<sim::Action> actions{{10, 500}, {0, 500}, {-9.0909, 0}};
  const auto obs = observations_from_trajectory(states, actions, 2, 0.5);
  ASSERT_EQ(obs.size(), 2u);
  EXPECT_EQ(obs[0].delta_profit, 1000.0 + 0.5 * 2000.0);
  EXPECT_NEAR(obs[0].delta_trust, 0.01, 1e-12);
  EXPECT_EQ(obs[1].delta_profit, 2000.0 + 0.5 * -500.0);
  EXPECT_EQ(obs[1].price_change_pct, 0.0);
  EXPECT_EQ(obs[1].prev_ad, 500.0);
}

TEST(Engine, DatasetIsDeterministicFeasibleAndSized) {
  const auto a = small_dataset(1000);
  const auto b = small_dataset(1000);
  ASSERT_EQ(a.size(), 1000u);
  EXPECT_EQ(a, b);
  const guardian::ConstraintSet cs;
  int holds = 0;
  for (const auto& o : a) {
    const sim::MarketState s{o.week, o.price, o.trust, o.prev_ad, 0.0};
    ASSERT_TRUE(guardian::validate_action(sim::Action{o.price_change_pct, o.ad_spend}, s, cs).is_valid);
    holds += o.price_change_pct == 0.0;
  }
  EXPECT_GT(holds, 100);
}

TEST(Engine, CsvRoundTrip) {
  const auto rows = small_dataset(50, 4);
  std::stringstream buf;
  write_observations_csv(buf, rows);
  EXPECT_EQ(read_observations_csv(buf), rows);
  std::istringstream bad(std::string(kObservationCsvHeader) + "\n1,2,3\n");
  EXPECT_THROW(read_observations_csv(bad), ConfigError);
  std::istringstream nonfinite(std::string(kObservationCsvHeader) + "\n1,100,0.7,0,0.02,0,0,nan,0\n");
  EXPECT_THROW(read_observations_csv(nonfinite), ConfigError);
}

class FittedEngine : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { engine_ = new CausalEngine(CausalEngine::fit(small_dataset(3000, 1), small_engine(1))); }
  static void TearDownTestSuite() {
    delete engine_;
    engine_ = nullptr;
  }
  static CausalEngine* engine_;
};

CausalEngine* FittedEngine::engine_ = nullptr;

TEST_F(FittedEngine, ReferenceActionIsExactlyZero) {
  for (const auto& s : {sim::MarketState{3, 100.0, 0.7, 0.0, 0.0}, sim::MarketState{30, 72.5, 0.55, 2200.0, 0.0}}) {
    const CausalEstimate e = engine_->estimate(0.0, s.prev_ad_spend, s);
    EXPECT_EQ(e.profit_change, 0.0);
    EXPECT_EQ(e.trust_change, 0.0);
  }
}

TEST_F(FittedEngine, EstimatesAreFiniteWithBoundedConfidence) {
  const sim::MarketState s{10, 110.0, 0.75, 1000.0, 0.0};
  for (double pct : {-30.0, -5.0, 5.0, 20.0}) {
    for (double ad : {0.0, 1000.0, 2000.0}) {
      const CausalEstimate e = engine_->estimate(pct, ad, s);
      EXPECT_TRUE(std::isfinite(e.profit_change) && std::isfinite(e.trust_change));
      EXPECT_GE(e.profit_confidence, 0.0);
      EXPECT_LE(e.profit_confidence, 1.0);
      EXPECT_GE(e.trust_confidence, 0.0);
      EXPECT_LE(e.trust_confidence, 1.0);
    }
  }
  EXPECT_THROW(engine_->estimate(std::nan(""), 0.0, s), DomainError);
}

TEST_F(FittedEngine, RaisingPriceLowersTrustOneStep) {
  const sim::MarketState s{10, 100.0, 0.75, 1000.0, 0.0};
  // One-step truth under the default trust rule is -0.3 * (0.01 + 0.02) = -0.009.
  EXPECT_NEAR(engine_->estimate(10.0, 1000.0, s).trust_change, -0.009, 0.002);
}

TEST_F(FittedEngine, ConfidenceDropsFarOutsideTrainingData) {
  double price = 0, trust = 0, ad = 0;
  for (const auto& o : engine_->training_data()) {
    price += o.price;
    trust += o.trust;
    ad += o.prev_ad;
  }
  const double n = static_cast<double>(engine_->training_data().size());
  const sim::MarketState centroid{13, price / n, trust / n, ad / n, 0.0};
  double sp = 0, st = 0, sa = 0;
  for (const auto& o : engine_->training_data()) {
    sp += std::pow(o.price - centroid.price, 2);
    st += std::pow(o.trust - centroid.trust, 2);
    sa += std::pow(o.prev_ad - centroid.prev_ad_spend, 2);
  }
  const sim::MarketState far{13, centroid.price + 3.5 * std::sqrt(sp / n), centroid.trust + 3.5 * std::sqrt(st / n),
                             centroid.prev_ad_spend + 3.5 * std::sqrt(sa / n), 0.0};
  const CausalEstimate near_e = engine_->estimate(10.0, centroid.prev_ad_spend + 500.0, centroid);
  const CausalEstimate far_e = engine_->estimate(10.0, far.prev_ad_spend + 500.0, far);
  EXPECT_LT(far_e.profit_confidence, near_e.profit_confidence);
  EXPECT_LT(far_e.trust_confidence, near_e.trust_confidence);
}

TEST_F(FittedEngine, ArtifactRoundTripPreservesPredictions) {
  std::stringstream buf;
  engine_->save(buf);
  const CausalEngine back = CausalEngine::load(buf);
  EXPECT_EQ(back.training_data(), engine_->training_data());
  EXPECT_EQ(back.config().n_trees, engine_->config().n_trees);
  const sim::MarketState s{7, 95.0, 0.8, 1500.0, 0.0};
  const CausalEstimate a = engine_->estimate(15.0, 2000.0, s);
  const CausalEstimate b = back.estimate(15.0, 2000.0, s);
  EXPECT_EQ(a.profit_change, b.profit_change);
  EXPECT_EQ(a.trust_change, b.trust_change);
  EXPECT_EQ(a.profit_confidence, b.profit_confidence);

  std::istringstream junk("not an engine");
  EXPECT_THROW(CausalEngine::load(junk), ConfigError);
}

TEST_F(FittedEngine, RetrainSchedule) {
  auto shared = std::make_shared<const CausalEngine>(*engine_);
  const auto fresh = small_dataset(30, 1);
  EXPECT_EQ(maybe_retrain(shared, 7, fresh), shared);
  EXPECT_EQ(maybe_retrain(shared, 10, {}), shared);
  const auto refit = maybe_retrain(shared, 10, fresh);
  EXPECT_NE(refit, shared);
  EXPECT_EQ(refit->training_data().size(), shared->training_data().size() + fresh.size());
}

TEST(Engine, FitRejectsTooFewObservations) {
  EXPECT_THROW(CausalEngine::fit(small_dataset(100, 1), small_engine(1)), InsufficientData);
}
