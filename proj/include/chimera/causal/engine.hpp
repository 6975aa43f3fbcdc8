#pragma once

// Counterfactual engine over simulator data: a DmlModel whose features are
// the market state and whose treatment is a fixed basis of the action
// relative to the reference action (no price change, last week's ad spend).
//
//   state features  x = (price, trust, prev_ad, sin season, cos season)
//   treatment basis phi = (dp, dp^2, [dp > 0], da, da^2, dp*da)
//                   with dp = price change / 10%, da = (ad - prev_ad) / 1000
//
// phi vanishes at the reference action, so its estimate is exactly zero. The
// step term lets the fit follow the asymmetric trust response to raises.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "chimera/causal/dml.hpp"
#include "chimera/guardian/guardian.hpp"
#include "chimera/sim/market.hpp"

namespace chimera::causal {

/// One state-action-outcome tuple. Outcomes are measured from the start of
/// `week`: delta_profit is the discounted profit over the next H weeks and
/// delta_trust the trust change over the same span.
struct Observation {
  int week = 0;
  double price = 0.0;
  double trust = 0.0;
  double prev_ad = 0.0;
  double price_change_pct = 0.0;
  double ad_spend = 0.0;
  double delta_profit = 0.0;
  double delta_trust = 0.0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

inline constexpr std::string_view kObservationCsvHeader =
    "week,price,trust,prev_ad,season_phase,price_change_pct,ad_spend,delta_profit,delta_trust";

void write_observations_csv(std::ostream& out, const std::vector<Observation>& rows, int season_period = 52);
/// Throws ConfigError naming the line on malformed or non-finite rows.
std::vector<Observation> read_observations_csv(std::istream& in);

struct CausalEstimate {
  double profit_change = 0.0;
  double trust_change = 0.0;
  double profit_confidence = 0.0;
  double trust_confidence = 0.0;
};

/// profit_change + trust_change * trust_multiplier.
double long_term_value(const CausalEstimate& est, double trust_multiplier);

struct EngineConfig {
  int n_trees = 200;
  int nuisance_trees = 60;
  int min_leaf = 20;
  int max_depth = 16;
  int n_folds = 3;
  double ridge = 1e-3;
  int retrain_interval = 10;
  std::size_t min_observations = 200;
  double trust_multiplier = 150000.0;
  int horizon = 4;
  double discount = 0.9;
  int season_period = 52;
  /// Confidence decays once a state feature lies more than this many
  /// training standard deviations from the training mean.
  double coverage_z = 2.0;
  std::uint64_t seed = 42;
  int threads = 1;

  void validate() const;
};

template <class V>
void visit_fields(EngineConfig& c, V&& v) {
  v("n_trees", c.n_trees);
  v("nuisance_trees", c.nuisance_trees);
  v("min_leaf", c.min_leaf);
  v("max_depth", c.max_depth);
  v("n_folds", c.n_folds);
  v("ridge", c.ridge);
  v("retrain_interval", c.retrain_interval);
  v("min_observations", c.min_observations);
  v("trust_multiplier", c.trust_multiplier);
  v("horizon", c.horizon);
  v("discount", c.discount);
  v("season_period", c.season_period);
  v("coverage_z", c.coverage_z);
  v("seed", c.seed);
  v("threads", c.threads);
}

/// Randomized, state-dependent behavior policy used to build training data.
/// Price moves revert toward a target and follow the season; ad spend drifts
/// toward a trust- and season-dependent level. Every action goes through the
/// Guardian before it is executed, so the data stays inside the feasible band.
struct DatasetConfig {
  std::size_t observations = 25000;
  int episode_weeks = 52;
  double hold_probability = 0.25;
  double price_sd_pct = 12.0;
  double ad_sd = 800.0;
  std::uint64_t seed = 2024;

  void validate() const;
};

template <class V>
void visit_fields(DatasetConfig& c, V&& v) {
  v("observations", c.observations);
  v("episode_weeks", c.episode_weeks);
  v("hold_probability", c.hold_probability);
  v("price_sd_pct", c.price_sd_pct);
  v("ad_sd", c.ad_sd);
  v("seed", c.seed);
}

std::vector<Observation> generate_dataset(const sim::SimConfig& sim, const guardian::ConstraintSet& constraints,
                                          const DatasetConfig& data, int horizon, double discount);

/// Observations from an executed trajectory: states[t] is the state at the
/// start of week t (states has one more entry than actions). Only weeks whose
/// full horizon has elapsed yield an observation.
std::vector<Observation> observations_from_trajectory(const std::vector<sim::MarketState>& states,
                                                      const std::vector<sim::Action>& actions, int horizon,
                                                      double discount);

Vector state_features(int week, double price, double trust, double prev_ad, int season_period);
Vector treatment_basis(double price_change_pct, double ad_spend, double prev_ad);

class CausalEngine {
 public:
  /// Throws InsufficientData / DegenerateTreatment from the estimator.
  static CausalEngine fit(std::vector<Observation> data, const EngineConfig& cfg);

  CausalEstimate estimate(double price_change_pct, double ad_spend, const sim::MarketState& state) const;
  /// Confidence multiplier in (0, 1] for how well the training data covers x.
  double coverage(const Vector& x) const;

  const EngineConfig& config() const { return cfg_; }
  const std::vector<Observation>& training_data() const { return data_; }
  const DmlModel& model() const { return model_; }

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static CausalEngine load(std::istream& in);
  static CausalEngine load(const std::filesystem::path& path);

 private:
  EngineConfig cfg_;
  std::vector<Observation> data_;
  Vector feature_mean_;
  Vector feature_sd_;
  DmlModel model_;
};

/// Refits on training data plus `fresh` when week is a positive-or-zero
/// multiple of the retrain interval and `fresh` is non-empty; otherwise
/// returns `engine` itself.
std::shared_ptr<const CausalEngine> maybe_retrain(std::shared_ptr<const CausalEngine> engine, int week,
                                                  const std::vector<Observation>& fresh);

}  // namespace chimera::causal
