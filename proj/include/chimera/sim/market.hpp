#pragma once

// Discrete-weekly single-product e-commerce market.
//
// Weekly demand is multiplicative:
//   Q = base_demand * f_price(p) * f_trust(trust) * f_ad(ad) * f_season(week) * noise
// and weekly profit is (p - unit_cost) * Q - fixed_cost - ad.
//
// Everything here is a pure function of its arguments; the optional demand
// noise is drawn from a stream keyed by (seed, week) so a step never depends
// on how many steps ran before it.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

namespace chimera::sim {

enum class TrustMode {
  Fairness,  ///< additive fairness update: +0.02 on a cut or hold, -0.1 * dp/p on a raise, scaled by eta
  Threshold,  ///< multiplicative +3% / -2% thresholds plus ad gain and constant decay
};

std::string_view to_string(TrustMode mode);
TrustMode trust_mode_from_string(std::string_view text);
void parse_value(std::string_view text, TrustMode& out);
std::string format_value(TrustMode mode);

struct SimConfig {
  double base_demand = 800.0;
  double price_elasticity = 1.2;
  double ad_log_scale = 0.3;
  double ad_sat_scale = 100.0;
  double seasonality_amp = 0.2;
  int season_period = 52;

  double trust_ad_gain = 0.01;
  double trust_decay = 0.002;
  double trust_eta = 0.3;
  double trust_min = 0.4;
  double trust_max = 1.0;
  double fairness_stable_gain = 0.02;
  double fairness_raise_scale = 0.1;
  double cut_threshold_pct = 5.0;
  double cut_multiplier = 1.03;
  double raise_threshold_pct = 10.0;
  double raise_multiplier = 0.98;
  double trust_ad_cap = 5000.0;
  TrustMode trust_mode = TrustMode::Fairness;

  double unit_cost = 50.0;
  double fixed_cost = 3000.0;

  double reference_price = 100.0;
  double reference_trust = 0.7;
  // Trust 0.4 -> 0.8 triples demand: 2^k = 3.
  double trust_exponent = std::log(3.0) / std::log(2.0);

  double noise_sigma = 0.0;
  std::uint64_t seed = 42;

  double initial_price = 100.0;
  double initial_trust = 0.7;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

template <class V>
void visit_fields(SimConfig& c, V&& v) {
  v("base_demand", c.base_demand);
  v("price_elasticity", c.price_elasticity);
  v("ad_log_scale", c.ad_log_scale);
  v("ad_sat_scale", c.ad_sat_scale);
  v("seasonality_amp", c.seasonality_amp);
  v("season_period", c.season_period);
  v("trust_ad_gain", c.trust_ad_gain);
  v("trust_decay", c.trust_decay);
  v("trust_eta", c.trust_eta);
  v("trust_min", c.trust_min);
  v("trust_max", c.trust_max);
  v("fairness_stable_gain", c.fairness_stable_gain);
  v("fairness_raise_scale", c.fairness_raise_scale);
  v("cut_threshold_pct", c.cut_threshold_pct);
  v("cut_multiplier", c.cut_multiplier);
  v("raise_threshold_pct", c.raise_threshold_pct);
  v("raise_multiplier", c.raise_multiplier);
  v("trust_ad_cap", c.trust_ad_cap);
  v("trust_mode", c.trust_mode);
  v("unit_cost", c.unit_cost);
  v("fixed_cost", c.fixed_cost);
  v("reference_price", c.reference_price);
  v("reference_trust", c.reference_trust);
  v("trust_exponent", c.trust_exponent);
  v("noise_sigma", c.noise_sigma);
  v("seed", c.seed);
  v("initial_price", c.initial_price);
  v("initial_trust", c.initial_trust);
}

struct MarketState {
  int week = 0;
  double price = 100.0;
  double trust = 0.7;
  double prev_ad_spend = 0.0;
  double cumulative_profit = 0.0;

  friend bool operator==(const MarketState&, const MarketState&) = default;
};

/// A weekly decision: signed percent change applied to the current price and
/// the absolute ad budget for the week.
struct Action {
  double price_change_pct = 0.0;
  double ad_spend = 0.0;

  friend bool operator==(const Action&, const Action&) = default;
};

/// The reference action: hold price, repeat last week's ad spend.
inline Action hold_action(const MarketState& s) { return Action{0.0, s.prev_ad_spend}; }

struct DemandFactors {
  double price = 1.0;
  double trust = 1.0;
  double ad = 1.0;
  double season = 1.0;
  double noise = 1.0;
};

struct StepOutcome {
  double price = 0.0;  ///< price in effect during the week
  double ad_spend = 0.0;
  double demand = 0.0;
  double revenue = 0.0;
  double profit = 0.0;
  double trust_after = 0.0;
  DemandFactors factors;
};

struct StepResult {
  MarketState next;
  StepOutcome outcome;
};

MarketState initial_state(const SimConfig& cfg);

/// 1 + amp * sin(2*pi*week / period).
double season_factor(int week, const SimConfig& cfg);
/// (reference_price / price)^elasticity. Throws DomainError for price <= 0.
double price_factor(double price, const SimConfig& cfg);
/// (trust / reference_trust)^trust_exponent. Throws DomainError outside [trust_min, trust_max].
double trust_factor(double trust, const SimConfig& cfg);
/// 1 + ad_log_scale * ln(1 + ad / ad_sat_scale). Throws DomainError for negative spend.
double ad_factor(double ad_spend, const SimConfig& cfg);
/// Mean-one lognormal multiplier for the given week; exactly 1 when noise_sigma == 0.
double noise_factor(int week, const SimConfig& cfg);

DemandFactors demand_factors(double price, double trust, double ad_spend, int week, const SimConfig& cfg);
double demand(double price, double trust, double ad_spend, int week, const SimConfig& cfg);

/// (price - unit_cost) * qty - fixed_cost - ad_spend.
double profit(double price, double qty, double ad_spend, const SimConfig& cfg);

/// price + price * pct / 100, the same arithmetic the repair pipeline uses.
inline double apply_price_change(double price, double pct) { return price + price * pct / 100.0; }

/// Trust after the action, clamped to [trust_min, trust_max].
double trust_update(const MarketState& state, const Action& action, const SimConfig& cfg);

/// Advances one week. Demand uses the trust level at the start of the week.
/// Throws DomainError if the resulting price is not positive or the ad
/// spend is negative or non-finite.
StepResult step(const MarketState& state, const Action& action, const SimConfig& cfg);

}  // namespace chimera::sim
