#include "chimera/sim/market.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <random>

#include "chimera/errors.hpp"

namespace chimera::sim {

std::string_view to_string(TrustMode mode) {
  switch (mode) {
    case TrustMode::Fairness:
      return "fairness";
    case TrustMode::Threshold:
      return "threshold";
  }
  return "fairness";
}

TrustMode trust_mode_from_string(std::string_view text) {
  if (text == "fairness") return TrustMode::Fairness;
  if (text == "threshold") return TrustMode::Threshold;
  throw ConfigError(fmt::format("unknown trust mode '{}' (expected fairness or threshold)", text));
}

void parse_value(std::string_view text, TrustMode& out) { out = trust_mode_from_string(text); }
std::string format_value(TrustMode mode) { return std::string(to_string(mode)); }

void SimConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(fmt::format("invalid simulator config: {}", what));
  };
  const double values[] = {base_demand, price_elasticity, ad_log_scale, ad_sat_scale, seasonality_amp,
                           trust_ad_gain, trust_decay, trust_eta, trust_min, trust_max,
                           fairness_stable_gain, fairness_raise_scale, cut_threshold_pct, cut_multiplier,
                           raise_threshold_pct, raise_multiplier, trust_ad_cap, unit_cost, fixed_cost,
                           reference_price, reference_trust, trust_exponent, noise_sigma, initial_price,
                           initial_trust};
  for (double v : values) require(std::isfinite(v) && v >= 0.0, "rates and amplitudes must be finite and >= 0");
  require(base_demand > 0.0, "base_demand must be > 0");
  require(season_period > 0, "season_period must be > 0");
  require(trust_min < trust_max, "trust_min must be below trust_max");
  require(ad_sat_scale > 0.0, "ad_sat_scale must be > 0");
  require(reference_price > 0.0, "reference_price must be > 0");
  require(reference_trust > 0.0, "reference_trust must be > 0");
  require(trust_ad_cap > 0.0, "trust_ad_cap must be > 0");
  require(initial_price > 0.0, "initial_price must be > 0");
  require(initial_trust >= trust_min && initial_trust <= trust_max, "initial_trust must lie within trust bounds");
}

MarketState initial_state(const SimConfig& cfg) {
  return MarketState{0, cfg.initial_price, cfg.initial_trust, 0.0, 0.0};
}

double season_factor(int week, const SimConfig& cfg) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(week % cfg.season_period) /
                       static_cast<double>(cfg.season_period);
  return 1.0 + cfg.seasonality_amp * std::sin(phase);
}

double price_factor(double price, const SimConfig& cfg) {
  if (!(price > 0.0) || !std::isfinite(price)) {
    throw DomainError(fmt::format("price must be positive and finite, got {}", price));
  }
  return std::pow(cfg.reference_price / price, cfg.price_elasticity);
}

double trust_factor(double trust, const SimConfig& cfg) {
  if (!(trust >= cfg.trust_min && trust <= cfg.trust_max)) {
    throw DomainError(fmt::format("trust {} outside [{}, {}]", trust, cfg.trust_min, cfg.trust_max));
  }
  return std::pow(trust / cfg.reference_trust, cfg.trust_exponent);
}

double ad_factor(double ad_spend, const SimConfig& cfg) {
  if (!(ad_spend >= 0.0) || !std::isfinite(ad_spend)) {
    throw DomainError(fmt::format("ad spend must be non-negative and finite, got {}", ad_spend));
  }
  return 1.0 + cfg.ad_log_scale * std::log1p(ad_spend / cfg.ad_sat_scale);
}

double noise_factor(int week, const SimConfig& cfg) {
  if (cfg.noise_sigma == 0.0) return 1.0;
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(week), 0x9e3779b9u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> z(0.0, 1.0);
  const double s = cfg.noise_sigma;
  return std::exp(s * z(rng) - 0.5 * s * s);
}

DemandFactors demand_factors(double price, double trust, double ad_spend, int week, const SimConfig& cfg) {
  return DemandFactors{price_factor(price, cfg), trust_factor(trust, cfg), ad_factor(ad_spend, cfg),
                       season_factor(week, cfg), noise_factor(week, cfg)};
}

double demand(double price, double trust, double ad_spend, int week, const SimConfig& cfg) {
  const DemandFactors f = demand_factors(price, trust, ad_spend, week, cfg);
  return cfg.base_demand * f.price * f.trust * f.ad * f.season * f.noise;
}

double profit(double price, double qty, double ad_spend, const SimConfig& cfg) {
  return (price - cfg.unit_cost) * qty - cfg.fixed_cost - ad_spend;
}

double trust_update(const MarketState& state, const Action& action, const SimConfig& cfg) {
  const double pct = std::isfinite(action.price_change_pct) ? action.price_change_pct : 0.0;
  double next = state.trust;
  switch (cfg.trust_mode) {
    case TrustMode::Fairness: {
      const double delta = pct <= 0.0 ? cfg.fairness_stable_gain : -cfg.fairness_raise_scale * (pct / 100.0);
      next = state.trust + cfg.trust_eta * delta;
      break;
    }
    case TrustMode::Threshold: {
      double multiplier = 1.0;
      if (pct < -cfg.cut_threshold_pct) {
        multiplier = cfg.cut_multiplier;
      } else if (pct > cfg.raise_threshold_pct) {
        multiplier = cfg.raise_multiplier;
      }
      const double ad = std::isfinite(action.ad_spend) ? std::max(action.ad_spend, 0.0) : 0.0;
      next = state.trust * multiplier + cfg.trust_ad_gain * std::min(1.0, ad / cfg.trust_ad_cap) - cfg.trust_decay;
      break;
    }
  }
  if (std::isnan(next)) next = state.trust;
  return std::clamp(next, cfg.trust_min, cfg.trust_max);
}

StepResult step(const MarketState& state, const Action& action, const SimConfig& cfg) {
  if (!std::isfinite(action.price_change_pct)) {
    throw DomainError(fmt::format("price change must be finite, got {}", action.price_change_pct));
  }
  const double price = apply_price_change(state.price, action.price_change_pct);
  if (!(price > 0.0)) {
    throw DomainError(fmt::format("price change of {}% from {} yields non-positive price {}",
                                  action.price_change_pct, state.price, price));
  }

  StepOutcome out;
  out.price = price;
  out.ad_spend = action.ad_spend;
  out.factors = demand_factors(price, state.trust, action.ad_spend, state.week, cfg);
  const DemandFactors& f = out.factors;
  out.demand = cfg.base_demand * f.price * f.trust * f.ad * f.season * f.noise;
  out.revenue = price * out.demand;
  out.profit = profit(price, out.demand, action.ad_spend, cfg);
  out.trust_after = trust_update(state, action, cfg);

  MarketState next;
  next.week = state.week + 1;
  next.price = price;
  next.trust = out.trust_after;
  next.prev_ad_spend = action.ad_spend;
  next.cumulative_profit = state.cumulative_profit + out.profit;
  return StepResult{next, out};
}

}  // namespace chimera::sim
