#pragma once

// JSON shapes shared by the HTTP service and the CLI.

#include "json.hpp"

#include "chimera/agents/episode_log.hpp"
#include "chimera/bench/metrics.hpp"
#include "chimera/causal/engine.hpp"
#include "chimera/guardian/guardian.hpp"
#include "chimera/sim/market.hpp"

namespace chimera::service {

using nlohmann::json;

json to_json(const sim::MarketState& s);
json to_json(const sim::Action& a);
json to_json(const guardian::Verdict& v);
json to_json(const guardian::Repair& r);
json to_json(const causal::CausalEstimate& e);
json to_json(const agents::WeekRecord& w);
json to_json(const bench::MetricsSummary& m);

/// {"price_change": pct, "ad_spend": usd}; "price_change_pct" is accepted
/// as an alias. Throws ConfigError on missing or non-numeric fields.
sim::Action action_from_json(const json& j);
/// All MarketState fields are optional and default to the initial state.
sim::MarketState state_from_json(const json& j);

/// Applies {"field": value} overrides through the struct's field visitor.
/// Values may be numbers, booleans or strings. Unknown fields throw ConfigError.
template <class Cfg>
void apply_overrides(const json& overrides, Cfg& cfg, std::string_view what);

}  // namespace chimera::service

#include "chimera/config.hpp"

namespace chimera::service {

template <class Cfg>
void apply_overrides(const json& overrides, Cfg& cfg, std::string_view what) {
  if (overrides.is_null()) return;
  if (!overrides.is_object()) throw ConfigError(std::string(what) + " overrides must be an object");
  for (const auto& [key, value] : overrides.items()) {
    std::string text;
    if (value.is_string()) text = value.template get<std::string>();
    else if (value.is_number() || value.is_boolean()) text = value.dump();
    else throw ConfigError(std::string(what) + "." + key + ": expected a scalar");
    bool matched = false;
    try {
      matched = config::assign(cfg, key, text);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(what) + "." + key + ": " + e.what());
    }
    if (!matched) throw ConfigError("unknown configuration key '" + std::string(what) + "." + key + "'");
  }
}

}  // namespace chimera::service
