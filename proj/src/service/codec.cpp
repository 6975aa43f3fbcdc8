#include "chimera/service/codec.hpp"

#include "chimera/errors.hpp"

namespace chimera::service {

json to_json(const sim::MarketState& s) {
  return {{"week", s.week},
          {"price", s.price},
          {"trust", s.trust},
          {"prev_ad_spend", s.prev_ad_spend},
          {"cumulative_profit", s.cumulative_profit}};
}

json to_json(const sim::Action& a) { return {{"price_change", a.price_change_pct}, {"ad_spend", a.ad_spend}}; }

json to_json(const guardian::Verdict& v) {
  json violations = json::array();
  for (const auto& x : v.violations) {
    violations.push_back({{"rule", guardian::to_string(x.rule)}, {"observed", x.observed}, {"limit", x.limit}});
  }
  return {{"is_valid", v.is_valid}, {"violations", violations}, {"message", v.message}};
}

json to_json(const guardian::Repair& r) {
  json notes = json::array();
  for (const auto& n : r.repairs) {
    notes.push_back({{"rule", guardian::to_string(n.rule)}, {"original", n.original}, {"repaired", n.repaired}});
  }
  return {{"safe_action", to_json(r.safe_action)}, {"repairs", notes}, {"message", r.message}};
}

json to_json(const causal::CausalEstimate& e) {
  return {{"profit_change", e.profit_change},
          {"trust_change", e.trust_change},
          {"profit_confidence", e.profit_confidence},
          {"trust_confidence", e.trust_confidence}};
}

json to_json(const agents::WeekRecord& w) {
  json violations = json::array();
  for (const auto& v : w.violations) violations.push_back(guardian::to_string(v.rule));
  json repairs = json::array();
  for (const auto& n : w.repairs) {
    repairs.push_back({{"rule", guardian::to_string(n.rule)}, {"original", n.original}, {"repaired", n.repaired}});
  }
  json j = {{"week", w.week},
            {"before", to_json(w.before)},
            {"after", to_json(w.after)},
            {"raw_action", to_json(w.raw)},
            {"executed_action", to_json(w.executed)},
            {"violations", violations},
            {"repairs", repairs},
            {"demand", w.demand},
            {"profit", w.profit},
            {"trust", w.after.trust},
            {"catastrophic", w.catastrophic}};
  if (!w.candidates.empty()) {
    json cands = json::array();
    for (const auto& c : w.candidates) {
      cands.push_back({{"action", to_json(c.action)},
                       {"estimate", to_json(c.estimate)},
                       {"long_term_value", c.long_term_value},
                       {"replacements", c.replacements},
                       {"repaired", c.repaired}});
    }
    j["candidates"] = cands;
  }
  return j;
}

json to_json(const bench::MetricsSummary& m) {
  return {{"weeks", m.weeks},
          {"total_profit", m.total_profit},
          {"mean_weekly", m.mean_weekly},
          {"std_weekly", m.std_weekly},
          {"sharpe", m.sharpe},
          {"final_trust", m.final_trust},
          {"trust_delta_pct", m.trust_delta_pct},
          {"failure_rate_pct", m.failure_rate_pct},
          {"violation_rate_pct", m.violation_rate_pct},
          {"repaired_weeks", m.repaired_weeks},
          {"catastrophic_weeks", m.catastrophic_weeks}};
}

namespace {

double number(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

sim::Action action_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("action must be a JSON object");
  const char* pct_key = j.contains("price_change") ? "price_change" : "price_change_pct";
  if (!j.contains(pct_key)) throw ConfigError("action needs 'price_change'");
  if (!j.contains("ad_spend")) throw ConfigError("action needs 'ad_spend'");
  return sim::Action{number(j, pct_key), number(j, "ad_spend")};
}

sim::MarketState state_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("state must be a JSON object");
  sim::MarketState s;
  if (j.contains("week")) {
    if (!j["week"].is_number_integer()) throw ConfigError("field 'week' must be an integer");
    s.week = j["week"].get<int>();
  }
  if (j.contains("price")) s.price = number(j, "price");
  if (j.contains("trust")) s.trust = number(j, "trust");
  if (j.contains("prev_ad_spend")) s.prev_ad_spend = number(j, "prev_ad_spend");
  if (j.contains("cumulative_profit")) s.cumulative_profit = number(j, "cumulative_profit");
  return s;
}

}  // namespace chimera::service
