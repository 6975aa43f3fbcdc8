#include "chimera/guardian/guardian.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "chimera/errors.hpp"

namespace chimera::guardian {

using sim::Action;
using sim::MarketState;

std::string_view to_string(MarginBasis b) { return b == MarginBasis::OnPrice ? "on_price" : "on_cost"; }

void parse_value(std::string_view text, MarginBasis& out) {
  if (text == "on_price" || text == "ON_PRICE") {
    out = MarginBasis::OnPrice;
  } else if (text == "on_cost" || text == "ON_COST") {
    out = MarginBasis::OnCost;
  } else {
    throw ConfigError(fmt::format("unknown margin basis '{}' (expected on_price or on_cost)", text));
  }
}

std::string format_value(MarginBasis b) { return std::string(to_string(b)); }

double ConstraintSet::min_safe_price() const {
  const double margin_floor =
      margin_basis == MarginBasis::OnPrice ? unit_cost / (1.0 - min_margin) : unit_cost * (1.0 + min_margin);
  return std::max(unit_cost * cost_buffer, margin_floor) * (1.0 + safety_buffer);
}

void ConstraintSet::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(fmt::format("invalid constraint set: {}", what));
  };
  for (double v : {unit_cost, cost_buffer, min_margin, safety_buffer, max_price, ad_cap, ad_increase_cap,
                   max_discount_pct, max_increase_pct}) {
    require(std::isfinite(v) && v >= 0.0, "values must be finite and non-negative");
  }
  require(min_margin < 1.0 || margin_basis == MarginBasis::OnCost, "min_margin must be below 1 on price basis");
  require(max_price > 0.0 && ad_cap > 0.0 && ad_increase_cap > 0.0, "caps must be positive");
  require(max_discount_pct > 0.0 && max_discount_pct < 100.0, "max_discount_pct must lie in (0, 100)");
  require(max_increase_pct > 0.0, "max_increase_pct must be positive");
  require(min_safe_price() < max_price, "min_safe_price must be below max_price");
}

std::string_view to_string(RuleId id) {
  switch (id) {
    case RuleId::PriceRateLimit:
      return "price_rate_limit";
    case RuleId::PriceFloor:
      return "price_floor";
    case RuleId::PriceCeiling:
      return "price_ceiling";
    case RuleId::AdSpendRange:
      return "ad_spend_range";
    case RuleId::AdIncreaseLimit:
      return "ad_increase_limit";
  }
  return "unknown";
}

RuleId rule_from_string(std::string_view text) {
  for (RuleId r : kAllRules) {
    if (to_string(r) == text) return r;
  }
  throw ConfigError(fmt::format("unknown rule id '{}'", text));
}

double resulting_price(const Action& action, const MarketState& state) {
  return sim::apply_price_change(state.price, action.price_change_pct);
}

namespace {

bool in_band(double price, double floor, double cap) { return price >= floor && price <= cap; }

std::string describe(const std::vector<Violation>& violations) {
  if (violations.empty()) return "action satisfies all business rules";
  std::string msg = fmt::format("{} rule violation(s):", violations.size());
  for (const auto& v : violations) {
    msg += fmt::format(" {} (observed {:.4g}, limit {:.4g});", to_string(v.rule), v.observed, v.limit);
  }
  msg.pop_back();
  return msg;
}

std::string describe(const std::vector<RepairNote>& notes) {
  if (notes.empty()) return "no repair needed";
  std::string msg = "repaired:";
  for (const auto& n : notes) {
    msg += fmt::format(" {} {:.4g} -> {:.4g};", to_string(n.rule), n.original, n.repaired);
  }
  msg.pop_back();
  return msg;
}

// Smallest adjustment of pct such that apply_price_change(price, pct) lands
// in [lo, hi]. The closed-form inverse is off by a few ulps at most.
double pct_for_target(double price, double target, double lo, double hi) {
  double pct = (target - price) / price * 100.0;
  for (int i = 0; i < 256; ++i) {
    const double p = sim::apply_price_change(price, pct);
    if (p < lo) {
      pct = std::nextafter(pct, std::numeric_limits<double>::infinity());
    } else if (p > hi) {
      pct = std::nextafter(pct, -std::numeric_limits<double>::infinity());
    } else {
      break;
    }
  }
  return pct;
}

}  // namespace

Verdict validate_action(const Action& action, const MarketState& state, const ConstraintSet& cs) {
  Verdict verdict;
  const double floor = cs.min_safe_price();
  const double pct = action.price_change_pct;

  if (!std::isfinite(pct)) {
    verdict.violations.push_back({RuleId::PriceRateLimit, pct, cs.max_increase_pct});
  } else {
    const double next = sim::apply_price_change(state.price, pct);
    const bool waived = !in_band(state.price, floor, cs.max_price) && in_band(next, floor, cs.max_price);
    if (!waived) {
      if (pct < -cs.max_discount_pct) {
        verdict.violations.push_back({RuleId::PriceRateLimit, pct, -cs.max_discount_pct});
      } else if (pct > cs.max_increase_pct) {
        verdict.violations.push_back({RuleId::PriceRateLimit, pct, cs.max_increase_pct});
      }
    }
    if (next < floor) verdict.violations.push_back({RuleId::PriceFloor, next, floor});
    if (next > cs.max_price) verdict.violations.push_back({RuleId::PriceCeiling, next, cs.max_price});
  }

  const double ad = action.ad_spend;
  if (!std::isfinite(ad) || ad < 0.0) {
    verdict.violations.push_back({RuleId::AdSpendRange, ad, 0.0});
  } else if (ad > cs.ad_cap) {
    verdict.violations.push_back({RuleId::AdSpendRange, ad, cs.ad_cap});
  }
  if (std::isfinite(ad) && ad > state.prev_ad_spend + cs.ad_increase_cap) {
    verdict.violations.push_back({RuleId::AdIncreaseLimit, ad - state.prev_ad_spend, cs.ad_increase_cap});
  }

  verdict.is_valid = verdict.violations.empty();
  verdict.message = describe(verdict.violations);
  return verdict;
}

double repaired_price(double current_price, double change_pct, const ConstraintSet& cs, RuleMask enabled) {
  double clipped = change_pct;
  if (enabled.enabled(RuleId::PriceRateLimit)) {
    clipped = std::min(std::max(change_pct, -cs.max_discount_pct), cs.max_increase_pct);
  }
  const double adjusted = sim::apply_price_change(current_price, clipped);
  double capped = adjusted;
  if (enabled.enabled(RuleId::PriceCeiling) && adjusted > cs.max_price) capped = cs.max_price;
  const double floor = cs.min_safe_price();
  if (enabled.enabled(RuleId::PriceFloor) && capped < floor) return floor;
  return capped;
}

double repaired_ad(double proposed, double prev_ad, const ConstraintSet& cs, RuleMask enabled) {
  double ad = std::isfinite(proposed) ? proposed : 0.0;
  if (enabled.enabled(RuleId::AdSpendRange)) ad = std::min(std::max(ad, 0.0), cs.ad_cap);
  if (enabled.enabled(RuleId::AdIncreaseLimit)) ad = std::min(ad, prev_ad + cs.ad_increase_cap);
  return ad;
}

Repair repair_action(const Action& action, const MarketState& state, const ConstraintSet& cs, RuleMask enabled) {
  if (validate_action(action, state, cs).is_valid) {
    return Repair{action, {}, describe(std::vector<RepairNote>{})};
  }

  Repair out;
  out.safe_action = action;
  auto& notes = out.repairs;
  const double floor = cs.min_safe_price();
  const double p = state.price;

  // Price axis.
  double pct = action.price_change_pct;
  if (!std::isfinite(pct)) {
    notes.push_back({RuleId::PriceRateLimit, pct, 0.0});
    pct = 0.0;
  }
  double clipped = pct;
  if (enabled.enabled(RuleId::PriceRateLimit)) {
    const double next = sim::apply_price_change(p, pct);
    const bool waived = !in_band(p, floor, cs.max_price) && in_band(next, floor, cs.max_price);
    if (!waived) {
      clipped = std::min(std::max(pct, -cs.max_discount_pct), cs.max_increase_pct);
      if (clipped != pct) notes.push_back({RuleId::PriceRateLimit, pct, clipped});
    }
  }
  const double adjusted = sim::apply_price_change(p, clipped);
  double target = adjusted;
  if (enabled.enabled(RuleId::PriceCeiling) && target > cs.max_price) {
    notes.push_back({RuleId::PriceCeiling, target, cs.max_price});
    target = cs.max_price;
  }
  if (enabled.enabled(RuleId::PriceFloor) && target < floor) {
    notes.push_back({RuleId::PriceFloor, target, floor});
    target = floor;
  }
  if (target != adjusted) {
    const double lo = enabled.enabled(RuleId::PriceFloor) ? floor : -std::numeric_limits<double>::infinity();
    const double hi =
        enabled.enabled(RuleId::PriceCeiling) ? cs.max_price : std::numeric_limits<double>::infinity();
    clipped = pct_for_target(p, target, lo, hi);
  }
  out.safe_action.price_change_pct = clipped;

  // Ad axis, after price.
  double ad = action.ad_spend;
  if (!std::isfinite(ad)) {
    notes.push_back({RuleId::AdSpendRange, ad, 0.0});
    ad = 0.0;
  }
  if (enabled.enabled(RuleId::AdSpendRange)) {
    const double clamped = std::min(std::max(ad, 0.0), cs.ad_cap);
    if (clamped != ad) notes.push_back({RuleId::AdSpendRange, ad, clamped});
    ad = clamped;
  }
  if (enabled.enabled(RuleId::AdIncreaseLimit)) {
    const double limit = state.prev_ad_spend + cs.ad_increase_cap;
    if (ad > limit) {
      notes.push_back({RuleId::AdIncreaseLimit, ad, limit});
      ad = limit;
    }
  }
  out.safe_action.ad_spend = ad;
  out.message = describe(notes);
  return out;
}

}  // namespace chimera::guardian
