#pragma once

// Hard business-rule engine. validate_action() reports every rule a proposed
// action breaks; repair_action() projects it onto the feasible set by
// per-axis clamping:
//
//   price: clip change to [-max_discount, +max_increase] -> apply -> cap at
//          max_price -> raise to min_safe_price
//   ad:    clamp to [0, ad_cap] -> limit the increase over last week
//
// Rules are checked and reported in the RuleId declaration order.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chimera/sim/market.hpp"

namespace chimera::guardian {

enum class MarginBasis {
  OnPrice,  ///< margin measured on price: p >= cost / (1 - m)
  OnCost,   ///< markup on cost: p >= cost * (1 + m)
};

std::string_view to_string(MarginBasis b);
void parse_value(std::string_view text, MarginBasis& out);
std::string format_value(MarginBasis b);

struct ConstraintSet {
  double unit_cost = 50.0;
  double cost_buffer = 1.1;
  double min_margin = 0.15;
  MarginBasis margin_basis = MarginBasis::OnPrice;
  double safety_buffer = 0.01;
  double max_price = 150.0;
  double ad_cap = 5000.0;
  double ad_increase_cap = 1000.0;
  double max_discount_pct = 40.0;
  double max_increase_pct = 50.0;

  /// max(cost * cost_buffer, margin floor) * (1 + safety_buffer).
  double min_safe_price() const;
  void validate() const;
};

template <class V>
void visit_fields(ConstraintSet& c, V&& v) {
  v("unit_cost", c.unit_cost);
  v("cost_buffer", c.cost_buffer);
  v("min_margin", c.min_margin);
  v("margin_basis", c.margin_basis);
  v("safety_buffer", c.safety_buffer);
  v("max_price", c.max_price);
  v("ad_cap", c.ad_cap);
  v("ad_increase_cap", c.ad_increase_cap);
  v("max_discount_pct", c.max_discount_pct);
  v("max_increase_pct", c.max_increase_pct);
}

inline double min_safe_price(const ConstraintSet& cs) { return cs.min_safe_price(); }

enum class RuleId : std::uint8_t {
  PriceRateLimit = 0,
  PriceFloor = 1,
  PriceCeiling = 2,
  AdSpendRange = 3,
  AdIncreaseLimit = 4,
};

inline constexpr RuleId kAllRules[] = {RuleId::PriceRateLimit, RuleId::PriceFloor, RuleId::PriceCeiling,
                                       RuleId::AdSpendRange, RuleId::AdIncreaseLimit};

std::string_view to_string(RuleId id);
RuleId rule_from_string(std::string_view text);

/// Set of enabled repair rules. The full set is the production Guardian; the
/// model checker's mutation runs disable individual repairs.
class RuleMask {
 public:
  static constexpr RuleMask all() { return RuleMask(0x1f); }
  static constexpr RuleMask none() { return RuleMask(0); }

  constexpr bool enabled(RuleId r) const { return (bits_ >> static_cast<unsigned>(r)) & 1u; }
  constexpr RuleMask without(RuleId r) const {
    return RuleMask(static_cast<std::uint8_t>(bits_ & ~(1u << static_cast<unsigned>(r))));
  }
  constexpr std::uint8_t bits() const { return bits_; }
  friend constexpr bool operator==(RuleMask, RuleMask) = default;

 private:
  constexpr explicit RuleMask(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_;
};

struct Violation {
  RuleId rule;
  double observed;
  double limit;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct Verdict {
  bool is_valid = true;
  std::vector<Violation> violations;
  std::string message;
};

struct RepairNote {
  RuleId rule;
  double original;
  double repaired;

  friend bool operator==(const RepairNote&, const RepairNote&) = default;
};

struct Repair {
  sim::Action safe_action;
  std::vector<RepairNote> repairs;
  std::string message;
};

/// Price that `action` would produce from `state`, before any repair.
double resulting_price(const sim::Action& action, const sim::MarketState& state);

/// Checks, in order: price-change window, floor, ceiling, ad range, ad
/// increase. The change window is waived when the current price sits outside
/// [min_safe_price, max_price] and the action lands back inside that band.
Verdict validate_action(const sim::Action& action, const sim::MarketState& state, const ConstraintSet& cs);

/// Identity on valid actions. Otherwise applies the ordered clamping pipeline
/// and records one note per rule that changed a value. The returned
/// safe_action satisfies validate_action for the same state whenever every
/// rule is enabled.
Repair repair_action(const sim::Action& action, const sim::MarketState& state, const ConstraintSet& cs,
                     RuleMask enabled = RuleMask::all());

/// The price half of the pipeline alone, exactly as specified:
/// clip -> apply -> cap -> floor. Disabled rules are skipped.
double repaired_price(double current_price, double change_pct, const ConstraintSet& cs,
                      RuleMask enabled = RuleMask::all());
/// The ad half alone: clamp to [0, ad_cap] then limit the increase.
double repaired_ad(double proposed, double prev_ad, const ConstraintSet& cs, RuleMask enabled = RuleMask::all());

}  // namespace chimera::guardian
