#pragma once

// Explicit-state breadth-first exploration of the Guardian-governed pricing
// state machine. Each transition picks one price-change choice and one ad
// choice from a finite lattice, runs it through the repair pipeline and
// moves the price and ad spend; the four safety invariants are checked on
// every generated state.
//
// Frontier expansion is vectorized through chimera::kernels: for a fixed
// choice the repair is the same clamp sequence applied to every frontier
// state.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "chimera/guardian/guardian.hpp"

namespace chimera::checker {

enum class InvariantId : std::uint8_t {
  BufferedMargin,   ///< price >= min_safe_price
  PriceCap,         ///< price <= max_price
  AdSpendAbsolute,  ///< ad <= ad_cap
  AdSpendRelative,  ///< ad <= prev_ad + ad_increase_cap
};

std::string_view to_string(InvariantId id);

/// A state of the verified machine. `ad` is the spend chosen this week and
/// `prev_ad` the one before it, which is what the relative-increase
/// invariant compares.
struct CheckerState {
  int week = 0;
  double price = 0.0;
  double ad = 0.0;
  double prev_ad = 0.0;

  friend bool operator==(const CheckerState&, const CheckerState&) = default;
};

std::vector<InvariantId> check_invariants(const CheckerState& s, const guardian::ConstraintSet& cs);

struct CheckerConfig {
  std::vector<double> price_choices{-50.0, 0.0, 20.0, 60.0};
  std::vector<double> ad_choices{0.0, 500.0, 1000.0, 2000.0, 4000.0, 5000.0};
  int horizon = 52;
  double price_quantum = 0.01;
  double initial_price = 100.0;
  double initial_ad = 0.0;
  /// When false, states at different depths with the same quantized
  /// (price, ad, prev_ad) are merged.
  bool dedup_by_week = true;
  std::size_t memory_budget_bytes = std::size_t{4} << 30;
  std::size_t max_witnesses = 16;
  guardian::ConstraintSet constraints;
  /// Repair rules actually applied on transitions. Disabling one is a
  /// mutation the checker must catch; invariants are always evaluated
  /// against `constraints`.
  guardian::RuleMask repair_rules = guardian::RuleMask::all();

  void validate() const;
};

/// One transition of a witness trace: lattice choices plus the raw action
/// they correspond to.
struct TraceStep {
  std::size_t price_choice = 0;
  std::size_t ad_choice = 0;
  double price_change_pct = 0.0;
  double ad_spend = 0.0;
};

struct Witness {
  std::vector<InvariantId> invariants;
  CheckerState state;
  std::vector<TraceStep> trace;
};

struct CheckReport {
  std::uint64_t states_found = 0;     ///< successor states generated
  std::uint64_t distinct_states = 0;  ///< unique states, including the initial one
  int diameter = 0;                   ///< deepest BFS level reached
  std::uint64_t violating_states = 0;
  std::vector<Witness> violations;
  std::vector<std::uint64_t> distinct_per_level;
  double wall_time_s = 0.0;
  bool complete = true;
  std::string backend;

  bool ok() const { return complete && violating_states == 0; }
};

CheckReport explore(const CheckerConfig& cfg);

/// Replays a witness trace through the Guardian's scalar repair and the
/// simulator's price/ad update; returns every visited state, initial first.
std::vector<CheckerState> replay(const CheckerConfig& cfg, const std::vector<TraceStep>& trace);

/// Text table with the columns Time, Diameter, States Found, Distinct States.
std::string human_summary(const CheckReport& report);

}  // namespace chimera::checker
