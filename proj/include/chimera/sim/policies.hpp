#pragma once

#include <vector>

#include "chimera/sim/episode_csv.hpp"
#include "chimera/sim/market.hpp"

namespace chimera::sim {

/// Fixed, state-independent script used for regression logs: a five-week
/// price cycle with a four-week ad cycle.
inline Action cycle_policy(const MarketState& s) {
  static constexpr double kPct[] = {5.0, -3.0, 0.0, 10.0, -8.0};
  static constexpr double kAd[] = {0.0, 500.0, 1000.0, 1500.0};
  return Action{kPct[s.week % 5], kAd[s.week % 4]};
}

/// Runs `weeks` steps of `policy` from the config's initial state.
template <class Policy>
std::vector<EpisodeRow> run_policy(const SimConfig& cfg, int weeks, Policy&& policy) {
  std::vector<EpisodeRow> rows;
  MarketState s = initial_state(cfg);
  for (int w = 0; w < weeks; ++w) {
    const Action a = policy(s);
    const StepResult r = step(s, a, cfg);
    rows.push_back(EpisodeRow{s.week, r.outcome.price, a.price_change_pct, a.ad_spend, r.outcome.demand,
                              r.outcome.profit, r.next.trust, r.next.cumulative_profit, "", ""});
    s = r.next;
  }
  return rows;
}

}  // namespace chimera::sim
