#pragma once

#include <span>

#include "chimera/agents/episode_log.hpp"

namespace chimera::bench {

struct MetricsSummary {
  int weeks = 0;
  double total_profit = 0.0;
  double mean_weekly = 0.0;
  double std_weekly = 0.0;  ///< sample standard deviation (n - 1)
  double sharpe = 0.0;      ///< mean / std, risk-free rate 0; 0 when std is 0
  double final_trust = 0.0;
  double trust_delta_pct = 0.0;  ///< relative to the initial trust
  double failure_rate_pct = 0.0;  ///< weeks with negative profit
  double violation_rate_pct = 0.0;  ///< weeks whose executed action broke a rule
  int repaired_weeks = 0;
  int catastrophic_weeks = 0;
};

double sharpe_ratio(double mean, double std_dev);
double failure_rate_pct(std::span<const double> weekly_profit);

/// Throws DomainError on an empty log.
MetricsSummary compute_metrics(const agents::EpisodeLog& log);

}  // namespace chimera::bench
