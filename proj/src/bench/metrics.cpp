#include "chimera/bench/metrics.hpp"

#include <cmath>
#include <vector>

#include "chimera/errors.hpp"
#include "chimera/kernels.hpp"

namespace chimera::bench {

double sharpe_ratio(double mean, double std_dev) { return std_dev > 0.0 ? mean / std_dev : 0.0; }

double failure_rate_pct(std::span<const double> weekly_profit) {
  if (weekly_profit.empty()) throw DomainError("metrics: no weeks");
  std::size_t negative = 0;
  for (double p : weekly_profit) negative += p < 0.0;
  return 100.0 * static_cast<double>(negative) / static_cast<double>(weekly_profit.size());
}

MetricsSummary compute_metrics(const agents::EpisodeLog& log) {
  if (log.weeks.empty()) throw DomainError("metrics: episode log has no weeks");
  const std::size_t n = log.weeks.size();
  std::vector<double> profit(n);
  MetricsSummary m;
  m.weeks = static_cast<int>(n);
  std::size_t violated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = log.weeks[i];
    profit[i] = w.profit;
    violated += !w.violations.empty();
    m.repaired_weeks += !w.repairs.empty();
    m.catastrophic_weeks += w.catastrophic;
  }
  const kernels::Moments mo = kernels::moments(profit);
  m.total_profit = mo.sum;
  m.mean_weekly = mo.mean();
  if (n > 1) {
    // Two-pass variance; the one-pass sum of squares loses digits at these magnitudes.
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) dev[i] = profit[i] - m.mean_weekly;
    m.std_weekly = std::sqrt(kernels::dot(dev, dev) / static_cast<double>(n - 1));
  }
  m.sharpe = sharpe_ratio(m.mean_weekly, m.std_weekly);
  m.final_trust = log.weeks.back().after.trust;
  m.trust_delta_pct = 100.0 * (m.final_trust - log.initial_trust) / log.initial_trust;
  m.failure_rate_pct = failure_rate_pct(profit);
  m.violation_rate_pct = 100.0 * static_cast<double>(violated) / static_cast<double>(n);
  return m;
}

}  // namespace chimera::bench
