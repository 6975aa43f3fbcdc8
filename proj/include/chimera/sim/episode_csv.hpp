#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace chimera::sim {

/// One row of an episode log. `violations` and `repairs` hold rule ids joined by '|'.
struct EpisodeRow {
  int week = 0;
  double price = 0.0;
  double price_change_pct = 0.0;
  double ad_spend = 0.0;
  double demand = 0.0;
  double profit = 0.0;
  double trust = 0.0;
  double cumulative_profit = 0.0;
  std::string violations;
  std::string repairs;
};

inline constexpr const char* kEpisodeCsvHeader =
    "week,price,price_change_pct,ad_spend,demand,profit,trust,cumulative_profit,violations,repairs";

/// Writes the header and one line per row. Numbers use the shortest
/// representation that round-trips, so identical logs give identical bytes.
void write_episode_csv(std::ostream& out, std::span<const EpisodeRow> rows);
std::vector<EpisodeRow> read_episode_csv(std::istream& in);

}  // namespace chimera::sim
