#include "chimera/sim/episode_csv.hpp"

#include <fmt/format.h>

#include <istream>
#include <ostream>
#include <sstream>

#include "chimera/errors.hpp"

namespace chimera::sim {

void write_episode_csv(std::ostream& out, std::span<const EpisodeRow> rows) {
  out << kEpisodeCsvHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.week, r.price, r.price_change_pct, r.ad_spend, r.demand,
                       r.profit, r.trust, r.cumulative_profit, r.violations, r.repairs);
  }
}

std::vector<EpisodeRow> read_episode_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kEpisodeCsvHeader) {
    throw ConfigError("episode CSV: missing or unexpected header");
  }
  std::vector<EpisodeRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 10) cells.emplace_back();
    if (cells.size() != 10) throw ConfigError("episode CSV: expected 10 columns in '" + line + "'");
    EpisodeRow r;
    try {
      r.week = std::stoi(cells[0]);
      r.price = std::stod(cells[1]);
      r.price_change_pct = std::stod(cells[2]);
      r.ad_spend = std::stod(cells[3]);
      r.demand = std::stod(cells[4]);
      r.profit = std::stod(cells[5]);
      r.trust = std::stod(cells[6]);
      r.cumulative_profit = std::stod(cells[7]);
    } catch (const std::exception&) {
      throw ConfigError("episode CSV: malformed number in '" + line + "'");
    }
    r.violations = cells[8];
    r.repairs = cells[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace chimera::sim
