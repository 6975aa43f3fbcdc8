#pragma once

// Experiment matrix: architectures x scenarios x seeds, each a fresh episode
// from the configured initial state, plus the trust-multiplier sweep.
//
// Output layout under the chosen directory:
//   <arch>_<scenario>_seed<seed>/episode.csv, summary.json
//   table1.csv                      one row per (architecture, scenario)
//   table1_replicates.csv           mean and sd across seeds (multi-seed only)
//   plots/cumulative_profit.csv     architecture,scenario,seed,trust_multiplier,week,value
//   plots/weekly_profit_rolling3.csv
//   plots/trust.csv
//   plots/price_rolling5.csv
//   sweep/m<multiplier>/...         same per-run files for the sweep
//   table2.csv, pareto.csv

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chimera/agents/orchestrator.hpp"
#include "chimera/bench/metrics.hpp"

namespace chimera::bench {

struct BenchConfig {
  sim::SimConfig sim;
  guardian::ConstraintSet guardian;
  causal::EngineConfig engine = bench_engine_defaults();
  causal::DatasetConfig dataset = bench_dataset_defaults();
  int weeks = 52;
  int hypotheses = 3;
  int max_replacements = 3;
  int workers = 1;

  /// Every matrix episode can retrain its engine, so the bench fits a
  /// smaller forest on a smaller dataset than the standalone engine.
  static causal::EngineConfig bench_engine_defaults();
  static causal::DatasetConfig bench_dataset_defaults();
};

template <class V>
void visit_fields(BenchConfig& c, V&& v) {
  v("weeks", c.weeks);
  v("hypotheses", c.hypotheses);
  v("max_replacements", c.max_replacements);
  v("workers", c.workers);
}

struct Cell {
  agents::ArchitectureKind architecture = agents::ArchitectureKind::Chimera;
  agents::Bias scenario = agents::Bias::Neutral;
  std::uint64_t seed = 42;
  double trust_multiplier = 150000.0;
};

struct CellResult {
  Cell cell;
  std::optional<agents::EpisodeLog> log;
  std::optional<MetricsSummary> metrics;
  std::string error;  ///< non-empty when the episode failed

  bool ok() const { return error.empty(); }
};

/// Builds the scripted strategist for a cell; the default uses the cell
/// bias and seed. Override to plug in the model-backed strategist.
using StrategistFactory = std::function<std::unique_ptr<agents::Strategist>(const Cell&)>;

/// Fits the engine on a generated dataset, or loads it from `artifact`
/// when that path is non-empty.
std::shared_ptr<const causal::CausalEngine> prepare_engine(const BenchConfig& cfg,
                                                           const std::filesystem::path& artifact = {});

/// Runs one cell. Exceptions are captured into the result.
CellResult run_cell(const Cell& cell, const BenchConfig& cfg, std::shared_ptr<const causal::CausalEngine> engine,
                    const StrategistFactory& factory = {});

/// Cells in architecture-major order; runs them on cfg.workers threads.
std::vector<CellResult> run_cells(const std::vector<Cell>& cells, const BenchConfig& cfg,
                                  std::shared_ptr<const causal::CausalEngine> engine,
                                  const StrategistFactory& factory = {});

std::vector<CellResult> run_matrix(const std::vector<agents::ArchitectureKind>& architectures,
                                   const std::vector<agents::Bias>& scenarios, const std::vector<std::uint64_t>& seeds,
                                   const BenchConfig& cfg, std::shared_ptr<const causal::CausalEngine> engine,
                                   const StrategistFactory& factory = {});

inline const std::vector<double> kDefaultMultipliers = {50000.0, 100000.0, 150000.0, 200000.0, 300000.0};

/// CHIMERA under the neutral objective once per multiplier.
std::vector<CellResult> run_trust_sweep(const std::vector<double>& multipliers, std::uint64_t seed,
                                        const BenchConfig& cfg, std::shared_ptr<const causal::CausalEngine> engine,
                                        const StrategistFactory& factory = {});

inline constexpr const char* kTable1Header = "Architecture,Scenario,Total Profit,Final Trust,ΔTrust,Sharpe,Violations";
inline constexpr const char* kTable2Header = "Multiplier,Total Profit,Mean Weekly,Std Dev,Sharpe,Final Trust";

std::string table1_csv(const std::vector<CellResult>& results);
std::string table2_csv(const std::vector<CellResult>& results);
std::string summary_json(const CellResult& result);

/// Writes per-cell files, table1 and plot data. Every file is written to a
/// temporary name and renamed into place.
void write_matrix_outputs(const std::filesystem::path& dir, const std::vector<CellResult>& results);
void write_sweep_outputs(const std::filesystem::path& dir, const std::vector<CellResult>& results);

/// Trailing-window mean; the first window-1 entries average what is available.
std::vector<double> rolling_mean(const std::vector<double>& values, int window);

}  // namespace chimera::bench
