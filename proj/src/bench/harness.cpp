#include "chimera/bench/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "chimera/errors.hpp"

namespace chimera::bench {

using ordered_json = nlohmann::ordered_json;

causal::EngineConfig BenchConfig::bench_engine_defaults() {
  causal::EngineConfig e;
  e.n_trees = 100;
  return e;
}

causal::DatasetConfig BenchConfig::bench_dataset_defaults() {
  causal::DatasetConfig d;
  d.observations = 10000;
  return d;
}

std::shared_ptr<const causal::CausalEngine> prepare_engine(const BenchConfig& cfg,
                                                           const std::filesystem::path& artifact) {
  if (!artifact.empty()) return std::make_shared<const causal::CausalEngine>(causal::CausalEngine::load(artifact));
  auto data = causal::generate_dataset(cfg.sim, cfg.guardian, cfg.dataset, cfg.engine.horizon, cfg.engine.discount);
  return std::make_shared<const causal::CausalEngine>(causal::CausalEngine::fit(std::move(data), cfg.engine));
}

CellResult run_cell(const Cell& cell, const BenchConfig& cfg, std::shared_ptr<const causal::CausalEngine> engine,
                    const StrategistFactory& factory) {
  CellResult r;
  r.cell = cell;
  try {
    auto strategist = factory ? factory(cell) : agents::scripted_strategist(cell.scenario, cell.seed);
    if (!strategist) throw ConfigError("strategist factory returned nothing");
    sim::SimConfig sim = cfg.sim;
    sim.seed = cell.seed;
    agents::RunOptions opt;
    opt.weeks = cfg.weeks;
    opt.hypotheses = cfg.hypotheses;
    opt.max_replacements = cfg.max_replacements;
    opt.seed = cell.seed;
    if (cell.architecture == agents::ArchitectureKind::Chimera && !engine) {
      throw ConfigError("chimera cell without a fitted engine");
    }
    r.log = agents::run_architecture(cell.architecture, *strategist, sim, cfg.guardian, std::move(engine),
                                     agents::scenario(cell.scenario, cell.trust_multiplier), opt);
    r.metrics = compute_metrics(*r.log);
  } catch (const std::exception& e) {
    r.log.reset();
    r.metrics.reset();
    r.error = e.what();
    if (r.error.empty()) r.error = "unknown failure";
  }
  return r;
}

std::vector<CellResult> run_cells(const std::vector<Cell>& cells, const BenchConfig& cfg,
                                  std::shared_ptr<const causal::CausalEngine> engine,
                                  const StrategistFactory& factory) {
  std::vector<CellResult> out(cells.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) out[i] = run_cell(cells[i], cfg, engine, factory);
  };
  const int n = std::max(1, std::min<int>(cfg.workers, static_cast<int>(cells.size())));
  if (n == 1) {
    work();
    return out;
  }
  std::vector<std::jthread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(work);
  pool.clear();
  return out;
}

std::vector<CellResult> run_matrix(const std::vector<agents::ArchitectureKind>& architectures,
                                   const std::vector<agents::Bias>& scenarios, const std::vector<std::uint64_t>& seeds,
                                   const BenchConfig& cfg, std::shared_ptr<const causal::CausalEngine> engine,
                                   const StrategistFactory& factory) {
  if (architectures.empty() || scenarios.empty() || seeds.empty()) {
    throw ConfigError("run_matrix: need at least one architecture, scenario and seed");
  }
  std::vector<Cell> cells;
  for (auto a : architectures) {
    for (auto s : scenarios) {
      for (auto seed : seeds) cells.push_back(Cell{a, s, seed, cfg.engine.trust_multiplier});
    }
  }
  return run_cells(cells, cfg, std::move(engine), factory);
}

std::vector<CellResult> run_trust_sweep(const std::vector<double>& multipliers, std::uint64_t seed,
                                        const BenchConfig& cfg, std::shared_ptr<const causal::CausalEngine> engine,
                                        const StrategistFactory& factory) {
  if (multipliers.empty()) throw ConfigError("trust sweep: no multipliers");
  std::vector<Cell> cells;
  for (double m : multipliers) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError(fmt::format("trust sweep: invalid multiplier {}", m));
    cells.push_back(Cell{agents::ArchitectureKind::Chimera, agents::Bias::Neutral, seed, m});
  }
  return run_cells(cells, cfg, std::move(engine), factory);
}

namespace {

struct CellKey {
  agents::ArchitectureKind arch;
  agents::Bias scenario;
  auto operator<=>(const CellKey&) const = default;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Groups results by (architecture, scenario) in first-seen order.
std::vector<std::pair<CellKey, std::vector<const CellResult*>>> group(const std::vector<CellResult>& results) {
  std::vector<std::pair<CellKey, std::vector<const CellResult*>>> out;
  for (const auto& r : results) {
    const CellKey k{r.cell.architecture, r.cell.scenario};
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& g) { return g.first == k; });
    if (it == out.end()) {
      out.push_back({k, {}});
      it = out.end() - 1;
    }
    it->second.push_back(&r);
  }
  return out;
}

std::string scenario_label(agents::Bias b) {
  switch (b) {
    case agents::Bias::Neutral: return "Neutral";
    case agents::Bias::Volume: return "Volume";
    case agents::Bias::Margin: return "Margin";
  }
  return "Neutral";
}

std::string cell_dir_name(const Cell& c) {
  return fmt::format("{}_{}_seed{}", agents::to_string(c.architecture), agents::to_string(c.scenario), c.seed);
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    out << text;
    if (!out.flush()) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

void write_cell_files(const std::filesystem::path& dir, const CellResult& r) {
  if (r.log) {
    std::ostringstream csv;
    const auto rows = agents::to_rows(*r.log);
    sim::write_episode_csv(csv, rows);
    write_atomic(dir / "episode.csv", csv.str());
  }
  write_atomic(dir / "summary.json", summary_json(r));
}

std::string plot_csv(const std::vector<CellResult>& results, auto&& series) {
  std::string out = "architecture,scenario,seed,trust_multiplier,week,value\n";
  for (const auto& r : results) {
    if (!r.log) continue;
    const std::vector<double> values = series(*r.log);
    for (std::size_t i = 0; i < values.size(); ++i) {
      out += fmt::format("{},{},{},{},{},{}\n", agents::to_string(r.cell.architecture),
                         agents::to_string(r.cell.scenario), r.cell.seed, r.cell.trust_multiplier,
                         r.log->weeks[i].week, values[i]);
    }
  }
  return out;
}

std::vector<double> column(const agents::EpisodeLog& log, auto&& get) {
  std::vector<double> v;
  for (const auto& w : log.weeks) v.push_back(get(w));
  return v;
}

void write_plot_files(const std::filesystem::path& dir, const std::vector<CellResult>& results) {
  write_atomic(dir / "cumulative_profit.csv", plot_csv(results, [](const agents::EpisodeLog& l) {
                 return column(l, [](const agents::WeekRecord& w) { return w.after.cumulative_profit; });
               }));
  write_atomic(dir / "weekly_profit_rolling3.csv", plot_csv(results, [](const agents::EpisodeLog& l) {
                 return rolling_mean(column(l, [](const agents::WeekRecord& w) { return w.profit; }), 3);
               }));
  write_atomic(dir / "trust.csv", plot_csv(results, [](const agents::EpisodeLog& l) {
                 return column(l, [](const agents::WeekRecord& w) { return w.after.trust; });
               }));
  write_atomic(dir / "price_rolling5.csv", plot_csv(results, [](const agents::EpisodeLog& l) {
                 return rolling_mean(column(l, [](const agents::WeekRecord& w) { return w.after.price; }), 5);
               }));
}

}  // namespace

std::vector<double> rolling_mean(const std::vector<double>& values, int window) {
  if (window < 1) throw DomainError("rolling_mean: window must be >= 1");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - static_cast<std::size_t>(window) : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += values[j];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

std::string summary_json(const CellResult& r) {
  ordered_json j;
  j["architecture"] = std::string(agents::to_string(r.cell.architecture));
  j["scenario"] = std::string(agents::to_string(r.cell.scenario));
  j["seed"] = r.cell.seed;
  j["trust_multiplier"] = r.cell.trust_multiplier;
  j["status"] = r.ok() ? "ok" : "failed";
  if (!r.ok()) {
    j["error"] = r.error;
  } else {
    const MetricsSummary& m = *r.metrics;
    j["metrics"] = {{"weeks", m.weeks},
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
  return j.dump(2) + "\n";
}

std::string table1_csv(const std::vector<CellResult>& results) {
  std::string out = std::string(kTable1Header) + "\n";
  for (const auto& [key, cells] : group(results)) {
    std::vector<double> profit, trust, delta, sharpe, viol;
    for (const auto* r : cells) {
      if (!r->ok()) continue;
      profit.push_back(r->metrics->total_profit);
      trust.push_back(r->metrics->final_trust);
      delta.push_back(r->metrics->trust_delta_pct);
      sharpe.push_back(r->metrics->sharpe);
      viol.push_back(r->metrics->violation_rate_pct);
    }
    const auto arch = agents::display_name(key.arch);
    if (profit.empty()) {
      out += fmt::format("{},{},failed,failed,failed,failed,failed\n", arch, scenario_label(key.scenario));
      continue;
    }
    out += fmt::format("{},{},{:.2f},{:.4f},{:+.2f}%,{:.2f},{:.1f}%\n", arch, scenario_label(key.scenario),
                       mean_of(profit), mean_of(trust), mean_of(delta), mean_of(sharpe), mean_of(viol));
  }
  return out;
}

std::string table2_csv(const std::vector<CellResult>& results) {
  std::string out = std::string(kTable2Header) + "\n";
  for (const auto& r : results) {
    if (!r.ok()) {
      out += fmt::format("{:.0f},failed,failed,failed,failed,failed\n", r.cell.trust_multiplier);
      continue;
    }
    const MetricsSummary& m = *r.metrics;
    out += fmt::format("{:.0f},{:.2f},{:.2f},{:.2f},{:.2f},{:.4f}\n", r.cell.trust_multiplier, m.total_profit,
                       m.mean_weekly, m.std_weekly, m.sharpe, m.final_trust);
  }
  return out;
}

namespace {

std::string replicates_csv(const std::vector<CellResult>& results) {
  std::string out =
      "architecture,scenario,seeds,failed,total_profit_mean,total_profit_sd,final_trust_mean,final_trust_sd,"
      "sharpe_mean,sharpe_sd,violation_rate_mean,violation_rate_sd\n";
  for (const auto& [key, cells] : group(results)) {
    std::vector<double> profit, trust, sharpe, viol;
    int failed = 0;
    for (const auto* r : cells) {
      if (!r->ok()) {
        ++failed;
        continue;
      }
      profit.push_back(r->metrics->total_profit);
      trust.push_back(r->metrics->final_trust);
      sharpe.push_back(r->metrics->sharpe);
      viol.push_back(r->metrics->violation_rate_pct);
    }
    if (profit.empty()) {
      out += fmt::format("{},{},{},{},,,,,,,,\n", agents::to_string(key.arch), agents::to_string(key.scenario),
                         cells.size(), failed);
      continue;
    }
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", agents::to_string(key.arch),
                       agents::to_string(key.scenario), cells.size(), failed, mean_of(profit), sd_of(profit),
                       mean_of(trust), sd_of(trust), mean_of(sharpe), sd_of(sharpe), mean_of(viol), sd_of(viol));
  }
  return out;
}

}  // namespace

void write_matrix_outputs(const std::filesystem::path& dir, const std::vector<CellResult>& results) {
  std::filesystem::create_directories(dir);
  bool multi_seed = false;
  for (const auto& [key, cells] : group(results)) multi_seed |= cells.size() > 1;
  for (const auto& r : results) write_cell_files(dir / cell_dir_name(r.cell), r);
  write_atomic(dir / "table1.csv", table1_csv(results));
  if (multi_seed) write_atomic(dir / "table1_replicates.csv", replicates_csv(results));
  write_plot_files(dir / "plots", results);
}

void write_sweep_outputs(const std::filesystem::path& dir, const std::vector<CellResult>& results) {
  std::filesystem::create_directories(dir);
  std::string pareto = "multiplier,final_trust,total_profit\n";
  for (const auto& r : results) {
    write_cell_files(dir / "sweep" / fmt::format("m{:.0f}", r.cell.trust_multiplier), r);
    if (r.ok()) {
      pareto += fmt::format("{:.0f},{},{}\n", r.cell.trust_multiplier, r.metrics->final_trust,
                            r.metrics->total_profit);
    }
  }
  write_atomic(dir / "table2.csv", table2_csv(results));
  write_atomic(dir / "pareto.csv", pareto);
  write_plot_files(dir / "sweep" / "plots", results);
}

}  // namespace chimera::bench
