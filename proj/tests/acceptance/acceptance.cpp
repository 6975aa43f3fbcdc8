// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runs with scripted strategists only; no model endpoint.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "chimera/bench/harness.hpp"
#include "chimera/causal/dml.hpp"
#include "chimera/causal/engine.hpp"
#include "chimera/checker/model_checker.hpp"
#include "chimera/guardian/guardian.hpp"
#include "chimera/sim/market.hpp"

using namespace chimera;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome verification() {
  checker::CheckerConfig cfg;
  const auto report = checker::explore(cfg);
  bool pass = report.ok() && report.diameter == 52 && report.wall_time_s <= 900.0;
  std::string detail = fmt::format("{} found, {} distinct, diameter {}, {} violations, {:.1f}s", report.states_found,
                                   report.distinct_states, report.diameter, report.violating_states,
                                   report.wall_time_s);

  checker::CheckerConfig mutant = cfg;
  mutant.horizon = 8;
  mutant.repair_rules = mutant.repair_rules.without(guardian::RuleId::PriceFloor);
  const auto broken = checker::explore(mutant);
  bool replayable = false;
  if (!broken.violations.empty()) {
    const auto& w = broken.violations.front();
    const auto states = checker::replay(mutant, w.trace);
    replayable = !states.empty() && states.back() == w.state && !checker::check_invariants(w.state, cfg.constraints).empty();
  }
  pass = pass && broken.violating_states >= 1 && replayable;
  detail += fmt::format("; price-floor mutant: {} violating states, trace replays {}", broken.violating_states,
                        replayable ? "yes" : "no");
  return {pass, detail};
}

Outcome repair_soundness() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> price(5.0, 400.0), pct(-99.0, 300.0), ad(-2000.0, 12000.0), prev(0.0, 5000.0),
      trust(0.4, 1.0);
  const guardian::ConstraintSet cs;
  int unsound = 0, not_idempotent = 0;
  for (int i = 0; i < 100000; ++i) {
    const sim::MarketState s{i % 52, price(rng), trust(rng), prev(rng), 0.0};
    const sim::Action a{pct(rng), ad(rng)};
    const auto r = guardian::repair_action(a, s, cs);
    unsound += !guardian::validate_action(r.safe_action, s, cs).is_valid;
    const auto rr = guardian::repair_action(r.safe_action, s, cs);
    not_idempotent += !(rr.safe_action == r.safe_action) || !rr.repairs.empty();
  }
  return {unsound == 0 && not_idempotent == 0,
          fmt::format("100000 pairs: {} unsound, {} not idempotent", unsound, not_idempotent)};
}

Outcome margin_floor() {
  guardian::ConstraintSet cs;
  cs.unit_cost = 50.0;
  cs.margin_basis = guardian::MarginBasis::OnPrice;
  const double floor = cs.min_safe_price();
  const sim::MarketState s{0, 100.0, 0.7, 0.0, 0.0};
  const bool blocks_58 = !guardian::validate_action({-42.0, 0.0}, s, cs).is_valid;
  const bool allows_60 = guardian::validate_action({-40.0, 0.0}, s, cs).is_valid;
  return {std::abs(floor - 59.0) <= 0.5 && blocks_58 && allows_60,
          fmt::format("min_safe_price {:.4f}; 58 blocked {}, 60 allowed {}", floor, blocks_58, allows_60)};
}

Outcome simulator_properties() {
  const sim::SimConfig cfg;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> pct(-60.0, 80.0), ad(0.0, 9000.0);
  sim::MarketState s = sim::initial_state(cfg);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    sim::Action a{pct(rng), ad(rng)};
    const double next = sim::apply_price_change(s.price, a.price_change_pct);
    if (next < 5.0 || next > 500.0) a.price_change_pct = (100.0 / s.price - 1.0) * 100.0;
    s = sim::step(s, a, cfg).next;
    lo = std::min(lo, s.trust);
    hi = std::max(hi, s.trust);
  }
  const bool contained = lo >= 0.4 && hi <= 1.0;

  bool monotone = true;
  for (int w : {0, 13, 26, 39}) {
    for (double p = 20.0; p < 200.0; p += 10.0) {
      monotone &= sim::demand(p, 0.7, 500.0, w, cfg) > sim::demand(p + 10.0, 0.7, 500.0, w, cfg);
    }
    for (double t = 0.4; t < 0.95; t += 0.05) {
      monotone &= sim::demand(100.0, t, 500.0, w, cfg) < sim::demand(100.0, t + 0.05, 500.0, w, cfg);
    }
    for (double a = 0.0; a < 5000.0; a += 500.0) {
      monotone &= sim::demand(100.0, 0.7, a, w, cfg) < sim::demand(100.0, 0.7, a + 500.0, w, cfg);
    }
  }

  double amp = 0.0;
  bool periodic = true;
  for (int w = 0; w < 52; ++w) {
    amp = std::max(amp, std::abs(sim::season_factor(w, cfg) - 1.0));
    periodic &= std::abs(sim::season_factor(w, cfg) - sim::season_factor(w + 52, cfg)) <= 1e-12;
  }
  const bool season = periodic && std::abs(amp - 0.2) <= 1e-9;

  std::uniform_real_distribution<double> price(0.5, 400.0), qty(0.0, 5000.0), spend(0.0, 6000.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double p = price(rng), q = qty(rng), a = spend(rng);
    const double oracle = (p - cfg.unit_cost) * q - cfg.fixed_cost - a;
    worst = std::max(worst, std::abs(sim::profit(p, q, a, cfg) - oracle) / std::max(1.0, std::abs(oracle)));
  }
  const bool identity = worst <= 1e-9;
  return {contained && monotone && season && identity,
          fmt::format("trust range [{:.4f}, {:.4f}]; monotone {}; season period 52 {}, amplitude {:.12f}; "
                      "profit identity worst rel err {:.2e}",
                      lo, hi, monotone, periodic, amp, worst)};
}

Outcome metrics_oracle() {
  const double sharpe = bench::sharpe_ratio(36308.0, 5875.0);
  std::vector<double> weekly(52, 30000.0);
  for (int i = 0; i < 5; ++i) weekly[static_cast<std::size_t>(i * 10)] = -1000.0;
  const double failure = bench::failure_rate_pct(weekly);
  const bool pass = fmt::format("{:.2f}", sharpe) == "6.18" && failure == 100.0 * 5.0 / 52.0 &&
                    fmt::format("{:.1f}", failure) == "9.6";
  return {pass, fmt::format("sharpe {:.4f}, failure rate {:.4f}%", sharpe, failure)};
}

Outcome causal_recovery() {
  // Y = 3 A + 2 S + e with A = 0.8 S + u
  const auto make = [](int n, std::uint64_t seed, causal::Matrix& x, causal::Matrix& t, causal::Matrix& y) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    x.resize(n, 3);
    t.resize(n, 1);
    y.resize(n, 1);
    for (int i = 0; i < n; ++i) {
      const double s = z(rng);
      x(i, 0) = s;
      x(i, 1) = z(rng);
      x(i, 2) = z(rng);
      t(i, 0) = 0.8 * s + z(rng);
      y(i, 0) = 3.0 * t(i, 0) + 2.0 * s + z(rng);
    }
  };
  causal::Matrix x, t, y, hx, ht, hy;
  make(5000, 11, x, t, y);
  make(1000, 12, hx, ht, hy);
  const auto t0 = Clock::now();
  const causal::DmlModel m = causal::fit_dml(x, t, y, causal::DmlConfig{});
  const double secs = seconds_since(t0);
  causal::Vector one(1);
  one << 1.0;
  double dml = 0.0;
  for (Eigen::Index i = 0; i < hx.rows(); ++i) dml += m.effect(0, hx.row(i).transpose(), one).value;
  dml /= static_cast<double>(hx.rows());
  const double mt = t.col(0).mean(), my = y.col(0).mean();
  const double naive = ((t.col(0).array() - mt) * (y.col(0).array() - my)).sum() / (t.col(0).array() - mt).square().sum();
  const double dml_bias = std::abs(dml - 3.0), naive_bias = std::abs(naive - 3.0);
  return {dml_bias <= 0.3 && naive_bias >= 2.0 * dml_bias && secs <= 120.0,
          fmt::format("DML {:.4f} (bias {:.4f}), naive {:.4f} (bias {:.4f}), fit {:.1f}s", dml, dml_bias, naive,
                      naive_bias, secs)};
}

Outcome counterfactual_fidelity() {
  sim::SimConfig sc;
  sc.noise_sigma = 0.0;
  const guardian::ConstraintSet cs;
  causal::EngineConfig ec;
  ec.horizon = 1;
  const causal::DatasetConfig dc;
  const auto t0 = Clock::now();
  const auto engine = causal::CausalEngine::fit(causal::generate_dataset(sc, cs, dc, ec.horizon, ec.discount), ec);
  const double secs = seconds_since(t0);

  causal::DatasetConfig held = dc;
  held.seed = 999;
  held.observations = 2000;
  double pred = 0.0, truth = 0.0, abs_rel = 0.0;
  int used = 0, seen = 0;
  for (const auto& o : causal::generate_dataset(sc, cs, held, 1, 1.0)) {
    if (used == 100) break;
    if (o.price * 1.1 > cs.max_price || seen++ % 7 != 0) continue;
    const sim::MarketState s{o.week, o.price, o.trust, o.prev_ad, 0.0};
    const double moved = sim::step(s, {10.0, o.prev_ad}, sc).outcome.profit;
    const double still = sim::step(s, {0.0, o.prev_ad}, sc).outcome.profit;
    const double p = engine.estimate(10.0, o.prev_ad, s).profit_change;
    pred += p;
    truth += moved - still;
    abs_rel += std::abs(p - (moved - still)) / std::abs(moved - still);
    ++used;
  }
  const double ratio = pred / truth;
  return {used == 100 && std::abs(ratio - 1.0) <= 0.2,
          fmt::format("{} states: mean predicted {:.1f}, mean true {:.1f}, ratio {:.3f}, per-state MARE {:.3f}; "
                      "fit {:.1f}s",
                      used, pred / used, truth / used, ratio, abs_rel / used, secs)};
}

struct MatrixRun {
  std::vector<bench::CellResult> results;
  std::map<std::string, std::string> files;
};

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

MatrixRun run_full_matrix(const fs::path& dir) {
  const bench::BenchConfig cfg;
  // Each run fits its own engine so the two runs share nothing.
  auto engine = bench::prepare_engine(cfg);
  const std::vector<agents::ArchitectureKind> archs(std::begin(agents::kAllArchitectures),
                                                   std::end(agents::kAllArchitectures));
  MatrixRun run;
  run.results = bench::run_matrix(archs, {agents::Bias::Neutral, agents::Bias::Volume, agents::Bias::Margin}, {42},
                                  cfg, engine);
  fs::remove_all(dir);
  bench::write_matrix_outputs(dir, run.results);
  run.files = read_tree(dir);
  return run;
}

const bench::CellResult& find(const std::vector<bench::CellResult>& rs, agents::ArchitectureKind k, agents::Bias b) {
  for (const auto& r : rs) {
    if (r.cell.architecture == k && r.cell.scenario == b) return r;
  }
  throw std::runtime_error("cell missing from matrix");
}

Outcome architecture_ordering(const MatrixRun& run) {
  using agents::ArchitectureKind;
  using agents::Bias;
  for (const auto& r : run.results) {
    if (!r.ok()) return {false, fmt::format("cell failed: {}", r.error)};
  }
  bool pass = true;
  std::string detail;
  for (Bias b : {Bias::Volume, Bias::Margin}) {
    const auto& c = *find(run.results, ArchitectureKind::Chimera, b).metrics;
    const auto& g = *find(run.results, ArchitectureKind::LlmGuardian, b).metrics;
    const auto& o = *find(run.results, ArchitectureKind::LlmOnly, b).metrics;
    pass &= c.total_profit >= g.total_profit && g.total_profit >= o.total_profit;
    pass &= c.violation_rate_pct == 0.0 && g.violation_rate_pct == 0.0;
    detail += fmt::format("{}: chimera {:.0f} >= guardian {:.0f} >= llm-only {:.0f}, violations {:.1f}%/{:.1f}%/{:.1f}%; ",
                          agents::to_string(b), c.total_profit, g.total_profit, o.total_profit, c.violation_rate_pct,
                          g.violation_rate_pct, o.violation_rate_pct);
  }
  const auto count_negative = [](const agents::EpisodeLog& log) {
    int n = 0;
    for (const auto& w : log.weeks) n += w.profit < 0.0;
    return n;
  };
  const int neg_only = count_negative(*find(run.results, ArchitectureKind::LlmOnly, Bias::Volume).log);
  const int neg_chimera = count_negative(*find(run.results, ArchitectureKind::Chimera, Bias::Volume).log);
  const double margin_trust = find(run.results, ArchitectureKind::Chimera, Bias::Margin).metrics->final_trust;
  bool neutral_clean = find(run.results, ArchitectureKind::Chimera, Bias::Neutral).metrics->violation_rate_pct == 0.0 &&
                       find(run.results, ArchitectureKind::LlmGuardian, Bias::Neutral).metrics->violation_rate_pct == 0.0;
  pass &= neg_only >= 1 && neg_chimera == 0 && margin_trust >= 0.7 && neutral_clean;
  detail += fmt::format("negative weeks llm-only/volume {} vs chimera/volume {}; chimera/margin final trust {:.4f}",
                        neg_only, neg_chimera, margin_trust);
  return {pass, detail};
}

Outcome trust_sweep() {
  const bench::BenchConfig cfg;
  auto engine = bench::prepare_engine(cfg);
  const auto results = bench::run_trust_sweep(bench::kDefaultMultipliers, 42, cfg, engine);
  for (const auto& r : results) {
    if (!r.ok()) return {false, fmt::format("sweep run failed: {}", r.error)};
  }
  const std::string table = bench::table2_csv(results);
  std::istringstream in(table);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  bool shape = lines.size() == 6 && lines[0] == bench::kTable2Header;
  for (std::size_t i = 1; i < lines.size(); ++i) shape &= std::count(lines[i].begin(), lines[i].end(), ',') == 5;
  const double aggressive = results.front().metrics->final_trust;
  const double conservative = results.back().metrics->final_trust;
  return {shape && conservative >= aggressive,
          fmt::format("5 runs, table shape {}; final trust 300K {:.4f} vs 50K {:.4f}; profit 300K {:.0f} vs 50K {:.0f}",
                      shape ? "ok" : "wrong", conservative, aggressive, results.back().metrics->total_profit,
                      results.front().metrics->total_profit)};
}

Outcome determinism(const MatrixRun& a, const MatrixRun& b) {
  std::size_t differing = 0;
  for (const auto& [name, content] : a.files) {
    const auto it = b.files.find(name);
    differing += it == b.files.end() || it->second != content;
  }
  differing += b.files.size() > a.files.size() ? b.files.size() - a.files.size() : 0;
  return {differing == 0 && !a.files.empty(),
          fmt::format("{} output files compared, {} differ", a.files.size(), differing)};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failures += !o.pass;
    fmt::print("{} {}: {} [{:.1f}s]\n", o.pass ? "PASS" : "FAIL", name, o.detail, seconds_since(t0));
    std::fflush(stdout);
  };

  report("guardian-verification", verification);
  report("repair-soundness", repair_soundness);
  report("margin-floor", margin_floor);
  report("simulator-properties", simulator_properties);
  report("metrics-oracle", metrics_oracle);
  report("causal-recovery", causal_recovery);
  report("counterfactual-fidelity", counterfactual_fidelity);

  const fs::path root = fs::temp_directory_path() / "chimera_acceptance";
  MatrixRun first, second;
  report("architecture-ordering", [&] {
    first = run_full_matrix(root / "run1");
    return architecture_ordering(first);
  });
  report("trust-sweep", trust_sweep);
  report("determinism", [&] {
    if (first.files.empty()) first = run_full_matrix(root / "run1");
    second = run_full_matrix(root / "run2");
    return determinism(first, second);
  });
  return failures == 0 ? 0 : 1;
}
