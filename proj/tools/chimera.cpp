// chimera: command-line front end.
//
//   chimera simulate        run a fixed policy and print the episode CSV
//   chimera guardian check  validate and repair one action given as JSON
//   chimera verify          explore the Guardian state machine
//   chimera causal generate|fit|predict
//   chimera bench run|sweep
//   chimera serve
//
// Configuration comes from --config FILE (key = value lines), then from
// --set key=value, then from per-field flags such as --sim.base_demand.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"

#include "chimera/agents/llm_strategist.hpp"
#include "chimera/bench/harness.hpp"
#include "chimera/checker/model_checker.hpp"
#include "chimera/config.hpp"
#include "chimera/errors.hpp"
#include "chimera/service/codec.hpp"
#include "chimera/service/service.hpp"
#include "chimera/sim/episode_csv.hpp"
#include "chimera/sim/policies.hpp"

using namespace chimera;
using nlohmann::json;

namespace {

struct Settings {
  sim::SimConfig sim;
  guardian::ConstraintSet guardian;
  causal::EngineConfig engine;
  causal::DatasetConfig dataset;
  bench::BenchConfig bench;
};

struct ConfigSources {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // "sim.base_demand" -> text

  template <class Cfg>
  void add_flags(CLI::App& app, const std::string& prefix) {
    for (const auto& name : config::field_names<Cfg>()) {
      const std::string key = prefix + "." + name;
      app.add_option("--" + key, flags[key], "override " + key)->group("Configuration");
    }
  }

  config::KeyValueFile resolve() const {
    config::KeyValueFile kv = file.empty() ? config::KeyValueFile{} : config::KeyValueFile::load(file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", s));
      auto trim = [](std::string t) {
        const auto b = t.find_first_not_of(" \t");
        const auto e = t.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
      };
      kv.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    for (const auto& [key, value] : flags) {
      if (!value.empty()) kv.set(key, value);
    }
    return kv;
  }
};

/// `engine` and `dataset` default to the bench sizes when the command is a
/// bench command.
Settings load_settings(const ConfigSources& src, bool bench_sizes) {
  const config::KeyValueFile kv = src.resolve();
  for (const auto& [key, value] : kv.entries()) {
    const auto dot = key.find('.');
    const std::string prefix = key.substr(0, dot);
    if (dot == std::string::npos ||
        (prefix != "sim" && prefix != "guardian" && prefix != "engine" && prefix != "dataset" && prefix != "bench")) {
      throw ConfigError(fmt::format("unknown configuration key '{}'", key));
    }
  }
  Settings s;
  if (bench_sizes) {
    s.engine = bench::BenchConfig::bench_engine_defaults();
    s.dataset = bench::BenchConfig::bench_dataset_defaults();
  }
  config::apply(kv, "sim", s.sim);
  config::apply(kv, "guardian", s.guardian);
  config::apply(kv, "engine", s.engine);
  config::apply(kv, "dataset", s.dataset);
  config::apply(kv, "bench", s.bench);
  s.sim.validate();
  s.guardian.validate();
  s.engine.validate();
  s.dataset.validate();
  s.bench.sim = s.sim;
  s.bench.guardian = s.guardian;
  s.bench.engine = s.engine;
  s.bench.dataset = s.dataset;
  return s;
}

std::string read_input(const std::string& path) {
  std::ostringstream ss;
  if (path.empty() || path == "-") {
    ss << std::cin.rdbuf();
  } else {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot read {}", path));
    ss << in.rdbuf();
  }
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write {}", path));
  out << text;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json report_json(const checker::CheckReport& r) {
  json witnesses = json::array();
  for (const auto& w : r.violations) {
    json inv = json::array();
    for (auto i : w.invariants) inv.push_back(checker::to_string(i));
    json trace = json::array();
    for (const auto& t : w.trace) {
      trace.push_back({{"price_choice", t.price_choice},
                       {"ad_choice", t.ad_choice},
                       {"price_change", t.price_change_pct},
                       {"ad_spend", t.ad_spend}});
    }
    witnesses.push_back({{"invariants", inv},
                         {"state",
                          {{"week", w.state.week},
                           {"price", w.state.price},
                           {"ad", w.state.ad},
                           {"prev_ad", w.state.prev_ad}}},
                         {"trace", trace}});
  }
  return {{"time_s", r.wall_time_s},
          {"diameter", r.diameter},
          {"states_found", r.states_found},
          {"distinct_states", r.distinct_states},
          {"violating_states", r.violating_states},
          {"complete", r.complete},
          {"backend", r.backend},
          {"distinct_per_level", r.distinct_per_level},
          {"violations", witnesses}};
}

std::vector<agents::ArchitectureKind> parse_archs(const std::string& text) {
  std::vector<agents::ArchitectureKind> out;
  for (const auto& s : split(text)) out.push_back(agents::architecture_from_string(s));
  return out;
}

std::vector<agents::Bias> parse_scenarios(const std::string& text) {
  std::vector<agents::Bias> out;
  for (const auto& s : split(text)) out.push_back(agents::bias_from_string(s));
  return out;
}

template <class T>
std::vector<T> parse_numbers(const std::string& text) {
  std::vector<T> out;
  for (const auto& s : split(text)) {
    T v{};
    config::parse_value(s, v);
    out.push_back(v);
  }
  return out;
}

bench::StrategistFactory llm_factory(const std::filesystem::path& out_dir) {
  const agents::LlmConfig base = agents::LlmConfig::from_env();
  return [base, out_dir](const bench::Cell& c) -> std::unique_ptr<agents::Strategist> {
    agents::LlmConfig cfg = base;
    cfg.transcript = out_dir / "transcripts" /
                     fmt::format("{}_{}_seed{}_m{:.0f}.jsonl", agents::to_string(c.architecture),
                                 agents::to_string(c.scenario), c.seed, c.trust_multiplier);
    return std::make_unique<agents::LlmStrategist>(cfg, std::make_unique<agents::HttpTransport>(cfg), c.seed);
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chimera decision stack: simulator, Guardian, verifier, causal engine, benchmarks, service"};
  app.require_subcommand(1);
  ConfigSources src;
  app.add_option("--config", src.file, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", src.sets, "configuration override key=value (repeatable)");
  src.add_flags<sim::SimConfig>(app, "sim");
  src.add_flags<guardian::ConstraintSet>(app, "guardian");
  src.add_flags<causal::EngineConfig>(app, "engine");
  src.add_flags<causal::DatasetConfig>(app, "dataset");
  src.add_flags<bench::BenchConfig>(app, "bench");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run a fixed policy and write the episode CSV");
  int sim_weeks = 52;
  std::string sim_policy = "cycle", sim_out;
  simulate->add_option("--weeks", sim_weeks, "number of weeks")->check(CLI::NonNegativeNumber);
  simulate->add_option("--policy", sim_policy, "cycle or hold")->check(CLI::IsMember({"cycle", "hold"}));
  simulate->add_option("--out", sim_out, "output CSV (default stdout)");
  simulate->callback([&] {
    const Settings s = load_settings(src, false);
    std::vector<sim::EpisodeRow> rows =
        sim_policy == "cycle" ? sim::run_policy(s.sim, sim_weeks, sim::cycle_policy)
                              : sim::run_policy(s.sim, sim_weeks, [](const sim::MarketState& m) { return sim::hold_action(m); });
    std::ostringstream out;
    sim::write_episode_csv(out, rows);
    write_output(sim_out, out.str());
  });

  // guardian check
  auto* guardian_cmd = app.add_subcommand("guardian", "Guardian utilities");
  guardian_cmd->require_subcommand(1);
  auto* check = guardian_cmd->add_subcommand("check", "validate and repair {\"state\": ..., \"action\": ...}");
  std::string check_input = "-";
  check->add_option("--input", check_input, "JSON file ('-' for stdin)");
  check->callback([&] {
    const Settings s = load_settings(src, false);
    const json in = json::parse(read_input(check_input));
    if (!in.is_object() || !in.contains("action")) throw ConfigError("input needs an 'action' object");
    sim::MarketState state = sim::initial_state(s.sim);
    if (in.contains("state")) {
      const sim::MarketState given = service::state_from_json(in["state"]);
      const json& js = in["state"];
      if (js.contains("week")) state.week = given.week;
      if (js.contains("price")) state.price = given.price;
      if (js.contains("trust")) state.trust = given.trust;
      if (js.contains("prev_ad_spend")) state.prev_ad_spend = given.prev_ad_spend;
      if (js.contains("cumulative_profit")) state.cumulative_profit = given.cumulative_profit;
    }
    const sim::Action a = service::action_from_json(in["action"]);
    json out = {{"state", service::to_json(state)},
                {"action", service::to_json(a)},
                {"verdict", service::to_json(guardian::validate_action(a, state, s.guardian))},
                {"repair", service::to_json(guardian::repair_action(a, state, s.guardian))},
                {"min_safe_price", s.guardian.min_safe_price()}};
    std::cout << out.dump(2) << '\n';
  });

  // verify
  auto* verify = app.add_subcommand("verify", "explore the Guardian state machine and check its invariants");
  checker::CheckerConfig ck;
  std::string price_choices, ad_choices, disable_repair, verify_json;
  double memory_mb = static_cast<double>(ck.memory_budget_bytes) / (1 << 20);
  bool merge_weeks = false;
  verify->add_option("--horizon", ck.horizon, "BFS depth in weeks");
  verify->add_option("--price-choices", price_choices, "comma-separated price changes in percent");
  verify->add_option("--ad-choices", ad_choices, "comma-separated ad budgets");
  verify->add_option("--quantum", ck.price_quantum, "price quantization step for state hashing");
  verify->add_option("--initial-price", ck.initial_price);
  verify->add_option("--initial-ad", ck.initial_ad);
  verify->add_option("--memory-mb", memory_mb, "memory budget for the visited set");
  verify->add_option("--max-witnesses", ck.max_witnesses);
  verify->add_flag("--merge-weeks", merge_weeks, "merge states that differ only in the week");
  verify->add_option("--disable-repair", disable_repair, "mutation: turn off one repair rule (e.g. price_floor)");
  verify->add_option("--json", verify_json, "write the report as JSON to this file ('-' for stdout)");
  int verify_status = 0;
  verify->callback([&] {
    const Settings s = load_settings(src, false);
    ck.constraints = s.guardian;
    if (!price_choices.empty()) ck.price_choices = parse_numbers<double>(price_choices);
    if (!ad_choices.empty()) ck.ad_choices = parse_numbers<double>(ad_choices);
    ck.memory_budget_bytes = static_cast<std::size_t>(memory_mb * (1 << 20));
    ck.dedup_by_week = !merge_weeks;
    if (!disable_repair.empty()) {
      ck.repair_rules = ck.repair_rules.without(guardian::rule_from_string(disable_repair));
    }
    const checker::CheckReport r = checker::explore(ck);
    if (verify_json != "-") std::cout << checker::human_summary(r);
    if (!verify_json.empty()) write_output(verify_json, report_json(r).dump(2) + "\n");
    if (!r.violations.empty() && verify_json != "-") {
      const auto& w = r.violations.front();
      std::cout << fmt::format("first violation at week {}: price {} ad {} prev_ad {}\n", w.state.week, w.state.price,
                               w.state.ad, w.state.prev_ad);
      for (std::size_t i = 0; i < w.trace.size(); ++i) {
        std::cout << fmt::format("  step {}: price_change {}% ad_spend {}\n", i + 1, w.trace[i].price_change_pct,
                                 w.trace[i].ad_spend);
      }
    }
    verify_status = r.ok() ? 0 : 1;
  });

  // causal
  auto* causal_cmd = app.add_subcommand("causal", "counterfactual engine");
  causal_cmd->require_subcommand(1);
  auto* generate = causal_cmd->add_subcommand("generate", "simulate a training dataset");
  std::string gen_out;
  generate->add_option("--out", gen_out, "observation CSV (default stdout)");
  generate->callback([&] {
    const Settings s = load_settings(src, false);
    const auto data = causal::generate_dataset(s.sim, s.guardian, s.dataset, s.engine.horizon, s.engine.discount);
    std::ostringstream out;
    causal::write_observations_csv(out, data, s.sim.season_period);
    write_output(gen_out, out.str());
  });

  auto* fit = causal_cmd->add_subcommand("fit", "fit the engine and save the artifact");
  std::string fit_data, fit_out;
  fit->add_option("--data", fit_data, "observation CSV; generated from the simulator when omitted");
  fit->add_option("--out", fit_out, "engine artifact path")->required();
  fit->callback([&] {
    const Settings s = load_settings(src, false);
    std::vector<causal::Observation> data;
    if (fit_data.empty()) {
      data = causal::generate_dataset(s.sim, s.guardian, s.dataset, s.engine.horizon, s.engine.discount);
    } else {
      std::ifstream in(fit_data);
      if (!in) throw ConfigError(fmt::format("cannot read {}", fit_data));
      data = causal::read_observations_csv(in);
    }
    const std::size_t n = data.size();
    const causal::CausalEngine engine = causal::CausalEngine::fit(std::move(data), s.engine);
    engine.save(std::filesystem::path(fit_out));
    std::cout << fmt::format("fitted on {} observations -> {}\n", n, fit_out);
  });

  auto* predict = causal_cmd->add_subcommand("predict", "estimate the effect of one action");
  std::string pred_engine, pred_state;
  double pred_pct = 0.0, pred_ad = 0.0;
  predict->add_option("--engine", pred_engine, "engine artifact")->required()->check(CLI::ExistingFile);
  predict->add_option("--price-change", pred_pct, "price change in percent")->required();
  predict->add_option("--ad-spend", pred_ad, "ad budget")->required();
  predict->add_option("--state", pred_state, "state JSON, e.g. {\"price\": 100, \"trust\": 0.7}");
  predict->callback([&] {
    const Settings s = load_settings(src, false);
    const causal::CausalEngine engine = causal::CausalEngine::load(std::filesystem::path(pred_engine));
    sim::MarketState state = sim::initial_state(s.sim);
    if (!pred_state.empty()) {
      const json js = json::parse(pred_state);
      const sim::MarketState given = service::state_from_json(js);
      if (js.contains("week")) state.week = given.week;
      if (js.contains("price")) state.price = given.price;
      if (js.contains("trust")) state.trust = given.trust;
      if (js.contains("prev_ad_spend")) state.prev_ad_spend = given.prev_ad_spend;
    }
    const causal::CausalEstimate e = engine.estimate(pred_pct, pred_ad, state);
    json out = service::to_json(e);
    out["long_term_value"] = causal::long_term_value(e, engine.config().trust_multiplier);
    out["trust_multiplier"] = engine.config().trust_multiplier;
    std::cout << out.dump(2) << '\n';
  });

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "experiment matrix and trust sweep");
  bench_cmd->require_subcommand(1);
  std::string b_arch = "chimera,guardian,llm-only", b_scen = "neutral,volume,margin", b_seeds = "42", b_out = "bench_out",
              b_engine, b_mult = "50000,100000,150000,200000,300000";
  std::optional<int> b_weeks, b_workers;
  bool b_llm = false;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--weeks", b_weeks, "weeks per episode");
    c->add_option("--out", b_out, "output directory");
    c->add_option("--workers", b_workers, "episodes run in parallel");
    c->add_option("--engine", b_engine, "pre-fitted engine artifact (default: fit one now)");
    c->add_flag("--llm", b_llm, "use the model endpoint from the environment instead of scripted strategists");
  };
  auto* run = bench_cmd->add_subcommand("run", "architectures x scenarios x seeds");
  add_common(run);
  run->add_option("--arch", b_arch, "comma-separated: chimera,guardian,llm-only");
  run->add_option("--scenario", b_scen, "comma-separated: neutral,volume,margin");
  run->add_option("--seed", b_seeds, "comma-separated seeds; more than one adds mean and sd per cell");
  run->callback([&] {
    Settings s = load_settings(src, true);
    if (b_weeks) s.bench.weeks = *b_weeks;
    if (b_workers) s.bench.workers = *b_workers;
    const auto archs = parse_archs(b_arch);
    const auto scenarios = parse_scenarios(b_scen);
    const auto seeds = parse_numbers<std::uint64_t>(b_seeds);
    const bool need_engine =
        std::find(archs.begin(), archs.end(), agents::ArchitectureKind::Chimera) != archs.end();
    auto engine = need_engine ? bench::prepare_engine(s.bench, b_engine) : nullptr;
    const auto factory = b_llm ? llm_factory(b_out) : bench::StrategistFactory{};
    const auto results = bench::run_matrix(archs, scenarios, seeds, s.bench, engine, factory);
    bench::write_matrix_outputs(b_out, results);
    std::cout << bench::table1_csv(results);
    for (const auto& r : results) {
      if (!r.ok()) std::cerr << fmt::format("cell failed: {} {}: {}\n", agents::to_string(r.cell.architecture),
                                            agents::to_string(r.cell.scenario), r.error);
    }
  });
  auto* sweep = bench_cmd->add_subcommand("sweep", "CHIMERA across trust multipliers");
  add_common(sweep);
  sweep->add_option("--multipliers", b_mult, "comma-separated trust multipliers");
  sweep->add_option("--seed", b_seeds, "seed");
  sweep->callback([&] {
    Settings s = load_settings(src, true);
    if (b_weeks) s.bench.weeks = *b_weeks;
    if (b_workers) s.bench.workers = *b_workers;
    const auto seeds = parse_numbers<std::uint64_t>(b_seeds);
    if (seeds.size() != 1) throw ConfigError("sweep takes exactly one seed");
    auto engine = bench::prepare_engine(s.bench, b_engine);
    const auto factory = b_llm ? llm_factory(b_out) : bench::StrategistFactory{};
    const auto results = bench::run_trust_sweep(parse_numbers<double>(b_mult), seeds.front(), s.bench, engine, factory);
    bench::write_sweep_outputs(b_out, results);
    std::cout << bench::table2_csv(results);
  });

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP session service");
  service::ServiceConfig sc;
  double ttl_hours = 24.0;
  std::string persist_dir, engine_path;
  serve->add_option("--bind", sc.bind, "bind address");
  serve->add_option("--port", sc.port, "port");
  serve->add_option("--engine", engine_path, "pre-fitted engine artifact (estimate returns 409 without one)");
  serve->add_option("--ttl-hours", ttl_hours, "idle session lifetime");
  serve->add_option("--persist", persist_dir, "directory for per-session JSON-lines logs");
  serve->add_option("--token", sc.token, "shared bearer token (or CHIMERA_SERVICE_TOKEN)");
  serve->add_option("--cors-origin", sc.cors_origin, "allowed browser origin");
  serve->callback([&] {
    const Settings s = load_settings(src, false);
    sc.sim = s.sim;
    sc.guardian = s.guardian;
    sc.trust_multiplier = s.engine.trust_multiplier;
    sc.ttl = std::chrono::seconds(static_cast<long long>(ttl_hours * 3600.0));
    sc.persistence_dir = persist_dir;
    if (sc.token.empty()) {
      if (const char* t = std::getenv("CHIMERA_SERVICE_TOKEN")) sc.token = t;
    }
    std::shared_ptr<const causal::CausalEngine> engine;
    if (!engine_path.empty()) {
      engine = std::make_shared<const causal::CausalEngine>(causal::CausalEngine::load(std::filesystem::path(engine_path)));
      sc.trust_multiplier = engine->config().trust_multiplier;
    }
    service::SessionService svc(sc, engine);
    const std::size_t restored = svc.replay();
    if (restored > 0) std::cout << fmt::format("restored {} sessions\n", restored);
    service::serve(svc);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return verify_status;
}
