#include "chimera/causal/engine.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "chimera/config.hpp"
#include "chimera/errors.hpp"

namespace chimera::causal {

using nlohmann::json;

namespace {

double season_phase(int week, int period) {
  return static_cast<double>(((week % period) + period) % period) / static_cast<double>(period);
}

bool all_finite(const Observation& o) {
  for (double v : {o.price, o.trust, o.prev_ad, o.price_change_pct, o.ad_spend, o.delta_profit, o.delta_trust}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

void write_observations_csv(std::ostream& out, const std::vector<Observation>& rows, int season_period) {
  out << kObservationCsvHeader << '\n';
  for (const auto& o : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", o.week, o.price, o.trust, o.prev_ad,
                       season_phase(o.week, season_period), o.price_change_pct, o.ad_spend, o.delta_profit,
                       o.delta_trust);
  }
}

std::vector<Observation> read_observations_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("observation csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kObservationCsvHeader) {
    throw ConfigError(fmt::format("observation csv: expected header '{}'", kObservationCsvHeader));
  }
  std::vector<Observation> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v[9];
    std::size_t n = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (n < 9) {
      const auto r = std::from_chars(p, end, v[n]);
      if (r.ec != std::errc{}) break;
      ++n;
      p = r.ptr;
      if (p == end) break;
      if (*p != ',') break;
      ++p;
    }
    if (n != 9 || p != end) throw ConfigError(fmt::format("observation csv line {}: expected 9 numeric fields", line_no));
    Observation o{static_cast<int>(v[0]), v[1], v[2], v[3], v[5], v[6], v[7], v[8]};
    if (static_cast<double>(o.week) != v[0] || o.week < 0 || !all_finite(o)) {
      throw ConfigError(fmt::format("observation csv line {}: invalid value", line_no));
    }
    rows.push_back(o);
  }
  return rows;
}

double long_term_value(const CausalEstimate& est, double trust_multiplier) {
  return est.profit_change + est.trust_change * trust_multiplier;
}

void EngineConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(fmt::format("invalid engine config: {}", what));
  };
  require(n_trees >= 1 && nuisance_trees >= 1, "tree counts must be >= 1");
  require(min_leaf >= 1 && max_depth >= 1, "min_leaf and max_depth must be >= 1");
  require(n_folds >= 2, "n_folds must be >= 2");
  require(retrain_interval >= 1, "retrain_interval must be >= 1");
  require(std::isfinite(trust_multiplier) && trust_multiplier >= 0.0, "trust_multiplier must be >= 0");
  require(horizon >= 1, "horizon must be >= 1");
  require(discount > 0.0 && discount <= 1.0, "discount must lie in (0, 1]");
  require(season_period >= 1, "season_period must be >= 1");
  require(coverage_z > 0.0, "coverage_z must be > 0");
  require(ridge >= 0.0 && std::isfinite(ridge), "ridge must be >= 0");
  require(threads >= 1, "threads must be >= 1");
}

void DatasetConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(fmt::format("invalid dataset config: {}", what));
  };
  require(observations >= 1, "observations must be >= 1");
  require(episode_weeks >= 1, "episode_weeks must be >= 1");
  require(hold_probability >= 0.0 && hold_probability <= 1.0, "hold_probability must lie in [0, 1]");
  require(price_sd_pct >= 0.0 && ad_sd >= 0.0, "standard deviations must be >= 0");
}

std::vector<Observation> observations_from_trajectory(const std::vector<sim::MarketState>& states,
                                                      const std::vector<sim::Action>& actions, int horizon,
                                                      double discount) {
  if (states.size() != actions.size() + 1) throw DomainError("trajectory needs one more state than actions");
  std::vector<Observation> out;
  const auto weeks = static_cast<int>(actions.size());
  for (int t = 0; t + horizon <= weeks; ++t) {
    const sim::MarketState& s = states[static_cast<std::size_t>(t)];
    double profit = 0.0;
    double weight = 1.0;
    for (int h = 0; h < horizon; ++h) {
      const auto i = static_cast<std::size_t>(t + h);
      profit += weight * (states[i + 1].cumulative_profit - states[i].cumulative_profit);
      weight *= discount;
    }
    const sim::Action& a = actions[static_cast<std::size_t>(t)];
    out.push_back(Observation{s.week, s.price, s.trust, s.prev_ad_spend, a.price_change_pct, a.ad_spend, profit,
                              states[static_cast<std::size_t>(t + horizon)].trust - s.trust});
  }
  return out;
}

std::vector<Observation> generate_dataset(const sim::SimConfig& sim_cfg, const guardian::ConstraintSet& cs,
                                          const DatasetConfig& data, int horizon, double discount) {
  sim_cfg.validate();
  cs.validate();
  data.validate();
  if (horizon < 1) throw ConfigError("dataset horizon must be >= 1");

  std::vector<Observation> out;
  out.reserve(data.observations);
  const double floor = cs.min_safe_price();
  const int period = sim_cfg.season_period;
  for (std::uint64_t episode = 0; out.size() < data.observations; ++episode) {
    std::seed_seq seq{static_cast<std::uint32_t>(data.seed), static_cast<std::uint32_t>(data.seed >> 32),
                      static_cast<std::uint32_t>(episode), static_cast<std::uint32_t>(episode >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 1.0);

    sim::SimConfig cfg = sim_cfg;
    cfg.seed = sim_cfg.seed * 6364136223846793005ull + episode + 1;
    sim::MarketState s;
    s.week = static_cast<int>(unit(rng) * period) % period;
    s.price = floor + unit(rng) * (cs.max_price - floor);
    s.trust = std::clamp(0.45 + 0.5 * unit(rng), cfg.trust_min, cfg.trust_max);
    s.prev_ad_spend = unit(rng) * cs.ad_cap;

    std::vector<sim::MarketState> states{s};
    std::vector<sim::Action> actions;
    for (int w = 0; w < data.episode_weeks + horizon - 1; ++w) {
      const double phase = 2.0 * std::numbers::pi * season_phase(s.week, period);
      sim::Action a{0.0, s.prev_ad_spend};
      if (unit(rng) >= data.hold_probability) {
        a.price_change_pct = -0.25 * (s.price - 105.0) + 6.0 * std::sin(phase) + data.price_sd_pct * z(rng);
      }
      if (unit(rng) >= data.hold_probability) {
        const double target = 2000.0 + 1500.0 * std::sin(phase) + 3000.0 * (s.trust - 0.7);
        a.ad_spend = s.prev_ad_spend + 0.3 * (target - s.prev_ad_spend) + data.ad_sd * z(rng);
      }
      const sim::Action executed = guardian::repair_action(a, s, cs).safe_action;
      s = sim::step(s, executed, cfg).next;
      actions.push_back(executed);
      states.push_back(s);
    }
    for (auto& o : observations_from_trajectory(states, actions, horizon, discount)) {
      if (out.size() == data.observations) break;
      out.push_back(o);
    }
  }
  return out;
}

Vector state_features(int week, double price, double trust, double prev_ad, int season_period) {
  const double phase = 2.0 * std::numbers::pi * season_phase(week, season_period);
  Vector x(5);
  x << price, trust, prev_ad, std::sin(phase), std::cos(phase);
  return x;
}

Vector treatment_basis(double price_change_pct, double ad_spend, double prev_ad) {
  const double dp = price_change_pct / 10.0;
  const double da = (ad_spend - prev_ad) / 1000.0;
  Vector phi(6);
  phi << dp, dp * dp, dp > 0.0 ? 1.0 : 0.0, da, da * da, dp * da;
  return phi;
}

CausalEngine CausalEngine::fit(std::vector<Observation> data, const EngineConfig& cfg) {
  cfg.validate();
  for (const auto& o : data) {
    if (!all_finite(o)) throw DomainError("engine: observation with non-finite values");
  }
  const auto n = static_cast<Eigen::Index>(data.size());
  if (data.size() < cfg.min_observations) {
    throw InsufficientData(fmt::format("engine: {} observations, need at least {}", data.size(), cfg.min_observations));
  }
  Matrix x(n, 5), t(n, 6), y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = data[static_cast<std::size_t>(i)];
    x.row(i) = state_features(o.week, o.price, o.trust, o.prev_ad, cfg.season_period).transpose();
    t.row(i) = treatment_basis(o.price_change_pct, o.ad_spend, o.prev_ad).transpose();
    y(i, 0) = o.delta_profit;
    y(i, 1) = o.delta_trust;
  }

  DmlConfig dml;
  dml.n_folds = cfg.n_folds;
  dml.nuisance.n_trees = cfg.nuisance_trees;
  dml.nuisance.max_depth = cfg.max_depth;
  dml.effect.n_trees = cfg.n_trees;
  dml.effect.min_leaf = cfg.min_leaf;
  dml.effect.max_depth = cfg.max_depth;
  dml.ridge = cfg.ridge;
  dml.min_rows = cfg.min_observations;
  dml.seed = cfg.seed;
  dml.threads = cfg.threads;

  CausalEngine e;
  e.cfg_ = cfg;
  e.model_ = fit_dml(x, t, y, dml);
  e.feature_mean_ = x.colwise().mean().transpose();
  e.feature_sd_ = ((x.rowwise() - e.feature_mean_.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < e.feature_sd_.size(); ++j) {
    if (!(e.feature_sd_(j) > 0.0)) e.feature_sd_(j) = 1.0;
  }
  e.data_ = std::move(data);
  return e;
}

double CausalEngine::coverage(const Vector& x) const {
  double excess = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double z = std::abs(x(j) - feature_mean_(j)) / feature_sd_(j);
    const double over = std::max(0.0, z - cfg_.coverage_z);
    excess += over * over;
  }
  return std::exp(-0.5 * excess);
}

namespace {

double confidence(const Effect& e, double coverage) {
  double cv = 0.0;
  if (e.tree_sd > 0.0) cv = e.value != 0.0 ? e.tree_sd / std::abs(e.value) : INFINITY;
  const double c = coverage / (1.0 + cv);
  return std::isfinite(c) ? std::clamp(c, 0.0, 1.0) : 0.0;
}

}  // namespace

CausalEstimate CausalEngine::estimate(double price_change_pct, double ad_spend, const sim::MarketState& state) const {
  if (!std::isfinite(price_change_pct) || !std::isfinite(ad_spend)) {
    throw DomainError("engine: action must be finite");
  }
  const Vector x = state_features(state.week, state.price, state.trust, state.prev_ad_spend, cfg_.season_period);
  if (!x.allFinite()) throw DomainError("engine: state must be finite");
  const Vector phi = treatment_basis(price_change_pct, ad_spend, state.prev_ad_spend);
  const double cov = coverage(x);
  const Effect profit = model_.effect(0, x, phi);
  const Effect trust = model_.effect(1, x, phi);
  return CausalEstimate{profit.value, trust.value, confidence(profit, cov), confidence(trust, cov)};
}

// ---- artifact -----------------------------------------------------------------
//
// "CHIMERA-ENGINE\n", u32 version, u64 header length, JSON header, u64 row
// count, rows of 8 doubles, then the DmlModel forests.

namespace {

constexpr char kMagic[] = "CHIMERA-ENGINE\n";
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ConfigError("engine artifact is truncated");
  return v;
}

std::vector<double> to_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

void CausalEngine::save(std::ostream& out) const {
  json header;
  header["format"] = "chimera-engine";
  header["version"] = kVersion;
  json cfg = json::object();
  for (const auto& [key, value] : config::dump("engine", cfg_)) cfg[key.substr(7)] = value;
  header["config"] = cfg;
  header["seed"] = cfg_.seed;
  header["training_size"] = data_.size();
  header["state_features"] = {"price", "trust", "prev_ad", "season_sin", "season_cos"};
  header["treatment_basis"] = {"dp", "dp^2", "dp>0", "da", "da^2", "dp*da"};
  header["feature_mean"] = to_vector(feature_mean_);
  header["feature_sd"] = to_vector(feature_sd_);
  const std::string text = header.dump();

  out.write(kMagic, sizeof(kMagic) - 1);
  put(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(out, data_.size());
  for (const auto& o : data_) {
    for (double v : {static_cast<double>(o.week), o.price, o.trust, o.prev_ad, o.price_change_pct, o.ad_spend,
                     o.delta_profit, o.delta_trust}) {
      put(out, v);
    }
  }
  model_.save(out);
  if (!out) throw ConfigError("failed to write engine artifact");
}

void CausalEngine::save(const std::filesystem::path& path) const {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError(fmt::format("cannot write '{}'", tmp.string()));
    save(out);
  }
  std::filesystem::rename(tmp, path);
}

CausalEngine CausalEngine::load(std::istream& in) {
  char magic[sizeof(kMagic) - 1];
  if (!in.read(magic, sizeof magic) || std::string_view(magic, sizeof magic) != std::string_view(kMagic, sizeof magic)) {
    throw ConfigError("not a chimera engine artifact");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw ConfigError(fmt::format("unsupported engine artifact version {}", version));
  const auto header_len = get<std::uint64_t>(in);
  if (header_len > (1u << 24)) throw ConfigError("engine artifact header is too large");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw ConfigError("engine artifact is truncated");

  CausalEngine e;
  try {
    const json header = json::parse(text);
    for (const auto& [key, value] : header.at("config").items()) {
      if (!config::assign(e.cfg_, key, value.get<std::string>())) {
        throw ConfigError(fmt::format("unknown engine config key '{}'", key));
      }
    }
    const auto mean = header.at("feature_mean").get<std::vector<double>>();
    const auto sd = header.at("feature_sd").get<std::vector<double>>();
    if (mean.size() != 5 || sd.size() != 5) throw ConfigError("engine artifact: bad feature statistics");
    e.feature_mean_ = Eigen::Map<const Vector>(mean.data(), 5);
    e.feature_sd_ = Eigen::Map<const Vector>(sd.data(), 5);
  } catch (const json::exception& ex) {
    throw ConfigError(fmt::format("engine artifact header: {}", ex.what()));
  }
  e.cfg_.validate();

  const auto rows = get<std::uint64_t>(in);
  if (rows > (std::uint64_t{1} << 28)) throw ConfigError("engine artifact: implausible row count");
  e.data_.reserve(rows);
  for (std::uint64_t i = 0; i < rows; ++i) {
    double v[8];
    for (double& d : v) d = get<double>(in);
    e.data_.push_back(Observation{static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
  }
  try {
    e.model_ = DmlModel::load(in);
  } catch (const DomainError& ex) {
    throw ConfigError(fmt::format("engine artifact: {}", ex.what()));
  }
  if (e.model_.features() != 5 || e.model_.treatments() != 6 || e.model_.outcomes() != 2) {
    throw ConfigError("engine artifact: model shape does not match the engine");
  }
  return e;
}

CausalEngine CausalEngine::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open engine artifact '{}'", path.string()));
  return load(in);
}

std::shared_ptr<const CausalEngine> maybe_retrain(std::shared_ptr<const CausalEngine> engine, int week,
                                                  const std::vector<Observation>& fresh) {
  if (!engine) throw DomainError("maybe_retrain: no engine");
  if (week < 0 || fresh.empty() || week % engine->config().retrain_interval != 0) return engine;
  std::vector<Observation> data = engine->training_data();
  data.insert(data.end(), fresh.begin(), fresh.end());
  return std::make_shared<const CausalEngine>(CausalEngine::fit(std::move(data), engine->config()));
}

}  // namespace chimera::causal
