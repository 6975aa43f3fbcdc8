#include "chimera/checker/model_checker.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "chimera/errors.hpp"
#include "chimera/kernels.hpp"

namespace chimera::checker {

using guardian::RuleId;

std::string_view to_string(InvariantId id) {
  switch (id) {
    case InvariantId::BufferedMargin:
      return "Invariant_BufferedMargin";
    case InvariantId::PriceCap:
      return "Invariant_PriceCap";
    case InvariantId::AdSpendAbsolute:
      return "Invariant_AdSpendAbsolute";
    case InvariantId::AdSpendRelative:
      return "Invariant_AdSpendRelative";
  }
  return "unknown";
}

std::vector<InvariantId> check_invariants(const CheckerState& s, const guardian::ConstraintSet& cs) {
  std::vector<InvariantId> out;
  if (s.price < cs.min_safe_price()) out.push_back(InvariantId::BufferedMargin);
  if (s.price > cs.max_price) out.push_back(InvariantId::PriceCap);
  if (s.ad > cs.ad_cap) out.push_back(InvariantId::AdSpendAbsolute);
  if (s.ad > s.prev_ad + cs.ad_increase_cap) out.push_back(InvariantId::AdSpendRelative);
  return out;
}

void CheckerConfig::validate() const {
  if (price_choices.empty() || ad_choices.empty()) throw ConfigError("checker: choice lists must be non-empty");
  if (horizon < 1) throw ConfigError("checker: horizon must be >= 1");
  if (!(price_quantum > 0.0)) throw ConfigError("checker: price_quantum must be > 0");
  if (!(initial_price > 0.0)) throw ConfigError("checker: initial price must be > 0");
  if (price_choices.size() * ad_choices.size() > 65535) throw ConfigError("checker: choice lattice too large");
  constraints.validate();
}

namespace {

struct Key {
  std::int64_t week;
  std::int64_t price;
  std::int64_t ad;
  std::int64_t prev_ad;
  friend bool operator==(const Key&, const Key&) = default;
};

struct KeyHash {
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }
  std::size_t operator()(const Key& k) const {
    std::uint64_t h = mix(static_cast<std::uint64_t>(k.price));
    h = mix(h ^ static_cast<std::uint64_t>(k.ad));
    h = mix(h ^ static_cast<std::uint64_t>(k.prev_ad));
    h = mix(h ^ static_cast<std::uint64_t>(k.week));
    return static_cast<std::size_t>(h);
  }
};

// Structure-of-arrays frontier; parent/choice link each state to the level above.
struct Level {
  std::vector<double> price;
  std::vector<double> ad;
  std::vector<double> prev_ad;
  std::vector<std::uint32_t> parent;
  std::vector<std::uint16_t> choice;

  std::size_t size() const { return price.size(); }
  void push(double p, double a, double pa, std::uint32_t par, std::uint16_t ch) {
    price.push_back(p);
    ad.push_back(a);
    prev_ad.push_back(pa);
    parent.push_back(par);
    choice.push_back(ch);
  }
};

constexpr std::size_t kBytesPerState = 3 * sizeof(double) + sizeof(std::uint32_t) + sizeof(std::uint16_t);
constexpr std::size_t kBytesPerSetEntry = 64;

kernels::PriceRepairBounds price_bounds(const CheckerConfig& cfg) {
  const auto& cs = cfg.constraints;
  const double inf = std::numeric_limits<double>::infinity();
  const bool rate = cfg.repair_rules.enabled(RuleId::PriceRateLimit);
  return kernels::PriceRepairBounds{rate ? -cs.max_discount_pct : -inf, rate ? cs.max_increase_pct : inf,
                                    cfg.repair_rules.enabled(RuleId::PriceCeiling) ? cs.max_price : inf,
                                    cfg.repair_rules.enabled(RuleId::PriceFloor) ? cs.min_safe_price() : -inf};
}

kernels::AdRepairBounds ad_bounds(const CheckerConfig& cfg) {
  const auto& cs = cfg.constraints;
  const double inf = std::numeric_limits<double>::infinity();
  return kernels::AdRepairBounds{cfg.repair_rules.enabled(RuleId::AdSpendRange) ? cs.ad_cap : inf,
                                 cfg.repair_rules.enabled(RuleId::AdIncreaseLimit) ? cs.ad_increase_cap : inf};
}

std::vector<InvariantId> decode(std::uint8_t mask) {
  std::vector<InvariantId> out;
  if (mask & kernels::kBufferedMarginBit) out.push_back(InvariantId::BufferedMargin);
  if (mask & kernels::kPriceCapBit) out.push_back(InvariantId::PriceCap);
  if (mask & kernels::kAdAbsoluteBit) out.push_back(InvariantId::AdSpendAbsolute);
  if (mask & kernels::kAdRelativeBit) out.push_back(InvariantId::AdSpendRelative);
  return out;
}

std::vector<TraceStep> trace_to(const CheckerConfig& cfg, const std::vector<Level>& levels, std::size_t depth,
                                std::uint32_t index, std::uint16_t last_choice) {
  std::vector<TraceStep> trace(depth);
  const std::size_t n_ad = cfg.ad_choices.size();
  std::uint16_t choice = last_choice;
  for (std::size_t d = depth; d-- > 0;) {
    TraceStep& t = trace[d];
    t.price_choice = choice / n_ad;
    t.ad_choice = choice % n_ad;
    t.price_change_pct = cfg.price_choices[t.price_choice];
    t.ad_spend = cfg.ad_choices[t.ad_choice];
    if (d == 0) break;
    choice = levels[d].choice[index];
    index = levels[d].parent[index];
  }
  return trace;
}

}  // namespace

CheckReport explore(const CheckerConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const auto& cs = cfg.constraints;
  const double q = cfg.price_quantum;
  const auto quantize = [q](double v) { return static_cast<std::int64_t>(std::llround(v / q)); };

  const kernels::PriceRepairBounds pb = price_bounds(cfg);
  const kernels::AdRepairBounds ab = ad_bounds(cfg);
  const kernels::InvariantBounds ib{cs.min_safe_price(), cs.max_price, cs.ad_cap, cs.ad_increase_cap};

  CheckReport report;
  report.backend = std::string(kernels::backend_name(kernels::active_backend()));

  std::vector<Level> levels(1);
  levels[0].push(cfg.initial_price, cfg.initial_ad, cfg.initial_ad, 0, 0);
  std::unordered_set<Key, KeyHash> visited;
  visited.insert(Key{0, quantize(cfg.initial_price), quantize(cfg.initial_ad), quantize(cfg.initial_ad)});
  report.distinct_states = 1;
  report.distinct_per_level.push_back(1);

  const CheckerState init{0, cfg.initial_price, cfg.initial_ad, cfg.initial_ad};
  if (auto bad = check_invariants(init, cs); !bad.empty()) {
    report.violating_states = 1;
    report.violations.push_back(Witness{std::move(bad), init, {}});
  }

  const std::size_t n_price = cfg.price_choices.size();
  const std::size_t n_ad = cfg.ad_choices.size();
  std::size_t stored_states = 1;
  std::vector<std::vector<double>> prices(n_price);
  std::vector<std::vector<double>> ads(n_ad);
  std::vector<std::uint8_t> mask;

  for (int depth = 1; depth <= cfg.horizon; ++depth) {
    const Level& frontier = levels.back();
    const std::size_t n = frontier.size();
    if (n == 0) break;

    for (std::size_t c = 0; c < n_price; ++c) {
      prices[c].resize(n);
      kernels::repair_prices(frontier.price, cfg.price_choices[c], pb, prices[c]);
    }
    for (std::size_t c = 0; c < n_ad; ++c) {
      ads[c].resize(n);
      kernels::repair_ads(frontier.ad, cfg.ad_choices[c], ab, ads[c]);
    }

    if (cfg.dedup_by_week) visited.clear();
    Level next;
    mask.resize(n);
    for (std::size_t pc = 0; pc < n_price; ++pc) {
      for (std::size_t ac = 0; ac < n_ad; ++ac) {
        kernels::invariant_mask(prices[pc], ads[ac], frontier.ad, ib, mask);
        const auto choice = static_cast<std::uint16_t>(pc * n_ad + ac);
        for (std::size_t i = 0; i < n; ++i) {
          const double p = prices[pc][i];
          const double a = ads[ac][i];
          const double pa = frontier.ad[i];
          const Key key{cfg.dedup_by_week ? depth : 0, quantize(p), quantize(a), quantize(pa)};
          if (!visited.insert(key).second) continue;
          ++report.distinct_states;
          if (mask[i] != 0) {
            ++report.violating_states;
            if (report.violations.size() < cfg.max_witnesses) {
              report.violations.push_back(Witness{decode(mask[i]), CheckerState{depth, p, a, pa},
                                                  trace_to(cfg, levels, static_cast<std::size_t>(depth),
                                                           static_cast<std::uint32_t>(i), choice)});
            }
            continue;
          }
          next.push(p, a, pa, static_cast<std::uint32_t>(i), choice);
        }
      }
    }
    report.states_found += static_cast<std::uint64_t>(n) * n_price * n_ad;
    report.distinct_per_level.push_back(next.size());
    if (next.size() > 0 || report.violating_states > 0) report.diameter = depth;

    stored_states += next.size();
    const std::size_t bytes = stored_states * kBytesPerState + visited.size() * kBytesPerSetEntry;
    levels.push_back(std::move(next));
    if (bytes > cfg.memory_budget_bytes) {
      report.complete = depth == cfg.horizon;
      if (!report.complete) break;
    }
  }

  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::vector<CheckerState> replay(const CheckerConfig& cfg, const std::vector<TraceStep>& trace) {
  std::vector<CheckerState> states;
  CheckerState s{0, cfg.initial_price, cfg.initial_ad, cfg.initial_ad};
  states.push_back(s);
  for (const TraceStep& t : trace) {
    CheckerState next;
    next.week = s.week + 1;
    next.price = guardian::repaired_price(s.price, t.price_change_pct, cfg.constraints, cfg.repair_rules);
    next.ad = guardian::repaired_ad(t.ad_spend, s.ad, cfg.constraints, cfg.repair_rules);
    next.prev_ad = s.ad;
    states.push_back(next);
    s = next;
  }
  return states;
}

std::string human_summary(const CheckReport& r) {
  const auto secs = static_cast<long long>(r.wall_time_s);
  std::string out = fmt::format("{:<10}{:>10}{:>18}{:>18}\n", "Time", "Diameter", "States Found", "Distinct States");
  out += fmt::format("{:02}:{:02}:{:02}  {:>10}{:>18}{:>18}\n", secs / 3600, (secs / 60) % 60, secs % 60, r.diameter,
                     r.states_found, r.distinct_states);
  out += fmt::format("{} invariant violation(s){}; kernels: {}\n", r.violating_states,
                     r.complete ? "" : " (INCOMPLETE: memory budget exceeded)", r.backend);
  for (const auto& w : r.violations) {
    std::string ids;
    for (auto id : w.invariants) ids += std::string(to_string(id)) + " ";
    out += fmt::format("  week {} price {:.4f} ad {} prev_ad {}: {}(trace of {} steps)\n", w.state.week, w.state.price,
                       w.state.ad, w.state.prev_ad, ids, w.trace.size());
  }
  return out;
}

}  // namespace chimera::checker
