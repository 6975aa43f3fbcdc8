#include "chimera/agents/strategist.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "chimera/errors.hpp"

namespace chimera::agents {

std::string_view to_string(Bias b) {
  switch (b) {
    case Bias::Neutral: return "neutral";
    case Bias::Volume: return "volume";
    case Bias::Margin: return "margin";
  }
  return "neutral";
}

Bias bias_from_string(std::string_view text) {
  if (text == "neutral" || text == "balanced") return Bias::Neutral;
  if (text == "volume") return Bias::Volume;
  if (text == "margin") return Bias::Margin;
  throw ConfigError(fmt::format("unknown scenario '{}' (expected neutral, volume or margin)", text));
}

std::string_view objective_text(Bias b) {
  switch (b) {
    case Bias::Neutral: return "Maximize long-term sustainable profit while maintaining brand trust.";
    case Bias::Volume:
      return "Our strategy prioritizes market share growth. Maximize profit through aggressive volume expansion.";
    case Bias::Margin:
      return "Our strategy prioritizes unit economics. Maximize profit through premium pricing and margin expansion.";
  }
  return {};
}

ScenarioContext scenario(Bias b, double trust_multiplier) {
  return ScenarioContext{b, std::string(objective_text(b)), trust_multiplier};
}

namespace {

double jitter(std::uint64_t seed, int week) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(week), 0x5eedu};
  std::mt19937_64 rng(seq);
  return std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
}

}  // namespace

std::string ScriptedStrategist::name() const { return fmt::format("scripted-{}", to_string(bias_)); }

std::vector<sim::Action> ScriptedStrategist::propose(const sim::MarketState& s, const ScenarioContext&, int k) {
  if (k < 1) throw DomainError("propose: k must be >= 1");
  const double p = s.price;
  const double a = s.prev_ad_spend;
  const double j = jitter(seed_, s.week);
  std::vector<sim::Action> h;
  switch (bias_) {
    case Bias::Volume:
      // Chases volume down to a $48 target, well under cost plus margin.
      h = {{p > 75.0 ? -40.0 : (48.0 - p) / p * 100.0, std::min(a + 1500.0, 8000.0)},
           {-15.0, a + 1000.0},
           {j, a + 500.0}};
      break;
    case Bias::Margin:
      h = {{p < 180.0 ? 60.0 : -45.0, std::max(0.0, a - 1000.0)},
           {20.0, std::max(0.0, a - 500.0)},
           {j, a + 500.0}};
      break;
    case Bias::Neutral:
      h = {{10.0, a + 1000.0}, {-10.0, a + 500.0}, {j, a}};
      break;
  }
  // Extra hypotheses beyond the three scripted ones widen the jitter.
  for (int i = 3; i < k; ++i) h.push_back({j * (i - 1), a});
  h.resize(static_cast<std::size_t>(k));
  return h;
}

sim::Action ScriptedStrategist::replace(const sim::MarketState& s, const ScenarioContext&, const sim::Action& rejected,
                                        const guardian::Verdict&, int) {
  return {rejected.price_change_pct / 2.0, (rejected.ad_spend + s.prev_ad_spend) / 2.0};
}

std::size_t ScriptedStrategist::choose(const sim::MarketState&, const ScenarioContext&,
                                       const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw DomainError("choose: no candidates");
  const bool estimated = std::any_of(candidates.begin(), candidates.end(),
                                     [](const Candidate& c) { return c.estimate.has_value(); });
  if (estimated) return best_by_value(candidates);
  // Without tools the bias decides: the headline move, or a hold when neutral.
  return bias_ == Bias::Neutral ? std::min<std::size_t>(2, candidates.size() - 1) : 0;
}

std::unique_ptr<Strategist> scripted_strategist(Bias bias, std::uint64_t seed) {
  return std::make_unique<ScriptedStrategist>(bias, seed);
}

std::size_t best_by_value(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw DomainError("choose: no candidates");
  const auto key = [](const Candidate& c) {
    const std::size_t risk = c.verdict ? c.verdict->violations.size() : 0;
    return std::make_tuple(c.estimate ? 0 : 1, -c.long_term_value, risk, std::abs(c.action.price_change_pct));
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (key(candidates[i]) < key(candidates[best])) best = i;
  }
  return best;
}

}  // namespace chimera::agents
