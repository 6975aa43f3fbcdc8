#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chimera/causal/engine.hpp"
#include "chimera/guardian/guardian.hpp"
#include "chimera/sim/market.hpp"

namespace chimera::agents {

enum class Bias { Neutral, Volume, Margin };

std::string_view to_string(Bias b);
Bias bias_from_string(std::string_view text);

/// The business objective given to the strategist. Each bias has one fixed
/// objective text; only the trust multiplier varies across runs.
struct ScenarioContext {
  Bias bias = Bias::Neutral;
  std::string objective_text;
  double trust_multiplier = 150000.0;
  /// Whether the architecture offers the check_business_rules and
  /// estimate_profit_impact tools; set by the orchestrator.
  bool tools = true;
};

std::string_view objective_text(Bias b);
ScenarioContext scenario(Bias b, double trust_multiplier = 150000.0);

/// A hypothesis after the validation and estimation phases. `verdict` and
/// `estimate` are empty when the architecture skipped that phase.
struct Candidate {
  sim::Action action;
  std::optional<guardian::Verdict> verdict;
  std::optional<causal::CausalEstimate> estimate;
  double long_term_value = 0.0;
};

class Strategist {
 public:
  virtual ~Strategist() = default;

  virtual std::string name() const = 0;
  /// Exactly k candidate actions.
  virtual std::vector<sim::Action> propose(const sim::MarketState& state, const ScenarioContext& ctx, int k) = 0;
  /// One fresh candidate in place of `rejected`. `round` counts from 1.
  virtual sim::Action replace(const sim::MarketState& state, const ScenarioContext& ctx, const sim::Action& rejected,
                              const guardian::Verdict& verdict, int round) = 0;
  /// Index of the chosen candidate.
  virtual std::size_t choose(const sim::MarketState& state, const ScenarioContext& ctx,
                             const std::vector<Candidate>& candidates) = 0;
  /// Receives the Guardian's repair message after an action was modified.
  virtual void feedback(const std::string& message) { (void)message; }
};

/// Deterministic stand-in for a language model.
///
///   VOLUME  deep discounts (down to below the margin floor) and ad ramps
///   MARGIN  large raises toward and past 150 with ad cuts
///   NEUTRAL moderate moves around the current price
///
/// Small jitter on the third hypothesis is drawn from a stream keyed by
/// (seed, week), so proposals depend only on the seed and the state.
class ScriptedStrategist : public Strategist {
 public:
  explicit ScriptedStrategist(Bias bias, std::uint64_t seed = 42) : bias_(bias), seed_(seed) {}

  std::string name() const override;
  std::vector<sim::Action> propose(const sim::MarketState& state, const ScenarioContext& ctx, int k) override;
  sim::Action replace(const sim::MarketState& state, const ScenarioContext& ctx, const sim::Action& rejected,
                      const guardian::Verdict& verdict, int round) override;
  std::size_t choose(const sim::MarketState& state, const ScenarioContext& ctx,
                     const std::vector<Candidate>& candidates) override;

  Bias bias() const { return bias_; }

 private:
  Bias bias_;
  std::uint64_t seed_;
};

std::unique_ptr<Strategist> scripted_strategist(Bias bias, std::uint64_t seed = 42);

/// Highest long_term_value; ties go to fewer Guardian violations, then to the
/// smaller |price change|, then to the earlier candidate. Candidates without
/// an estimate rank last.
std::size_t best_by_value(const std::vector<Candidate>& candidates);

}  // namespace chimera::agents
