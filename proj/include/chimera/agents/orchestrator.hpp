#pragma once

// Weekly decision loop for the three architectures.
//
//   LLM_ONLY      propose -> choose -> execute the raw choice
//   LLM_GUARDIAN  propose -> choose -> repair -> feedback -> execute
//   CHIMERA       propose(k) -> validate, replace invalid hypotheses
//                 -> estimate each -> pick the best long_term_value -> execute
//                 -> hand the trajectory to the estimator (periodic retrain)
//
// Guardian and engine access go through the two small interfaces below so a
// run can be probed for which components it touched.

#include <cstdint>
#include <memory>
#include <vector>

#include "chimera/agents/episode_log.hpp"
#include "chimera/agents/strategist.hpp"

namespace chimera::agents {

class ActionValidator {
 public:
  virtual ~ActionValidator() = default;
  virtual guardian::Verdict validate(const sim::Action& action, const sim::MarketState& state) = 0;
  virtual guardian::Repair repair(const sim::Action& action, const sim::MarketState& state) = 0;
};

class GuardianValidator : public ActionValidator {
 public:
  explicit GuardianValidator(guardian::ConstraintSet cs) : cs_(cs) {}
  guardian::Verdict validate(const sim::Action& action, const sim::MarketState& state) override;
  guardian::Repair repair(const sim::Action& action, const sim::MarketState& state) override;

 private:
  guardian::ConstraintSet cs_;
};

class ImpactEstimator {
 public:
  virtual ~ImpactEstimator() = default;
  virtual causal::CausalEstimate estimate(const sim::Action& action, const sim::MarketState& state) = 0;
  /// Called once per executed week with the whole trajectory so far
  /// (states has one more entry than actions).
  virtual void observe(int week, const std::vector<sim::MarketState>& states,
                       const std::vector<sim::Action>& actions) = 0;
};

/// Wraps a fitted engine; observe() feeds observations not yet seen by the
/// engine to maybe_retrain.
class EngineEstimator : public ImpactEstimator {
 public:
  explicit EngineEstimator(std::shared_ptr<const causal::CausalEngine> engine);
  causal::CausalEstimate estimate(const sim::Action& action, const sim::MarketState& state) override;
  void observe(int week, const std::vector<sim::MarketState>& states,
               const std::vector<sim::Action>& actions) override;

  const std::shared_ptr<const causal::CausalEngine>& engine() const { return engine_; }
  int retrains() const { return retrains_; }

 private:
  std::shared_ptr<const causal::CausalEngine> engine_;
  std::size_t absorbed_ = 0;
  int retrains_ = 0;
};

struct RunOptions {
  int weeks = 52;
  int hypotheses = 3;
  int max_replacements = 3;
  std::uint64_t seed = 42;
  /// Price used when a raw action would make the price non-positive.
  double price_epsilon = 0.01;
};

/// Keeps a raw action inside the simulator's domain: non-finite values
/// become a hold or zero spend, a non-positive resulting price becomes
/// `price_epsilon`, negative spend becomes 0. Returns true when it changed
/// anything.
bool clamp_to_domain(sim::Action& action, const sim::MarketState& state, double price_epsilon);

/// `validator` is required for LLM_GUARDIAN and CHIMERA, `estimator` for
/// CHIMERA only; LLM_ONLY and LLM_GUARDIAN never call what they are not
/// meant to use. `constraints` is used only to audit executed actions.
EpisodeLog run_architecture(ArchitectureKind kind, Strategist& strategist, const sim::SimConfig& sim,
                            const guardian::ConstraintSet& constraints, ActionValidator* validator,
                            ImpactEstimator* estimator, const ScenarioContext& ctx, const RunOptions& opt);

/// Convenience form with the production Guardian and engine.
EpisodeLog run_architecture(ArchitectureKind kind, Strategist& strategist, const sim::SimConfig& sim,
                            const guardian::ConstraintSet& constraints,
                            std::shared_ptr<const causal::CausalEngine> engine, const ScenarioContext& ctx,
                            const RunOptions& opt);

}  // namespace chimera::agents
