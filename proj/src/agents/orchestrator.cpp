#include "chimera/agents/orchestrator.hpp"

#include <fmt/format.h>

#include <cmath>

#include "chimera/errors.hpp"

namespace chimera::agents {

std::string_view to_string(ArchitectureKind k) {
  switch (k) {
    case ArchitectureKind::LlmOnly: return "llm-only";
    case ArchitectureKind::LlmGuardian: return "guardian";
    case ArchitectureKind::Chimera: return "chimera";
  }
  return "chimera";
}

ArchitectureKind architecture_from_string(std::string_view text) {
  if (text == "llm-only" || text == "llm_only") return ArchitectureKind::LlmOnly;
  if (text == "guardian" || text == "llm-guardian" || text == "llm_guardian") return ArchitectureKind::LlmGuardian;
  if (text == "chimera") return ArchitectureKind::Chimera;
  throw ConfigError(fmt::format("unknown architecture '{}' (expected chimera, guardian or llm-only)", text));
}

std::string_view display_name(ArchitectureKind k) {
  switch (k) {
    case ArchitectureKind::LlmOnly: return "LLM-Only";
    case ArchitectureKind::LlmGuardian: return "LLM+Guardian";
    case ArchitectureKind::Chimera: return "Chimera";
  }
  return "Chimera";
}

namespace {

std::string join_rules(const auto& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += '|';
    out += guardian::to_string(item.rule);
  }
  return out;
}

}  // namespace

std::vector<sim::EpisodeRow> to_rows(const EpisodeLog& log) {
  std::vector<sim::EpisodeRow> rows;
  rows.reserve(log.weeks.size());
  for (const auto& w : log.weeks) {
    rows.push_back(sim::EpisodeRow{w.week, w.after.price, w.executed.price_change_pct, w.executed.ad_spend, w.demand,
                                   w.profit, w.after.trust, w.after.cumulative_profit, join_rules(w.violations),
                                   join_rules(w.repairs)});
  }
  return rows;
}

guardian::Verdict GuardianValidator::validate(const sim::Action& action, const sim::MarketState& state) {
  return guardian::validate_action(action, state, cs_);
}

guardian::Repair GuardianValidator::repair(const sim::Action& action, const sim::MarketState& state) {
  return guardian::repair_action(action, state, cs_);
}

EngineEstimator::EngineEstimator(std::shared_ptr<const causal::CausalEngine> engine) : engine_(std::move(engine)) {
  if (!engine_) throw ConfigError("estimator: no fitted engine");
}

causal::CausalEstimate EngineEstimator::estimate(const sim::Action& action, const sim::MarketState& state) {
  return engine_->estimate(action.price_change_pct, action.ad_spend, state);
}

void EngineEstimator::observe(int week, const std::vector<sim::MarketState>& states,
                              const std::vector<sim::Action>& actions) {
  const auto& cfg = engine_->config();
  auto obs = causal::observations_from_trajectory(states, actions, cfg.horizon, cfg.discount);
  if (obs.size() <= absorbed_) return;
  const std::vector<causal::Observation> fresh(obs.begin() + static_cast<std::ptrdiff_t>(absorbed_), obs.end());
  auto next = causal::maybe_retrain(engine_, week, fresh);
  if (next != engine_) {
    engine_ = std::move(next);
    absorbed_ = obs.size();
    ++retrains_;
  }
}

bool clamp_to_domain(sim::Action& a, const sim::MarketState& s, double epsilon) {
  bool changed = false;
  if (!std::isfinite(a.price_change_pct)) {
    a.price_change_pct = 0.0;
    changed = true;
  }
  if (!(sim::apply_price_change(s.price, a.price_change_pct) > 0.0)) {
    a.price_change_pct = (epsilon / s.price - 1.0) * 100.0;
    if (!(sim::apply_price_change(s.price, a.price_change_pct) > 0.0)) a.price_change_pct = -99.0;
    changed = true;
  }
  if (!std::isfinite(a.ad_spend) || a.ad_spend < 0.0) {
    a.ad_spend = 0.0;
    changed = true;
  }
  return changed;
}

namespace {

std::vector<Candidate> bare(const std::vector<sim::Action>& actions) {
  std::vector<Candidate> out;
  for (const auto& a : actions) out.push_back(Candidate{a, std::nullopt, std::nullopt, 0.0});
  return out;
}

sim::Action choose_raw(Strategist& strategist, const sim::MarketState& s, const ScenarioContext& ctx, int k) {
  const auto proposals = strategist.propose(s, ctx, k);
  if (proposals.empty()) throw DomainError(fmt::format("{} proposed no actions", strategist.name()));
  const std::size_t i = strategist.choose(s, ctx, bare(proposals));
  if (i >= proposals.size()) throw DomainError(fmt::format("{} chose a missing candidate", strategist.name()));
  return proposals[i];
}

}  // namespace

EpisodeLog run_architecture(ArchitectureKind kind, Strategist& strategist, const sim::SimConfig& sim_cfg,
                            const guardian::ConstraintSet& constraints, ActionValidator* validator,
                            ImpactEstimator* estimator, const ScenarioContext& scenario_ctx, const RunOptions& opt) {
  ScenarioContext ctx = scenario_ctx;
  ctx.tools = kind == ArchitectureKind::Chimera;
  sim_cfg.validate();
  constraints.validate();
  if (opt.weeks < 0) throw ConfigError("run: weeks must be >= 0");
  if (opt.hypotheses < 1) throw ConfigError("run: hypotheses must be >= 1");
  if (kind != ArchitectureKind::LlmOnly && !validator) throw ConfigError("run: this architecture needs a validator");
  if (kind == ArchitectureKind::Chimera && !estimator) throw ConfigError("run: chimera needs a fitted engine");

  EpisodeLog log;
  log.architecture = kind;
  log.scenario = std::string(to_string(ctx.bias));
  log.seed = opt.seed;
  log.trust_multiplier = ctx.trust_multiplier;
  log.initial_trust = sim_cfg.initial_trust;

  sim::MarketState s = sim::initial_state(sim_cfg);
  std::vector<sim::MarketState> states{s};
  std::vector<sim::Action> actions;

  for (int w = 0; w < opt.weeks; ++w) {
    WeekRecord rec;
    rec.week = s.week;
    rec.before = s;

    switch (kind) {
      case ArchitectureKind::LlmOnly: {
        rec.raw = choose_raw(strategist, s, ctx, opt.hypotheses);
        rec.executed = rec.raw;
        rec.catastrophic = clamp_to_domain(rec.executed, s, opt.price_epsilon);
        break;
      }
      case ArchitectureKind::LlmGuardian: {
        rec.raw = choose_raw(strategist, s, ctx, opt.hypotheses);
        guardian::Repair r = validator->repair(rec.raw, s);
        rec.executed = r.safe_action;
        rec.repairs = std::move(r.repairs);
        if (!rec.repairs.empty()) strategist.feedback(r.message);
        break;
      }
      case ArchitectureKind::Chimera: {
        const auto proposals = strategist.propose(s, ctx, opt.hypotheses);
        if (proposals.empty()) throw DomainError(fmt::format("{} proposed no actions", strategist.name()));
        std::vector<Candidate> cands;
        std::vector<std::vector<guardian::RepairNote>> notes;
        for (const auto& original : proposals) {
          CandidateRecord cr;
          cr.action = original;
          guardian::Verdict v = validator->validate(original, s);
          while (!v.is_valid && cr.replacements < opt.max_replacements) {
            ++cr.replacements;
            cr.action = strategist.replace(s, ctx, cr.action, v, cr.replacements);
            v = validator->validate(cr.action, s);
          }
          std::vector<guardian::RepairNote> applied;
          if (!v.is_valid) {
            guardian::Repair r = validator->repair(original, s);
            cr.action = r.safe_action;
            cr.repaired = true;
            applied = std::move(r.repairs);
            v = validator->validate(cr.action, s);
          }
          cr.estimate = estimator->estimate(cr.action, s);
          cr.long_term_value = causal::long_term_value(cr.estimate, ctx.trust_multiplier);
          cands.push_back(Candidate{cr.action, v, cr.estimate, cr.long_term_value});
          notes.push_back(std::move(applied));
          rec.candidates.push_back(cr);
        }
        const std::size_t best = best_by_value(cands);
        rec.raw = proposals[best];
        rec.executed = cands[best].action;
        rec.repairs = notes[best];
        break;
      }
    }

    rec.violations = guardian::validate_action(rec.executed, s, constraints).violations;
    const sim::StepResult r = sim::step(s, rec.executed, sim_cfg);
    rec.after = r.next;
    rec.demand = r.outcome.demand;
    rec.profit = r.outcome.profit;
    log.weeks.push_back(std::move(rec));

    s = r.next;
    states.push_back(s);
    actions.push_back(log.weeks.back().executed);
    if (kind == ArchitectureKind::Chimera) estimator->observe(s.week, states, actions);
  }
  return log;
}

EpisodeLog run_architecture(ArchitectureKind kind, Strategist& strategist, const sim::SimConfig& sim,
                            const guardian::ConstraintSet& constraints,
                            std::shared_ptr<const causal::CausalEngine> engine, const ScenarioContext& ctx,
                            const RunOptions& opt) {
  GuardianValidator validator(constraints);
  std::unique_ptr<EngineEstimator> estimator;
  if (kind == ArchitectureKind::Chimera) estimator = std::make_unique<EngineEstimator>(std::move(engine));
  return run_architecture(kind, strategist, sim, constraints, kind == ArchitectureKind::LlmOnly ? nullptr : &validator,
                          estimator.get(), ctx, opt);
}

}  // namespace chimera::agents
