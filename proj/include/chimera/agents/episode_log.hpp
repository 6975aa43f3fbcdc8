#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chimera/causal/engine.hpp"
#include "chimera/guardian/guardian.hpp"
#include "chimera/sim/episode_csv.hpp"
#include "chimera/sim/market.hpp"

namespace chimera::agents {

enum class ArchitectureKind { LlmOnly, LlmGuardian, Chimera };

inline constexpr ArchitectureKind kAllArchitectures[] = {ArchitectureKind::LlmOnly, ArchitectureKind::LlmGuardian,
                                                         ArchitectureKind::Chimera};

/// "llm-only", "guardian", "chimera".
std::string_view to_string(ArchitectureKind k);
ArchitectureKind architecture_from_string(std::string_view text);
/// Display name used in tables: "LLM-Only", "LLM+Guardian", "Chimera".
std::string_view display_name(ArchitectureKind k);

struct CandidateRecord {
  sim::Action action;
  causal::CausalEstimate estimate;
  double long_term_value = 0.0;
  int replacements = 0;  ///< rounds spent replacing an invalid hypothesis
  bool repaired = false;  ///< replacement budget ran out; this is the repaired original
};

struct WeekRecord {
  int week = 0;
  sim::MarketState before;
  sim::MarketState after;
  sim::Action raw;       ///< the strategist's choice
  sim::Action executed;  ///< what the simulator ran
  /// Rules the executed action breaks, from an independent audit.
  std::vector<guardian::Violation> violations;
  std::vector<guardian::RepairNote> repairs;
  std::vector<CandidateRecord> candidates;
  double demand = 0.0;
  double profit = 0.0;
  /// The raw action was outside the simulator's domain and was clamped.
  bool catastrophic = false;
};

struct EpisodeLog {
  ArchitectureKind architecture = ArchitectureKind::Chimera;
  std::string scenario;
  std::uint64_t seed = 0;
  double trust_multiplier = 0.0;
  double initial_trust = 0.7;
  std::vector<WeekRecord> weeks;
};

/// Rows for the episode CSV; rule ids are joined with '|'.
std::vector<sim::EpisodeRow> to_rows(const EpisodeLog& log);

}  // namespace chimera::agents
