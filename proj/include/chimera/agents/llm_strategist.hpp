#pragma once

// Strategist backed by a chat-completions endpoint.
//
// Each week the model receives the prompt scaffold (objective, market state,
// tool descriptions, the four-phase instructions) and answers with either
// tool calls naming its hypotheses or a JSON object
//   {"hypotheses": [{"price_change": pct, "ad_spend": usd}, ...], "choice": i}
// A reply that cannot be parsed is re-prompted once; after that, and on any
// transport failure, the scripted balanced strategist fills in and the event
// is written to the transcript.

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "chimera/agents/strategist.hpp"

namespace chimera::agents {

inline constexpr const char* kLlmUrlEnv = "CHIMERA_LLM_URL";
inline constexpr const char* kLlmKeyEnv = "CHIMERA_LLM_API_KEY";
inline constexpr const char* kLlmModelEnv = "CHIMERA_LLM_MODEL";

struct LlmConfig {
  std::string url;  ///< full chat-completions URL
  std::string api_key;
  std::string model = "gpt-4o";
  double temperature = 0.9;
  int max_tokens = 1000;
  int timeout_seconds = 60;
  int max_concurrent_requests = 4;
  /// JSON-lines audit log of every exchange; empty disables it.
  std::filesystem::path transcript;

  /// URL and key from the environment; throws ConfigError naming the
  /// first missing variable. The model name is optional.
  static LlmConfig from_env();
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Sends one chat-completions request body and returns the response body.
  /// Throws std::runtime_error on network or HTTP failure.
  virtual nlohmann::json send(const nlohmann::json& request) = 0;
};

/// HTTP(S) POST with a bearer token. A process-wide limiter caps the number
/// of requests in flight.
class HttpTransport : public ChatTransport {
 public:
  explicit HttpTransport(const LlmConfig& cfg);
  nlohmann::json send(const nlohmann::json& request) override;

 private:
  std::string origin_;
  std::string path_;
  std::string api_key_;
  int timeout_seconds_;
};

/// Replays canned responses in order; used for offline runs and tests.
class ReplayTransport : public ChatTransport {
 public:
  explicit ReplayTransport(std::vector<nlohmann::json> responses) : responses_(std::move(responses)) {}
  nlohmann::json send(const nlohmann::json& request) override;

  const std::vector<nlohmann::json>& requests() const { return requests_; }

 private:
  std::vector<nlohmann::json> responses_;
  std::vector<nlohmann::json> requests_;
  std::size_t next_ = 0;
};

class LlmStrategist : public Strategist {
 public:
  LlmStrategist(LlmConfig cfg, std::unique_ptr<ChatTransport> transport, std::uint64_t seed = 42);

  std::string name() const override { return "llm:" + cfg_.model; }
  std::vector<sim::Action> propose(const sim::MarketState& state, const ScenarioContext& ctx, int k) override;
  sim::Action replace(const sim::MarketState& state, const ScenarioContext& ctx, const sim::Action& rejected,
                      const guardian::Verdict& verdict, int round) override;
  std::size_t choose(const sim::MarketState& state, const ScenarioContext& ctx,
                     const std::vector<Candidate>& candidates) override;
  void feedback(const std::string& message) override;

  int fallbacks() const { return fallbacks_; }
  int reprompts() const { return reprompts_; }

  /// The request body for one set of messages, as sent to the endpoint.
  nlohmann::json request_body(const nlohmann::json& messages, bool tools) const;

 private:
  struct Parsed {
    std::vector<sim::Action> actions;
    int choice = -1;
    std::string error;
  };

  /// One exchange with a single re-prompt on malformed output. Returns an
  /// empty Parsed with `error` set when both attempts fail.
  Parsed exchange(nlohmann::json messages, bool tools, std::size_t want, int week, const char* phase);
  void record(const nlohmann::json& entry);

  LlmConfig cfg_;
  std::unique_ptr<ChatTransport> transport_;
  ScriptedStrategist fallback_;
  std::vector<std::string> pending_feedback_;
  int last_choice_ = -1;
  int fallbacks_ = 0;
  int reprompts_ = 0;
  std::mutex transcript_mu_;
  std::ofstream transcript_;
};

/// The system prompt for a scenario.
std::string system_prompt(const ScenarioContext& ctx, bool tools);
/// The weekly user message describing the market.
std::string state_prompt(const sim::MarketState& state, int k);
/// Tool schema sent with every request when tools are available.
nlohmann::json tool_definitions();

}  // namespace chimera::agents
