#include "chimera/agents/llm_strategist.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <stdexcept>

#include "httplib.h"

#include "chimera/errors.hpp"

namespace chimera::agents {

using nlohmann::json;

LlmConfig LlmConfig::from_env() {
  const auto need = [](const char* var) {
    const char* v = std::getenv(var);
    if (!v || !*v) throw ConfigError(fmt::format("llm strategist: environment variable {} is not set", var));
    return std::string(v);
  };
  LlmConfig cfg;
  cfg.url = need(kLlmUrlEnv);
  cfg.api_key = need(kLlmKeyEnv);
  if (const char* m = std::getenv(kLlmModelEnv); m && *m) cfg.model = m;
  return cfg;
}

namespace {

class RequestLimiter {
 public:
  static RequestLimiter& instance() {
    static RequestLimiter l;
    return l;
  }
  void set_capacity(int n) {
    std::lock_guard lock(mu_);
    capacity_ = std::max(1, n);
    cv_.notify_all();
  }
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < capacity_; });
    ++in_flight_;
  }
  void release() {
    std::lock_guard lock(mu_);
    --in_flight_;
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int capacity_ = 4;
  int in_flight_ = 0;
};

}  // namespace

HttpTransport::HttpTransport(const LlmConfig& cfg) : api_key_(cfg.api_key), timeout_seconds_(cfg.timeout_seconds) {
  const auto scheme_end = cfg.url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError(fmt::format("llm url '{}' has no scheme", cfg.url));
  const auto path_start = cfg.url.find('/', scheme_end + 3);
  origin_ = cfg.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : cfg.url.substr(path_start);
  RequestLimiter::instance().set_capacity(cfg.max_concurrent_requests);
}

json HttpTransport::send(const json& request) {
  httplib::Client client(origin_);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  client.set_write_timeout(timeout_seconds_);
  const httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

  auto& limiter = RequestLimiter::instance();
  limiter.acquire();
  auto res = client.Post(path_, headers, request.dump(), "application/json");
  limiter.release();

  if (!res) throw std::runtime_error(fmt::format("llm request failed: {}", httplib::to_string(res.error())));
  if (res->status != 200) {
    throw std::runtime_error(fmt::format("llm endpoint returned HTTP {}: {}", res->status, res->body.substr(0, 200)));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw std::runtime_error(fmt::format("llm endpoint returned invalid JSON: {}", e.what()));
  }
}

json ReplayTransport::send(const json& request) {
  requests_.push_back(request);
  if (next_ >= responses_.size()) throw std::runtime_error("replay transport: no canned response left");
  return responses_[next_++];
}

std::string system_prompt(const ScenarioContext& ctx, bool tools) {
  std::string p = fmt::format(
      "You set the weekly price and advertising budget for a single-product online store.\n"
      "Objective: {}\n"
      "An action is a price change in percent applied to the current price and an absolute weekly ad spend in "
      "dollars.\n",
      ctx.objective_text);
  if (tools) {
    p +=
        "Tools:\n"
        "- check_business_rules(price_change, ad_spend): reports whether the action satisfies the hard business "
        "rules and, if not, the nearest valid action.\n"
        "- estimate_profit_impact(price_change, ad_spend): predicts the change in profit and brand trust over the "
        "next weeks relative to holding price and ad spend.\n"
        "Each week:\n"
        "Phase 1: Generate three diverse strategic hypotheses.\n"
        "Phase 2: Validate each using check_business_rules.\n"
        "Phase 3: Estimate causal impacts using estimate_profit_impact.\n"
        "Phase 4: Select the action optimizing the profit-trust balance.\n"
        "Call the tools once per hypothesis, then answer with JSON "
        "{\"hypotheses\": [{\"price_change\": ..., \"ad_spend\": ...}, ...], \"choice\": index, \"rationale\": \"...\"}.";
  } else {
    p +=
        "Generate three diverse strategic hypotheses, pick one, and answer with JSON only: "
        "{\"hypotheses\": [{\"price_change\": ..., \"ad_spend\": ...}, ...], \"choice\": index, \"rationale\": \"...\"}.";
  }
  return p;
}

std::string state_prompt(const sim::MarketState& s, int k) {
  return fmt::format(
      "Week {}. Current price ${:.2f}, brand trust {:.3f}, last week's ad spend ${:.0f}, cumulative profit ${:.0f}. "
      "Propose {} hypotheses.",
      s.week, s.price, s.trust, s.prev_ad_spend, s.cumulative_profit, k);
}

json tool_definitions() {
  const json params = {
      {"type", "object"},
      {"properties",
       {{"price_change", {{"type", "number"}, {"description", "signed percent change of the current price"}}},
        {"ad_spend", {{"type", "number"}, {"description", "weekly advertising budget in dollars"}}}}},
      {"required", {"price_change", "ad_spend"}}};
  return json::array(
      {{{"type", "function"},
        {"function",
         {{"name", "check_business_rules"},
          {"description", "Validate an action against the hard business rules."},
          {"parameters", params}}}},
       {{"type", "function"},
        {"function",
         {{"name", "estimate_profit_impact"},
          {"description", "Estimate the profit and trust effect of an action."},
          {"parameters", params}}}}});
}

LlmStrategist::LlmStrategist(LlmConfig cfg, std::unique_ptr<ChatTransport> transport, std::uint64_t seed)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), fallback_(Bias::Neutral, seed) {
  if (!transport_) throw ConfigError("llm strategist: no transport");
  if (!cfg_.transcript.empty()) {
    if (cfg_.transcript.has_parent_path()) std::filesystem::create_directories(cfg_.transcript.parent_path());
    transcript_.open(cfg_.transcript, std::ios::app);
    if (!transcript_) throw ConfigError(fmt::format("cannot open transcript {}", cfg_.transcript.string()));
  }
}

json LlmStrategist::request_body(const json& messages, bool tools) const {
  json body = {{"model", cfg_.model},
               {"messages", messages},
               {"temperature", cfg_.temperature},
               {"max_tokens", cfg_.max_tokens}};
  if (tools) body["tools"] = tool_definitions();
  return body;
}

void LlmStrategist::record(const json& entry) {
  if (!transcript_.is_open()) return;
  std::lock_guard lock(transcript_mu_);
  transcript_ << entry.dump() << '\n';
  transcript_.flush();
}

namespace {

bool read_action(const json& j, sim::Action& out) {
  if (!j.is_object() || !j.contains("price_change") || !j.contains("ad_spend")) return false;
  const auto& p = j.at("price_change");
  const auto& a = j.at("ad_spend");
  if (!p.is_number() || !a.is_number()) return false;
  out = sim::Action{p.get<double>(), a.get<double>()};
  return std::isfinite(out.price_change_pct) && std::isfinite(out.ad_spend);
}

/// The outermost {...} in free text, parsed; null when there is none.
json embedded_object(const std::string& text) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return nullptr;
  return json::parse(text.substr(open, close - open + 1), nullptr, false);
}

void add_unique(std::vector<sim::Action>& v, const sim::Action& a) {
  if (std::find(v.begin(), v.end(), a) == v.end()) v.push_back(a);
}

}  // namespace

LlmStrategist::Parsed LlmStrategist::exchange(json messages, bool tools, std::size_t want, int week,
                                              const char* phase) {
  Parsed last;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const json body = request_body(messages, tools);
    json response;
    try {
      response = transport_->send(body);
    } catch (const std::exception& e) {
      record({{"week", week}, {"phase", phase}, {"request", body}, {"error", e.what()}});
      last = Parsed{{}, -1, e.what()};
      return last;
    }
    record({{"week", week}, {"phase", phase}, {"request", body}, {"response", response}});

    Parsed p;
    json message;
    try {
      message = response.at("choices").at(0).at("message");
    } catch (const json::exception&) {
      p.error = "response has no choices[0].message";
    }
    if (p.error.empty()) {
      if (message.contains("tool_calls") && message["tool_calls"].is_array()) {
        for (const auto& call : message["tool_calls"]) {
          const json fn = call.value("function", json::object());
          const std::string fname = fn.value("name", "");
          if (fname != "check_business_rules" && fname != "estimate_profit_impact") {
            p.error = fmt::format("unknown tool '{}'", fname);
            break;
          }
          json args = fn.value("arguments", json());
          if (args.is_string()) args = json::parse(args.get<std::string>(), nullptr, false);
          sim::Action a;
          if (!read_action(args, a)) {
            p.error = fmt::format("malformed arguments for {}", fname);
            break;
          }
          add_unique(p.actions, a);
        }
      }
      const std::string content = message.value("content", json()).is_string() ? message["content"].get<std::string>() : "";
      if (p.error.empty() && !content.empty()) {
        const json obj = embedded_object(content);
        if (obj.is_object()) {
          if (obj.contains("hypotheses") && obj["hypotheses"].is_array()) {
            std::vector<sim::Action> listed;
            for (const auto& h : obj["hypotheses"]) {
              sim::Action a;
              if (read_action(h, a)) listed.push_back(a);
            }
            // The final answer's list is authoritative over the tool-call order.
            if (listed.size() >= want) p.actions = listed;
            else for (const auto& a : listed) add_unique(p.actions, a);
          } else {
            sim::Action a;
            if (read_action(obj, a)) add_unique(p.actions, a);
          }
          if (obj.contains("choice") && obj["choice"].is_number_integer()) p.choice = obj["choice"].get<int>();
        }
      }
      if (p.error.empty() && p.actions.size() < want) {
        p.error = fmt::format("expected {} actions, found {}", want, p.actions.size());
      }
    }
    if (p.error.empty()) {
      p.actions.resize(want);
      return p;
    }
    last = p;
    if (attempt == 0) {
      ++reprompts_;
      record({{"week", week}, {"phase", phase}, {"event", "reprompt"}, {"reason", p.error}});
      const std::string said = message.is_object() && message.value("content", json()).is_string()
                                   ? message["content"].get<std::string>()
                                   : std::string();
      messages.push_back({{"role", "assistant"}, {"content", said}});
      messages.push_back({{"role", "user"},
                          {"content", fmt::format("Your reply could not be used ({}). Answer with the JSON object "
                                                  "only, listing {} hypotheses.",
                                                  p.error, want)}});
    }
  }
  return last;
}

std::vector<sim::Action> LlmStrategist::propose(const sim::MarketState& s, const ScenarioContext& ctx, int k) {
  if (k < 1) throw DomainError("propose: k must be >= 1");
  json messages = json::array({{{"role", "system"}, {"content", system_prompt(ctx, ctx.tools)}}});
  std::string user = state_prompt(s, k);
  for (const auto& f : pending_feedback_) user += "\nGuardian: " + f;
  pending_feedback_.clear();
  messages.push_back({{"role", "user"}, {"content", user}});

  Parsed p = exchange(messages, ctx.tools, static_cast<std::size_t>(k), s.week, "propose");
  if (!p.error.empty()) {
    ++fallbacks_;
    record({{"week", s.week}, {"phase", "propose"}, {"event", "fallback"}, {"reason", p.error}});
    const auto fb = fallback_.propose(s, ctx, k);
    std::vector<Candidate> bare;
    for (const auto& a : fb) bare.push_back(Candidate{a, std::nullopt, std::nullopt, 0.0});
    last_choice_ = static_cast<int>(fallback_.choose(s, ctx, bare));
    return fb;
  }
  last_choice_ = p.choice >= 0 && p.choice < k ? p.choice : 0;
  return p.actions;
}

sim::Action LlmStrategist::replace(const sim::MarketState& s, const ScenarioContext& ctx, const sim::Action& rejected,
                                   const guardian::Verdict& verdict, int round) {
  json messages = json::array({{{"role", "system"}, {"content", system_prompt(ctx, false)}},
                               {{"role", "user"},
                                {"content", fmt::format("{}\nThe hypothesis price_change={}, ad_spend={} was "
                                                        "rejected by check_business_rules: {}. Reply with one "
                                                        "replacement as JSON {{\"price_change\": ..., \"ad_spend\": "
                                                        "...}}.",
                                                        state_prompt(s, 1), rejected.price_change_pct,
                                                        rejected.ad_spend, verdict.message)}}});
  Parsed p = exchange(messages, false, 1, s.week, "replace");
  if (!p.error.empty()) {
    ++fallbacks_;
    record({{"week", s.week}, {"phase", "replace"}, {"event", "fallback"}, {"reason", p.error}});
    return fallback_.replace(s, ctx, rejected, verdict, round);
  }
  return p.actions.front();
}

std::size_t LlmStrategist::choose(const sim::MarketState& s, const ScenarioContext& ctx,
                                  const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw DomainError("choose: no candidates");
  const bool estimated = std::any_of(candidates.begin(), candidates.end(),
                                     [](const Candidate& c) { return c.estimate.has_value(); });
  if (estimated) return best_by_value(candidates);
  if (last_choice_ >= 0 && static_cast<std::size_t>(last_choice_) < candidates.size()) {
    return static_cast<std::size_t>(last_choice_);
  }
  return fallback_.choose(s, ctx, candidates);
}

void LlmStrategist::feedback(const std::string& message) { pending_feedback_.push_back(message); }

}  // namespace chimera::agents
