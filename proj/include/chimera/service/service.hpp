#pragma once

// Session service: each session owns one live market that a client steps
// week by week.
//
//   POST /sessions                  {"sim": {...}, "guardian": {...}, "weeks": N, "trust_multiplier": M}
//   POST /sessions/{id}/validate    action                      -> verdict + repair
//   POST /sessions/{id}/estimate    action                      -> estimate + long_term_value
//   POST /sessions/{id}/act         action + "week" + "mode"    -> outcome + new state
//   GET  /sessions/{id}/history
//   GET  /sessions/{id}/metrics
//
// An action is {"price_change": pct, "ad_spend": usd}. /act must name the
// week it is meant for; a request for any other week gets 409, which is how
// a second submission for the same week is rejected. Errors are
// {"code": ..., "message": ...}.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "json.hpp"

#include "chimera/agents/episode_log.hpp"
#include "chimera/causal/engine.hpp"
#include "chimera/guardian/guardian.hpp"
#include "chimera/sim/market.hpp"

namespace httplib {
class Server;
}

namespace chimera::service {

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::filesystem::path engine_artifact;
  std::chrono::seconds ttl{24 * 3600};
  /// Append-only JSON-lines log per session; empty keeps sessions in memory only.
  std::filesystem::path persistence_dir;
  /// When non-empty every request must carry "Authorization: Bearer <token>".
  std::string token;
  std::string cors_origin = "*";
  sim::SimConfig sim;
  guardian::ConstraintSet guardian;
  double trust_multiplier = 150000.0;
  int default_weeks = 52;
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

class SessionService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  SessionService(ServiceConfig cfg, std::shared_ptr<const causal::CausalEngine> engine, Clock clock = {});
  ~SessionService();

  Reply create(const nlohmann::json& body);
  Reply validate(const std::string& id, const nlohmann::json& body);
  Reply estimate(const std::string& id, const nlohmann::json& body);
  Reply act(const std::string& id, const nlohmann::json& body);
  Reply history(const std::string& id);
  Reply metrics(const std::string& id);

  /// Rebuilds sessions from the persistence directory. Returns how many.
  std::size_t replay();
  /// Drops sessions idle for longer than the TTL. Returns how many.
  std::size_t expire();
  std::size_t session_count() const;

  /// Installs the routes, CORS headers and token check on `server`.
  void mount(httplib::Server& server);

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id);
  std::shared_ptr<Session> build(const std::string& id, const nlohmann::json& body);
  void persist(Session& s, const nlohmann::json& entry);
  Reply do_act(Session& s, const nlohmann::json& body, bool log);

  ServiceConfig cfg_;
  std::shared_ptr<const causal::CausalEngine> engine_;
  Clock clock_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Blocks serving HTTP until the process is stopped.
void serve(SessionService& service);

/// 32 hex characters from the OS entropy source.
std::string random_session_id();

}  // namespace chimera::service
