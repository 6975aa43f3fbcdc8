#include "chimera/service/service.hpp"

#include <fmt/format.h>

#include <atomic>
#include <fstream>
#include <random>
#include <vector>

#include "httplib.h"

#include "chimera/agents/orchestrator.hpp"
#include "chimera/bench/metrics.hpp"
#include "chimera/errors.hpp"
#include "chimera/service/codec.hpp"

namespace chimera::service {

struct SessionService::Session {
  std::string id;
  json create_body;
  sim::SimConfig sim;
  guardian::ConstraintSet cs;
  double trust_multiplier = 0.0;
  int weeks = 0;
  sim::MarketState state;
  agents::EpisodeLog history;
  std::atomic<std::int64_t> touched{0};
  std::shared_mutex mu;
  std::ofstream log;
};

namespace {

Reply error(int status, std::string_view code, std::string message) {
  return Reply{status, {{"code", code}, {"message", std::move(message)}}};
}

Reply not_found(const std::string& id) { return error(404, "not_found", fmt::format("no session '{}'", id)); }

std::int64_t ticks(std::chrono::steady_clock::time_point t) { return t.time_since_epoch().count(); }

}  // namespace

std::string random_session_id() {
  std::random_device rd;
  std::string id;
  for (int i = 0; i < 4; ++i) id += fmt::format("{:08x}", rd());
  return id;
}

SessionService::SessionService(ServiceConfig cfg, std::shared_ptr<const causal::CausalEngine> engine, Clock clock)
    : cfg_(std::move(cfg)), engine_(std::move(engine)), clock_(std::move(clock)) {
  if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
  cfg_.sim.validate();
  cfg_.guardian.validate();
  if (!cfg_.persistence_dir.empty()) std::filesystem::create_directories(cfg_.persistence_dir);
}

SessionService::~SessionService() = default;

std::shared_ptr<SessionService::Session> SessionService::build(const std::string& id, const json& body) {
  if (!body.is_object()) throw ConfigError("request body must be a JSON object");
  for (const auto& [key, value] : body.items()) {
    if (key != "sim" && key != "guardian" && key != "weeks" && key != "trust_multiplier") {
      throw ConfigError(fmt::format("unknown field '{}'", key));
    }
  }
  auto s = std::make_shared<Session>();
  s->id = id;
  s->create_body = body;
  s->sim = cfg_.sim;
  s->cs = cfg_.guardian;
  s->trust_multiplier = cfg_.trust_multiplier;
  s->weeks = cfg_.default_weeks;
  apply_overrides(body.value("sim", json()), s->sim, "sim");
  apply_overrides(body.value("guardian", json()), s->cs, "guardian");
  if (body.contains("weeks")) {
    if (!body["weeks"].is_number_integer() || body["weeks"].get<int>() < 1) {
      throw ConfigError("weeks must be a positive integer");
    }
    s->weeks = body["weeks"].get<int>();
  }
  if (body.contains("trust_multiplier")) {
    const auto& m = body["trust_multiplier"];
    if (!m.is_number() || !(m.get<double>() >= 0.0)) throw ConfigError("trust_multiplier must be a number >= 0");
    s->trust_multiplier = m.get<double>();
  }
  s->sim.validate();
  s->cs.validate();
  s->state = sim::initial_state(s->sim);
  s->history.architecture = agents::ArchitectureKind::LlmGuardian;
  s->history.scenario = "interactive";
  s->history.seed = s->sim.seed;
  s->history.trust_multiplier = s->trust_multiplier;
  s->history.initial_trust = s->sim.initial_trust;
  s->touched = ticks(clock_());
  return s;
}

void SessionService::persist(Session& s, const json& entry) {
  if (cfg_.persistence_dir.empty()) return;
  if (!s.log.is_open()) {
    s.log.open(cfg_.persistence_dir / (s.id + ".jsonl"), std::ios::app);
    if (!s.log) throw std::runtime_error(fmt::format("cannot open session log for {}", s.id));
  }
  s.log << entry.dump() << '\n';
  s.log.flush();
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) {
  std::shared_lock lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  it->second->touched = ticks(clock_());
  return it->second;
}

Reply SessionService::create(const json& body_in) {
  const json body = body_in.is_null() ? json::object() : body_in;
  std::shared_ptr<Session> s;
  try {
    s = build(random_session_id(), body);
  } catch (const ConfigError& e) {
    return error(400, "invalid_config", e.what());
  } catch (const DomainError& e) {
    return error(400, "invalid_config", e.what());
  }
  persist(*s, {{"type", "create"}, {"id", s->id}, {"body", body}});
  json reply = {{"session_id", s->id},
                {"state", to_json(s->state)},
                {"weeks", s->weeks},
                {"trust_multiplier", s->trust_multiplier},
                {"engine", engine_ != nullptr}};
  {
    std::unique_lock lock(mu_);
    sessions_[s->id] = s;
  }
  return Reply{201, reply};
}

Reply SessionService::validate(const std::string& id, const json& body) {
  auto s = find(id);
  if (!s) return not_found(id);
  sim::Action a;
  try {
    a = action_from_json(body);
  } catch (const ConfigError& e) {
    return error(400, "bad_request", e.what());
  }
  std::shared_lock lock(s->mu);
  json out = to_json(guardian::validate_action(a, s->state, s->cs));
  out["repair"] = to_json(guardian::repair_action(a, s->state, s->cs));
  out["week"] = s->state.week;
  return Reply{200, out};
}

Reply SessionService::estimate(const std::string& id, const json& body) {
  auto s = find(id);
  if (!s) return not_found(id);
  if (!engine_) return error(409, "no_engine", "no fitted engine is loaded; start the service with an engine artifact");
  sim::Action a;
  try {
    a = action_from_json(body);
  } catch (const ConfigError& e) {
    return error(400, "bad_request", e.what());
  }
  std::shared_lock lock(s->mu);
  try {
    const causal::CausalEstimate e = engine_->estimate(a.price_change_pct, a.ad_spend, s->state);
    json out = to_json(e);
    out["long_term_value"] = causal::long_term_value(e, s->trust_multiplier);
    out["trust_multiplier"] = s->trust_multiplier;
    out["week"] = s->state.week;
    return Reply{200, out};
  } catch (const DomainError& e) {
    return error(400, "bad_request", e.what());
  }
}

Reply SessionService::do_act(Session& s, const json& body, bool log) {
  if (!body.is_object() || !body.contains("week") || !body["week"].is_number_integer()) {
    return error(400, "bad_request", "act needs the integer 'week' it is meant for");
  }
  std::string mode = "repaired";
  if (body.contains("mode")) {
    if (!body["mode"].is_string()) return error(400, "bad_request", "mode must be 'raw' or 'repaired'");
    mode = body["mode"].get<std::string>();
  }
  if (mode != "raw" && mode != "repaired") return error(400, "bad_request", "mode must be 'raw' or 'repaired'");
  sim::Action raw;
  try {
    raw = action_from_json(body);
  } catch (const ConfigError& e) {
    return error(400, "bad_request", e.what());
  }

  std::unique_lock lock(s.mu);
  const int week = body["week"].get<int>();
  if (week != s.state.week) {
    return error(409, "conflict", fmt::format("week {} is not open; the session is at week {}", week, s.state.week));
  }
  if (static_cast<int>(s.history.weeks.size()) >= s.weeks) {
    return error(409, "finished", fmt::format("the session's {} weeks have been played", s.weeks));
  }

  agents::WeekRecord rec;
  rec.week = s.state.week;
  rec.before = s.state;
  rec.raw = raw;
  if (mode == "raw") {
    rec.executed = raw;
    rec.catastrophic = agents::clamp_to_domain(rec.executed, s.state, 0.01);
  } else {
    guardian::Repair r = guardian::repair_action(raw, s.state, s.cs);
    rec.executed = r.safe_action;
    rec.repairs = std::move(r.repairs);
  }
  rec.violations = guardian::validate_action(rec.executed, s.state, s.cs).violations;
  const sim::StepResult step = sim::step(s.state, rec.executed, s.sim);
  rec.after = step.next;
  rec.demand = step.outcome.demand;
  rec.profit = step.outcome.profit;
  s.state = step.next;
  s.history.weeks.push_back(rec);
  if (log) persist(s, {{"type", "act"}, {"body", body}});

  json outcome = {{"price", step.outcome.price},     {"ad_spend", step.outcome.ad_spend},
                  {"demand", step.outcome.demand},   {"revenue", step.outcome.revenue},
                  {"profit", step.outcome.profit},   {"trust_after", step.outcome.trust_after}};
  return Reply{200,
               {{"week", s.state.week}, {"mode", mode}, {"outcome", outcome}, {"record", to_json(rec)},
                {"state", to_json(s.state)}}};
}

Reply SessionService::act(const std::string& id, const json& body) {
  auto s = find(id);
  if (!s) return not_found(id);
  return do_act(*s, body, true);
}

Reply SessionService::history(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::shared_lock lock(s->mu);
  json weeks = json::array();
  for (const auto& w : s->history.weeks) weeks.push_back(to_json(w));
  return Reply{200, {{"session_id", id}, {"state", to_json(s->state)}, {"weeks", weeks}}};
}

Reply SessionService::metrics(const std::string& id) {
  auto s = find(id);
  if (!s) return not_found(id);
  std::shared_lock lock(s->mu);
  if (s->history.weeks.empty()) return Reply{200, {{"session_id", id}, {"metrics", nullptr}}};
  return Reply{200, {{"session_id", id}, {"metrics", to_json(bench::compute_metrics(s->history))}}};
}

std::size_t SessionService::replay() {
  if (cfg_.persistence_dir.empty()) return 0;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(cfg_.persistence_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t restored = 0;
  for (const auto& path : files) {
    std::ifstream in(path);
    std::string line;
    std::shared_ptr<Session> s;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json entry = json::parse(line, nullptr, false);
      if (entry.is_discarded()) throw ConfigError(fmt::format("{}:{}: invalid JSON", path.string(), line_no));
      const std::string type = entry.value("type", "");
      if (type == "create" && !s) {
        s = build(entry.at("id").get<std::string>(), entry.at("body"));
      } else if (type == "act" && s) {
        const Reply r = do_act(*s, entry.at("body"), false);
        if (r.status != 200) {
          throw ConfigError(fmt::format("{}:{}: replayed act failed: {}", path.string(), line_no, r.body.dump()));
        }
      } else {
        throw ConfigError(fmt::format("{}:{}: unexpected entry", path.string(), line_no));
      }
    }
    if (!s) continue;
    s->log.open(path, std::ios::app);
    std::unique_lock lock(mu_);
    sessions_[s->id] = s;
    ++restored;
  }
  return restored;
}

std::size_t SessionService::expire() {
  const std::int64_t now = ticks(clock_());
  const std::int64_t ttl = std::chrono::duration_cast<std::chrono::steady_clock::duration>(cfg_.ttl).count();
  std::unique_lock lock(mu_);
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->touched.load() > ttl) {
      if (!cfg_.persistence_dir.empty()) {
        std::error_code ec;
        std::filesystem::remove(cfg_.persistence_dir / (it->first + ".jsonl"), ec);
      }
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t SessionService::session_count() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

void SessionService::mount(httplib::Server& server) {
  server.set_default_headers({{"Access-Control-Allow-Origin", cfg_.cors_origin},
                              {"Access-Control-Allow-Headers", "Content-Type, Authorization"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    expire();
    if (cfg_.token.empty() || req.method == "OPTIONS") return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + cfg_.token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    res.status = 401;
    res.set_content(json{{"code", "unauthorized"}, {"message", "missing or wrong bearer token"}}.dump(),
                    "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });

  const auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  const auto parse = [send](const httplib::Request& req, httplib::Response& res, json& out) {
    if (req.body.empty()) {
      out = json::object();
      return true;
    }
    out = json::parse(req.body, nullptr, false);
    if (out.is_discarded()) {
      send(res, error(400, "bad_request", "request body is not valid JSON"));
      return false;
    }
    return true;
  };

  server.Post("/sessions", [this, send, parse](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (parse(req, res, body)) send(res, create(body));
  });
  const auto post = [&](const char* pattern, Reply (SessionService::*fn)(const std::string&, const json&)) {
    server.Post(pattern, [this, send, parse, fn](const httplib::Request& req, httplib::Response& res) {
      json body;
      if (parse(req, res, body)) send(res, (this->*fn)(req.matches[1], body));
    });
  };
  post(R"(/sessions/([0-9a-zA-Z]+)/validate)", &SessionService::validate);
  post(R"(/sessions/([0-9a-zA-Z]+)/estimate)", &SessionService::estimate);
  post(R"(/sessions/([0-9a-zA-Z]+)/act)", &SessionService::act);
  server.Get(R"(/sessions/([0-9a-zA-Z]+)/history)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, history(req.matches[1]));
  });
  server.Get(R"(/sessions/([0-9a-zA-Z]+)/metrics)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, metrics(req.matches[1]));
  });
  server.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send(res, error(res.status, res.status == 404 ? "not_found" : "error", "no such endpoint"));
  });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, error(500, "internal", what));
  });
}

void serve(SessionService& service) {
  httplib::Server server;
  service.mount(server);
  const auto& cfg = service.config();
  fmt::print("listening on http://{}:{}\n", cfg.bind, cfg.port);
  std::fflush(stdout);
  if (!server.listen(cfg.bind, cfg.port)) {
    throw std::runtime_error(fmt::format("cannot listen on {}:{}", cfg.bind, cfg.port));
  }
}

}  // namespace chimera::service
