#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "chimera/agents/llm_strategist.hpp"
#include "chimera/agents/orchestrator.hpp"
#include "chimera/errors.hpp"

// after Eigen: glibc's resolv.h defines _res
#include "httplib.h"

using namespace chimera;
using namespace chimera::agents;
using nlohmann::json;

namespace {

class CountingValidator : public ActionValidator {
 public:
  explicit CountingValidator(guardian::ConstraintSet cs) : inner_(cs) {}
  guardian::Verdict validate(const sim::Action& a, const sim::MarketState& s) override {
    ++validates;
    return inner_.validate(a, s);
  }
  guardian::Repair repair(const sim::Action& a, const sim::MarketState& s) override {
    ++repairs;
    return inner_.repair(a, s);
  }
  int validates = 0;
  int repairs = 0;

 private:
  GuardianValidator inner_;
};

// Runs the simulator one step each way with the noise switched off.
class OracleEstimator : public ImpactEstimator {
 public:
  explicit OracleEstimator(sim::SimConfig cfg) : cfg_(cfg) { cfg_.noise_sigma = 0.0; }
  causal::CausalEstimate estimate(const sim::Action& a, const sim::MarketState& s) override {
    ++estimates;
    const auto moved = sim::step(s, a, cfg_);
    const auto held = sim::step(s, sim::hold_action(s), cfg_);
    return {moved.outcome.profit - held.outcome.profit, moved.next.trust - held.next.trust, 0.9, 0.9};
  }
  void observe(int, const std::vector<sim::MarketState>& states, const std::vector<sim::Action>& actions) override {
    ++observes;
    EXPECT_EQ(states.size(), actions.size() + 1);
  }
  int estimates = 0;
  int observes = 0;

 private:
  sim::SimConfig cfg_;
};

struct Probed {
  EpisodeLog log;
  int validates = 0, repairs = 0, estimates = 0, observes = 0;
};

Probed run(ArchitectureKind kind, Bias bias, int weeks = 52) {
  const sim::SimConfig sim;
  const guardian::ConstraintSet cs;
  CountingValidator v(cs);
  OracleEstimator e(sim);
  ScriptedStrategist st(bias, 42);
  RunOptions opt;
  opt.weeks = weeks;
  Probed r;
  r.log = run_architecture(kind, st, sim, cs, &v, &e, scenario(bias), opt);
  r.validates = v.validates;
  r.repairs = v.repairs;
  r.estimates = e.estimates;
  r.observes = e.observes;
  return r;
}

int violation_weeks(const EpisodeLog& log) {
  int n = 0;
  for (const auto& w : log.weeks) n += !w.violations.empty();
  return n;
}

json load_fixture(const char* name) {
  std::ifstream in(std::string(CHIMERA_TEST_DATA) + "/fixtures/" + name);
  return json::parse(in);
}

json chat_reply(const std::string& content) {
  return {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
}

}  // namespace

TEST(Scenario, ObjectiveTextMatchesBias) {
  EXPECT_EQ(objective_text(Bias::Neutral), "Maximize long-term sustainable profit while maintaining brand trust.");
  for (Bias b : {Bias::Neutral, Bias::Volume, Bias::Margin}) {
    const ScenarioContext ctx = scenario(b, 50000.0);
    EXPECT_EQ(ctx.bias, b);
    EXPECT_EQ(ctx.objective_text, objective_text(b));
    EXPECT_EQ(ctx.trust_multiplier, 50000.0);
    EXPECT_EQ(bias_from_string(to_string(b)), b);
  }
  EXPECT_EQ(bias_from_string("balanced"), Bias::Neutral);
  EXPECT_THROW(bias_from_string("greedy"), ConfigError);
  for (auto k : kAllArchitectures) EXPECT_EQ(architecture_from_string(to_string(k)), k);
  EXPECT_THROW(architecture_from_string("llm"), ConfigError);
}

TEST(ScriptedStrategist, VolumeDiscountsDeeply) {
  ScriptedStrategist st(Bias::Volume, 42);
  const sim::MarketState s{0, 100.0, 0.7, 0.0, 0.0};
  const auto props = st.propose(s, scenario(Bias::Volume), 3);
  ASSERT_EQ(props.size(), 3u);
  double lowest = 0.0;
  for (const auto& a : props) lowest = std::min(lowest, a.price_change_pct);
  EXPECT_LE(lowest, -40.0);
}

TEST(ScriptedStrategist, MarginRaisesPastOneForty) {
  ScriptedStrategist st(Bias::Margin, 42);
  const sim::MarketState s{0, 100.0, 0.7, 0.0, 0.0};
  double highest = 0.0;
  for (const auto& a : st.propose(s, scenario(Bias::Margin), 3)) {
    highest = std::max(highest, sim::apply_price_change(s.price, a.price_change_pct));
  }
  EXPECT_GE(highest, 140.0);
}

TEST(ScriptedStrategist, ProposesExactlyKAndIsDeterministic) {
  const sim::MarketState s{7, 88.0, 0.66, 1500.0, 1e5};
  for (Bias b : {Bias::Neutral, Bias::Volume, Bias::Margin}) {
    for (int k : {1, 3, 5}) {
      ScriptedStrategist a(b, 7), c(b, 7);
      const auto pa = a.propose(s, scenario(b), k);
      EXPECT_EQ(pa.size(), static_cast<std::size_t>(k));
      EXPECT_EQ(pa, c.propose(s, scenario(b), k));
    }
  }
  ScriptedStrategist st(Bias::Neutral, 1);
  EXPECT_THROW(st.propose(s, scenario(Bias::Neutral), 0), DomainError);
}

TEST(BestByValue, TieBreaks) {
  guardian::Verdict clean{true, {}, ""};
  guardian::Verdict dirty{false, {guardian::Violation{guardian::RuleId::PriceFloor, 0, 0}}, ""};
  causal::CausalEstimate e{};
  std::vector<Candidate> c = {{{10.0, 0}, clean, e, 5.0}, {{-4.0, 0}, clean, e, 9.0}, {{2.0, 0}, clean, e, 9.0}};
  EXPECT_EQ(best_by_value(c), 2u);  // same value, smaller |price change|
  c[2].verdict = dirty;
  EXPECT_EQ(best_by_value(c), 1u);  // fewer violations first
  c.push_back({{0.0, 0}, clean, std::nullopt, 100.0});
  EXPECT_EQ(best_by_value(c), 1u);  // unestimated ranks last
}

TEST(Orchestrator, LlmOnlyTouchesNeitherGuardianNorEngine) {
  const Probed r = run(ArchitectureKind::LlmOnly, Bias::Volume);
  EXPECT_EQ(r.validates + r.repairs, 0);
  EXPECT_EQ(r.estimates + r.observes, 0);
  EXPECT_EQ(r.log.weeks.size(), 52u);
}

TEST(Orchestrator, GuardianRunNeverTouchesEngine) {
  const Probed r = run(ArchitectureKind::LlmGuardian, Bias::Volume);
  EXPECT_GT(r.repairs, 0);
  EXPECT_EQ(r.estimates + r.observes, 0);
}

TEST(Orchestrator, LlmOnlyVolumeViolates) {
  const Probed r = run(ArchitectureKind::LlmOnly, Bias::Volume);
  EXPECT_GT(violation_weeks(r.log), 0);
  for (const auto& w : r.log.weeks) EXPECT_TRUE(w.repairs.empty());
}

TEST(Orchestrator, GuardianVolumeRepairsWithoutViolations) {
  const Probed r = run(ArchitectureKind::LlmGuardian, Bias::Volume);
  EXPECT_EQ(violation_weeks(r.log), 0);
  int repaired = 0;
  for (const auto& w : r.log.weeks) repaired += !w.repairs.empty();
  EXPECT_GT(repaired, 0);
}

TEST(Orchestrator, ChimeraInvariants) {
  const guardian::ConstraintSet cs;
  for (Bias b : {Bias::Neutral, Bias::Volume, Bias::Margin}) {
    const Probed r = run(ArchitectureKind::Chimera, b);
    EXPECT_EQ(r.observes, 52);
    for (const auto& w : r.log.weeks) {
      EXPECT_TRUE(guardian::validate_action(w.executed, w.before, cs).is_valid) << "week " << w.week;
      EXPECT_TRUE(w.violations.empty());
      ASSERT_EQ(w.candidates.size(), 3u);
      double best = -INFINITY;
      bool found = false;
      for (const auto& c : w.candidates) {
        EXPECT_TRUE(guardian::validate_action(c.action, w.before, cs).is_valid);
        EXPECT_LE(c.replacements, 3);
        EXPECT_DOUBLE_EQ(c.long_term_value, causal::long_term_value(c.estimate, 150000.0));
        best = std::max(best, c.long_term_value);
        found = found || c.action == w.executed;
      }
      EXPECT_TRUE(found);
      for (const auto& c : w.candidates) {
        if (c.action == w.executed) {
          EXPECT_EQ(c.long_term_value, best);
        }
      }
    }
  }
}

TEST(Orchestrator, ReplacesBeforeRepairing) {
  const Probed r = run(ArchitectureKind::Chimera, Bias::Volume, 10);
  int replaced = 0;
  for (const auto& w : r.log.weeks) {
    for (const auto& c : w.candidates) replaced += c.replacements > 0;
  }
  EXPECT_GT(replaced, 0);
}

TEST(Orchestrator, MissingComponentsAreConfigErrors) {
  const sim::SimConfig sim;
  const guardian::ConstraintSet cs;
  ScriptedStrategist st(Bias::Neutral, 1);
  CountingValidator v(cs);
  EXPECT_THROW(run_architecture(ArchitectureKind::LlmGuardian, st, sim, cs, nullptr, nullptr, scenario(Bias::Neutral),
                                RunOptions{}),
               ConfigError);
  EXPECT_THROW(
      run_architecture(ArchitectureKind::Chimera, st, sim, cs, &v, nullptr, scenario(Bias::Neutral), RunOptions{}),
      ConfigError);
}

TEST(Orchestrator, ClampToDomain) {
  const sim::MarketState s{0, 100.0, 0.7, 0.0, 0.0};
  sim::Action a{-150.0, -5.0};
  EXPECT_TRUE(clamp_to_domain(a, s, 0.01));
  EXPECT_GT(sim::apply_price_change(s.price, a.price_change_pct), 0.0);
  EXPECT_NEAR(sim::apply_price_change(s.price, a.price_change_pct), 0.01, 1e-9);
  EXPECT_EQ(a.ad_spend, 0.0);
  sim::Action nan{std::nan(""), 100.0};
  EXPECT_TRUE(clamp_to_domain(nan, s, 0.01));
  EXPECT_EQ(nan.price_change_pct, 0.0);
  sim::Action fine{-30.0, 800.0};
  EXPECT_FALSE(clamp_to_domain(fine, s, 0.01));
}

TEST(Orchestrator, LlmOnlyRecordsCatastrophicWeeks) {
  class Wrecker : public ScriptedStrategist {
   public:
    Wrecker() : ScriptedStrategist(Bias::Volume, 1) {}
    std::vector<sim::Action> propose(const sim::MarketState&, const ScenarioContext&, int k) override {
      return std::vector<sim::Action>(static_cast<std::size_t>(k), sim::Action{-120.0, 0.0});
    }
  } st;
  RunOptions opt;
  opt.weeks = 3;
  const auto log = run_architecture(ArchitectureKind::LlmOnly, st, sim::SimConfig{}, guardian::ConstraintSet{}, nullptr,
                                    nullptr, scenario(Bias::Volume), opt);
  ASSERT_EQ(log.weeks.size(), 3u);
  for (const auto& w : log.weeks) {
    EXPECT_TRUE(w.catastrophic);
    EXPECT_GT(w.after.price, 0.0);
  }
}

TEST(Orchestrator, SameSeedSameLog) {
  const Probed a = run(ArchitectureKind::Chimera, Bias::Margin, 20);
  const Probed b = run(ArchitectureKind::Chimera, Bias::Margin, 20);
  ASSERT_EQ(a.log.weeks.size(), b.log.weeks.size());
  for (std::size_t i = 0; i < a.log.weeks.size(); ++i) {
    EXPECT_EQ(a.log.weeks[i].executed, b.log.weeks[i].executed);
    EXPECT_EQ(a.log.weeks[i].profit, b.log.weeks[i].profit);
  }
}

TEST(LlmStrategist, MissingEnvironmentNamesVariable) {
  ::unsetenv(kLlmUrlEnv);
  ::unsetenv(kLlmKeyEnv);
  try {
    LlmConfig::from_env();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(kLlmUrlEnv), std::string::npos);
  }
  ::setenv(kLlmUrlEnv, "http://127.0.0.1:1/v1/chat/completions", 1);
  try {
    LlmConfig::from_env();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(kLlmKeyEnv), std::string::npos);
  }
  ::setenv(kLlmKeyEnv, "k", 1);
  EXPECT_EQ(LlmConfig::from_env().model, "gpt-4o");
  ::unsetenv(kLlmUrlEnv);
  ::unsetenv(kLlmKeyEnv);
}

TEST(LlmStrategist, FixtureDrivesChimeraRun) {
  std::vector<json> responses = load_fixture("llm_week0.json").get<std::vector<json>>();
  auto transport = std::make_unique<ReplayTransport>(responses);
  auto* probe = transport.get();
  const auto transcript = std::filesystem::temp_directory_path() / "chimera_llm_fixture.jsonl";
  std::filesystem::remove(transcript);
  LlmConfig cfg;
  cfg.transcript = transcript;
  LlmStrategist st(cfg, std::move(transport), 42);

  const sim::SimConfig sim;
  const guardian::ConstraintSet cs;
  GuardianValidator v(cs);
  OracleEstimator e(sim);
  RunOptions opt;
  opt.weeks = 2;
  const auto log = run_architecture(ArchitectureKind::Chimera, st, sim, cs, &v, &e, scenario(Bias::Neutral), opt);

  EXPECT_EQ(st.fallbacks(), 0);
  EXPECT_EQ(st.reprompts(), 0);
  ASSERT_EQ(probe->requests().size(), 2u);
  const json& req = probe->requests().front();
  EXPECT_EQ(req.at("temperature"), 0.9);
  EXPECT_EQ(req.at("max_tokens"), 1000);
  EXPECT_EQ(req.at("model"), "gpt-4o");
  ASSERT_TRUE(req.contains("tools"));
  EXPECT_EQ(req["tools"][0]["function"]["name"], "check_business_rules");
  EXPECT_EQ(req["tools"][1]["function"]["name"], "estimate_profit_impact");
  const std::string sys = req["messages"][0]["content"];
  for (const char* phase : {"Phase 1", "Phase 2", "Phase 3", "Phase 4"}) EXPECT_NE(sys.find(phase), std::string::npos);
  EXPECT_NE(sys.find(objective_text(Bias::Neutral)), std::string::npos);

  ASSERT_EQ(log.weeks.size(), 2u);
  for (const auto& w : log.weeks) {
    ASSERT_EQ(w.candidates.size(), 3u);
    EXPECT_EQ(w.candidates[0].action, (sim::Action{5.0, 500.0}));
    EXPECT_EQ(w.candidates[1].action, (sim::Action{-10.0, 1000.0}));
    EXPECT_EQ(w.candidates[2].action, (sim::Action{15.0, 0.0}));
  }
  std::ifstream in(transcript);
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 2);
}

TEST(LlmStrategist, GuardianArchitectureSendsNoToolsAndHonoursChoice) {
  auto transport = std::make_unique<ReplayTransport>(std::vector<json>{chat_reply(
      R"({"hypotheses": [{"price_change": 0, "ad_spend": 0}, {"price_change": 8, "ad_spend": 300}, {"price_change": -3, "ad_spend": 0}], "choice": 1})")});
  auto* probe = transport.get();
  LlmStrategist st(LlmConfig{}, std::move(transport), 1);
  RunOptions opt;
  opt.weeks = 1;
  GuardianValidator v{guardian::ConstraintSet{}};
  const auto log = run_architecture(ArchitectureKind::LlmGuardian, st, sim::SimConfig{}, guardian::ConstraintSet{},
                                    &v, nullptr, scenario(Bias::Margin), opt);
  EXPECT_FALSE(probe->requests().front().contains("tools"));
  EXPECT_EQ(log.weeks.front().raw, (sim::Action{8.0, 300.0}));
}

TEST(LlmStrategist, MalformedReplyIsRepromptedThenFallsBack) {
  // first reply unusable, re-prompt succeeds
  {
    auto transport = std::make_unique<ReplayTransport>(std::vector<json>{
        chat_reply("I think we should lower prices."),
        chat_reply(R"({"hypotheses": [{"price_change": 1, "ad_spend": 0}, {"price_change": 2, "ad_spend": 0}, {"price_change": 3, "ad_spend": 0}]})")});
    auto* probe = transport.get();
    LlmStrategist st(LlmConfig{}, std::move(transport), 1);
    const auto got = st.propose(sim::MarketState{}, scenario(Bias::Neutral), 3);
    EXPECT_EQ(st.reprompts(), 1);
    EXPECT_EQ(st.fallbacks(), 0);
    EXPECT_EQ(got[2], (sim::Action{3.0, 0.0}));
    EXPECT_EQ(probe->requests()[1]["messages"].size(), 4u);
  }
  // both replies unusable -> scripted balanced strategist
  {
    auto transport = std::make_unique<ReplayTransport>(
        std::vector<json>{chat_reply("no"), json{{"choices", json::array({{{"message", {{"tool_calls", json::array({{{"function", {{"name", "check_business_rules"}, {"arguments", "{oops"}}}}})}}}}})}}});
    LlmStrategist st(LlmConfig{}, std::move(transport), 9);
    const sim::MarketState s{};
    const auto got = st.propose(s, scenario(Bias::Neutral), 3);
    EXPECT_EQ(st.reprompts(), 1);
    EXPECT_EQ(st.fallbacks(), 1);
    ScriptedStrategist ref(Bias::Neutral, 9);
    EXPECT_EQ(got, ref.propose(s, scenario(Bias::Neutral), 3));
  }
  // transport failure -> fallback without a re-prompt
  {
    LlmStrategist st(LlmConfig{}, std::make_unique<ReplayTransport>(std::vector<json>{}), 9);
    EXPECT_EQ(st.propose(sim::MarketState{}, scenario(Bias::Neutral), 3).size(), 3u);
    EXPECT_EQ(st.fallbacks(), 1);
    EXPECT_EQ(st.reprompts(), 0);
  }
}

TEST(LlmStrategist, HttpTransportAgainstLocalServer) {
  httplib::Server server;
  std::string auth;
  json seen;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    seen = json::parse(req.body);
    res.set_content(
        chat_reply(R"({"hypotheses": [{"price_change": 4, "ad_spend": 100}, {"price_change": 0, "ad_spend": 0}, {"price_change": -4, "ad_spend": 0}]})")
            .dump(),
        "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LlmConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.api_key = "secret";
  cfg.timeout_seconds = 5;
  LlmStrategist st(cfg, std::make_unique<HttpTransport>(cfg), 1);
  const auto got = st.propose(sim::MarketState{}, scenario(Bias::Neutral), 3);
  EXPECT_EQ(auth, "Bearer secret");
  EXPECT_EQ(seen.at("temperature"), 0.9);
  EXPECT_EQ(got.front(), (sim::Action{4.0, 100.0}));
  EXPECT_EQ(st.fallbacks(), 0);

  LlmConfig bad = cfg;
  bad.url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
  HttpTransport broken(bad);
  EXPECT_THROW(broken.send(json::object()), std::runtime_error);

  server.stop();
  t.join();
}
