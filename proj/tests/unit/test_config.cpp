#include <gtest/gtest.h>

#include <sstream>

#include "chimera/config.hpp"
#include "chimera/guardian/guardian.hpp"
#include "chimera/sim/market.hpp"

using namespace chimera;

TEST(Config, ParsesKeyValueWithComments) {
  std::istringstream in("# market\nsim.base_demand = 900 # override\n\n  sim.trust_mode=threshold\nguardian.margin_basis = on_cost\n");
  const auto file = config::KeyValueFile::parse(in);
  sim::SimConfig cfg;
  config::apply(file, "sim", cfg);
  EXPECT_EQ(cfg.base_demand, 900.0);
  EXPECT_EQ(cfg.trust_mode, sim::TrustMode::Threshold);
  guardian::ConstraintSet cs;
  config::apply(file, "guardian", cs);
  EXPECT_EQ(cs.margin_basis, guardian::MarginBasis::OnCost);
}

TEST(Config, UnknownKeyAndBadValueAreErrors) {
  std::istringstream unknown("sim.no_such_field = 1\n");
  sim::SimConfig cfg;
  EXPECT_THROW(config::apply(config::KeyValueFile::parse(unknown), "sim", cfg), ConfigError);
  std::istringstream bad("sim.base_demand = lots\n");
  EXPECT_THROW(config::apply(config::KeyValueFile::parse(bad), "sim", cfg), ConfigError);
  std::istringstream no_eq("sim.base_demand 800\n");
  EXPECT_THROW(config::KeyValueFile::parse(no_eq), ConfigError);
}

TEST(Config, DumpRoundTripsEveryField) {
  sim::SimConfig cfg;
  cfg.base_demand = 812.5;
  cfg.seed = 7;
  cfg.trust_mode = sim::TrustMode::Threshold;
  guardian::ConstraintSet cs;
  cs.max_price = 140.0;
  auto entries = config::dump("sim", cfg);
  const auto more = config::dump("guardian", cs);
  entries.insert(entries.end(), more.begin(), more.end());
  std::istringstream in(config::to_text(entries));
  const auto file = config::KeyValueFile::parse(in);
  sim::SimConfig back;
  guardian::ConstraintSet cs_back;
  config::apply(file, "sim", back);
  config::apply(file, "guardian", cs_back);
  EXPECT_EQ(config::dump("sim", back), config::dump("sim", cfg));
  EXPECT_EQ(cs_back.max_price, 140.0);
  EXPECT_EQ(config::field_names<sim::SimConfig>().size(), config::dump("sim", cfg).size());
}

TEST(Config, ValidationRejectsBrokenInvariants) {
  sim::SimConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.trust_min = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.season_period = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  guardian::ConstraintSet cs;
  EXPECT_NO_THROW(cs.validate());
  cs.max_price = 55.0;
  EXPECT_THROW(cs.validate(), ConfigError);
}
