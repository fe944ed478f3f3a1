#include <doctest.h>

#include <cmath>
#include <map>

#include "dlt/league.hpp"
#include "league_fixtures.hpp"
#include "oracles.hpp"

using namespace dlt;

TEST_CASE("model ids") {
  const ModelId id = ModelId::parse("AEE-0001:AEE-0002");
  CHECK(id.parent == "AEE-0001");
  CHECK(id.child == "AEE-0002");
  CHECK(ModelId::parse("None:baseline").str() == "None:baseline");
  CHECK_THROWS(ModelId::parse("no-colon"));
}

TEST_CASE("win-rate table: mirrored sliding windows") {
  WinRateTable t(4);
  t.record("a", "b", 1);
  t.record("b", "a", 1);
  t.record("a", "b", 0);
  CHECK(t.stats("a", "b").wins == 1);
  CHECK(t.stats("a", "b").losses == 1);
  CHECK(t.win_rate("a", "b") == 0.5);
  CHECK(t.win_rate("b", "a") == 0.5);
  for (int i = 0; i < 4; ++i) t.record("a", "b", 1);
  CHECK(t.stats("a", "b").count() == 4);
  CHECK(t.win_rate("a", "b") == 1.0);
  CHECK(t.win_rate("a", "c", 0.3) == 0.3);
  CHECK_THROWS(t.record("a", "a", 1));
  CHECK_THROWS(t.record("a", "b", 2));
  const WinRateTable u = WinRateTable::from_json(t.to_json());
  CHECK(u.to_json() == t.to_json());
}

TEST_CASE("lineage tree: incremental leaves agree with recomputation") {
  LineageTree tree;
  tree.add("x:A-0001", "", 1);
  tree.add("A-0001:A-0002", "x:A-0001", 2);
  tree.add("x:A-0003", "", 3);
  CHECK(tree.leaves() == tree.recompute_leaves());
  CHECK(tree.leaves() == std::vector<std::string>{"A-0001:A-0002", "x:A-0003"});
  tree.mark_inherited("x:A-0003");
  CHECK(tree.leaves() == tree.recompute_leaves());
  CHECK(tree.leaves() == std::vector<std::string>{"A-0001:A-0002"});
  CHECK(LineageTree::from_json(tree.to_json()).leaves() == tree.leaves());
}

TEST_CASE("period trigger") {
  RoleConfig cfg;
  CHECK_FALSE(period_trigger(0.9, cfg.min_period_steps - 1, cfg));
  CHECK(period_trigger(0.71, cfg.min_period_steps, cfg));
  CHECK_FALSE(period_trigger(0.70, cfg.min_period_steps, cfg));
  CHECK(period_trigger(0.1, cfg.max_period_steps, cfg));
}

TEST_CASE("AEE decision: narrated examples and tie-breaks") {
  RoleConfig cfg;
  using A = PeriodDecision::Action;
  CHECK(aee_period_decision({{"0001", 1, 0.35}}, cfg) == PeriodDecision::inherit("0001", true));
  CHECK(aee_period_decision({{"0002", 2, 0.55}}, cfg).action == A::kReset);
  CHECK(aee_period_decision({{"0002", 2, 0.48}, {"0003", 3, 0.40}}, cfg) == PeriodDecision::inherit("0002", true));
  CHECK(aee_period_decision({}, cfg).action == A::kReset);
  // Window bounds are inclusive.
  CHECK(aee_period_decision({{"a", 1, 0.20}}, cfg).action == A::kInherit);
  CHECK(aee_period_decision({{"a", 1, 0.50}}, cfg).action == A::kInherit);
  CHECK(aee_period_decision({{"a", 1, 0.19}}, cfg).action == A::kReset);
  // Equal distance: the newer period wins.
  CHECK(aee_period_decision({{"old", 1, 0.40}, {"new", 2, 0.40}}, cfg).inherit_from == "new");
}

TEST_CASE("AEE replay through the league manager") {
  const auto steps = fixture::replay_aee_periods();
  REQUIRE(steps.size() == 3);
  CHECK(steps[0].action == "inherit");
  CHECK(steps[0].source == "baseline:AEE-0001");
  CHECK(steps[1].action == "reset");
  CHECK(steps[1].source == "None:baseline");
  CHECK(steps[2].action == "inherit");
  CHECK(steps[2].source == "AEE-0001:AEE-0002");
}

TEST_CASE("AEE leaves without results against the live MA are not eligible") {
  LeagueManager lm = fixture::aee_league();
  const PolicyParams p(3, 1);
  // No recorded matches: trigger at max steps, no eligible leaf, reset.
  const auto ev = lm.advance("AEE", lm.config().max_period_steps, p);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].decision.action == PeriodDecision::Action::kReset);
  CHECK(ev[0].frozen_id == "baseline:AEE-0001");
}

TEST_CASE("EE decisions") {
  RoleConfig cfg;
  CHECK(ee_best_historical({{"A", 1, 0.60}, {"B", 2, 0.30}}, true) == PeriodDecision::inherit("A", true));
  CHECK(ee_best_historical({}, true).action == PeriodDecision::Action::kReset);
  const auto now = ee_period_decision({}, {"cur", 1, 0.75}, cfg.min_period_steps, cfg);
  CHECK(now.freeze);
  CHECK(now.inherit_from == "cur");
  CHECK(ee_period_decision({}, {"cur", 1, 0.5}, cfg.min_period_steps, cfg) == PeriodDecision::keep());
}

TEST_CASE("standard reset decision") {
  RoleConfig cfg;
  CHECK(standard_reset_decision(0.75, cfg.min_period_steps, cfg) == PeriodDecision::reset(true));
  CHECK(standard_reset_decision(0.5, cfg.max_period_steps, cfg) == PeriodDecision::reset(true));
  CHECK(standard_reset_decision(0.5, cfg.min_period_steps, cfg) == PeriodDecision::keep());
}

TEST_CASE("PFSP weights") {
  const auto w = pfsp_weights({1.0, 0.5}, 2.0);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == 0.25);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(pfsp_pick({1.0, 0.5}, 2.0, rng) == 1);
  // All beaten: uniform fallback.
  const auto u = pfsp_weights({1.0, 1.0}, 2.0);
  CHECK(u[0] == u[1]);
  CHECK(u[0] > 0.0);
}

namespace {

std::map<MatchBranch, int> ma_branches(LeagueManager& lm, int draws, std::uint64_t seed) {
  Rng rng(seed);
  std::map<MatchBranch, int> counts;
  for (int i = 0; i < draws; ++i) ++counts[lm.schedule_opponent("MA", rng).branch];
  return counts;
}

LeagueManager league_with_forgotten() {
  RoleConfig cfg;
  cfg.ma_snapshot_steps = 10;
  LeagueManager lm = fixture::aee_league(cfg);
  lm.advance("MA", 10, PolicyParams(3, 1));
  const std::string snap = lm.frozen_ids().back();
  fixture::record(lm, lm.live_ma_id(), snap, 50, 5);  // 10%: forgotten
  return lm;
}

}  // namespace

TEST_CASE("MA scheduling mixture") {
  LeagueManager lm = league_with_forgotten();
  REQUIRE(lm.forgotten_main_players().size() == 1);
  const int n = 10000;
  auto c = ma_branches(lm, n, 17);
  CHECK(std::abs(c[MatchBranch::kSelfPlay] / double(n) - 0.25) < 0.02);
  CHECK(std::abs(c[MatchBranch::kPfsp] / double(n) - 0.60) < 0.02);
  CHECK(std::abs(c[MatchBranch::kForgotten] / double(n) - 0.15) < 0.02);

  LeagueManager empty = fixture::aee_league();
  auto e = ma_branches(empty, n, 18);
  CHECK(e[MatchBranch::kForgotten] == 0);
  CHECK(std::abs(e[MatchBranch::kPfsp] / double(n) - 0.75) < 0.02);
}

TEST_CASE("exploiter scheduling and fallback") {
  LeagueManager lm = league_with_forgotten();
  Rng rng(2);
  CHECK(lm.schedule_opponent("AEE", rng).branch == MatchBranch::kMainAgent);
  fixture::record(lm, lm.agent("AEE").model_id, lm.live_ma_id(), 30, 1);
  const auto m = lm.schedule_opponent("AEE", rng);
  CHECK(m.branch == MatchBranch::kMainHistory);
  CHECK(ModelId::parse(m.opponent_id).parent == "MA");
}

TEST_CASE("league state round trip") {
  LeagueManager lm = league_with_forgotten();
  lm.advance("AEE", lm.config().max_period_steps, PolicyParams(3, 1));
  const auto doc = lm.to_json();
  const LeagueManager back = LeagueManager::from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.to_json() == doc);
  auto bad = doc;
  bad["version"] = 99;
  CHECK_THROWS(LeagueManager::from_json(bad));
}

TEST_CASE("role config validation") {
  RoleConfig c;
  CHECK_NOTHROW(c.validate());
  c.min_period_steps = c.max_period_steps + 1;
  CHECK_THROWS(c.validate());
  RoleConfig m;
  m.mix_pfsp = 0.9;
  CHECK_THROWS(m.validate());
  CHECK(RoleConfig::from_json(RoleConfig{}.to_json()).to_json() == RoleConfig{}.to_json());
}
