#pragma once

#include <string>

#include "dlt/league.hpp"

namespace fixture {

// A league with the initial model "None:baseline", the MA and one AEE.
inline dlt::LeagueManager aee_league(const dlt::RoleConfig& cfg = {}) {
  dlt::LeagueManager lm(cfg);
  lm.add_initial_model("baseline", dlt::make_snapshot(dlt::PolicyParams(3, 1), "None:baseline"));
  dlt::AgentSpec ma;
  ma.name = "MA";
  ma.role = dlt::Role::kMA;
  ma.initial_model = "None:baseline";
  ma.tags.zero_tag_prob = 1.0;
  lm.add_agent(ma);
  dlt::AgentSpec aee;
  aee.name = "AEE";
  aee.role = dlt::Role::kAEE;
  aee.initial_model = "None:baseline";
  aee.tags.zero_tag_prob = 1.0;
  lm.add_agent(aee);
  return lm;
}

// Records `wins` wins and `n - wins` losses of a against b.
inline void record(dlt::LeagueManager& lm, const std::string& a, const std::string& b, int n, int wins) {
  for (int i = 0; i < n; ++i) {
    dlt::MatchDescriptor m;
    m.model_id = a;
    m.opponent_id = b;
    lm.record_match_result(m, i < wins ? 1 : -1);
  }
}

struct ReplayStep {
  std::string action;  // "inherit" or "reset"
  std::string source;  // model the next period starts from
};

// Drives the AEE through four periods with the narrated win-rates against
// the MA and returns the three decisions taken at the starts of periods 2-4.
inline std::vector<ReplayStep> replay_aee_periods() {
  dlt::LeagueManager lm = aee_league();
  const dlt::PolicyParams params(3, 1);
  const std::string ma = lm.live_ma_id();
  const std::int64_t period = lm.config().max_period_steps;
  std::vector<ReplayStep> out;
  auto step = [&] {
    const auto events = lm.advance("AEE", period, params);
    if (events.size() != 1) return;
    const auto& d = events.front().decision;
    out.push_back({d.action == dlt::PeriodDecision::Action::kInherit ? "inherit" : "reset",
                   events.front().source_id});
  };
  // Period 1: model 0001 ends at 35% against the MA.
  const std::string m1 = lm.agent("AEE").model_id;
  record(lm, m1, ma, 100, 35);
  step();
  // Period 2: model 0002 ends above 50%.
  const std::string m2 = lm.agent("AEE").model_id;
  record(lm, m2, ma, 100, 60);
  step();
  // Period 3: model 0003 ends at 40%; meanwhile 0002 falls to 48%.
  const std::string m3 = lm.agent("AEE").model_id;
  record(lm, m3, ma, 100, 40);
  record(lm, ma, m2, 100, 64);  // 0002 wins 36 more: 96 / 200
  step();
  return out;
}

}  // namespace fixture
