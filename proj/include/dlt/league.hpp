#pragma once

// League state machine: model registry with lineage, the six agent roles and
// their freeze/reset/inherit rules, PFSP opponent scheduling, and windowed
// win-rate accounting.

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dlt/policy.hpp"
#include "dlt/rng.hpp"

namespace dlt {

enum class Role { kMA, kME, kLE, kSE, kEE, kAEE };

std::string to_string(Role role);
Role role_from_string(const std::string& name);

// Which opponents an exploiter is matched against.
enum class Matching { kMainAgent, kLeague };

// "parent:child"; parent "None" marks an initial model.
struct ModelId {
  std::string parent;
  std::string child;

  std::string str() const { return parent + ":" + child; }
  static ModelId parse(const std::string& id);
};

struct RoleConfig {
  std::int64_t min_period_steps = 20000;
  std::int64_t max_period_steps = 40000;
  std::int64_t check_interval = 0;  // <= 0 means min_period_steps / 10
  double win_threshold = 0.70;
  double aee_low = 0.20;
  double aee_high = 0.50;
  std::int64_t ma_snapshot_steps = 80000;
  double mix_self_play = 0.25;
  double mix_pfsp = 0.60;
  double mix_forgotten = 0.15;
  double pfsp_exponent = 2.0;
  double forgotten_threshold = 0.30;
  // Exploiters targeting the MA fall back to PFSP over MA history below this.
  double exploiter_fallback_threshold = 0.20;
  std::size_t winrate_window = 200;
  double se_distill_boost = 2.0;

  void validate() const;
  std::int64_t effective_check_interval() const {
    return check_interval > 0 ? check_interval : std::max<std::int64_t>(1, min_period_steps / 10);
  }

  nlohmann::json to_json() const;
  static RoleConfig from_json(const nlohmann::json& doc);
  static RoleConfig from_json(const nlohmann::json& doc, RoleConfig base);
};

// ---------------------------------------------------------------------------
// Win rates

struct WinStats {
  std::int64_t wins = 0;
  std::int64_t draws = 0;
  std::int64_t losses = 0;

  std::int64_t count() const { return wins + draws + losses; }
  // (wins + draws / 2) / count, or `prior` without data.
  double win_rate(double prior = 0.5) const;
};

// Sliding window of the most recent results per unordered pair. Reads from
// either side are mirrored views of the same window.
class WinRateTable {
 public:
  explicit WinRateTable(std::size_t window = 200) : window_(window) {}
  WinRateTable(const WinRateTable& other);
  WinRateTable& operator=(const WinRateTable& other);

  // outcome in {-1, 0, +1} from `a`'s perspective.
  void record(const std::string& a, const std::string& b, int outcome);
  WinStats stats(const std::string& a, const std::string& b) const;
  double win_rate(const std::string& a, const std::string& b, double prior = 0.5) const;
  // Aggregate over every opponent of `a`.
  WinStats pooled(const std::string& a) const;

  std::size_t window() const { return window_; }

  nlohmann::json to_json() const;
  static WinRateTable from_json(const nlohmann::json& doc);

 private:
  using Key = std::pair<std::string, std::string>;
  static std::pair<Key, bool> key_for(const std::string& a, const std::string& b);

  std::size_t window_;
  mutable std::shared_mutex mu_;
  std::map<Key, std::deque<int>> results_;  // outcomes from key.first's view
};

// ---------------------------------------------------------------------------
// Registry and lineage

struct ModelRecord {
  std::string model_id;
  std::string agent;  // owning agent name; empty for initial models
  Role role = Role::kMA;
  int period_index = 0;
  bool frozen = false;
  std::string initial_model;
  StrategyTagConfig tags;
  SnapshotPtr snapshot;  // set once frozen

  nlohmann::json to_json() const;
  static ModelRecord from_json(const nlohmann::json& doc);
};

// Inheritance forest of one exploiter's frozen models.
class LineageTree {
 public:
  struct Node {
    std::string id;
    std::string parent;  // tree node id, or empty for a root (initial model)
    int period = 0;
  };

  void add(const std::string& id, const std::string& parent, int period);
  // Called when a new model inherits `id`.
  void mark_inherited(const std::string& id);
  bool contains(const std::string& id) const;

  // Maintained incrementally.
  std::vector<std::string> leaves() const;
  // Rebuilt from nodes and edges alone.
  std::vector<std::string> recompute_leaves() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::set<std::string>& inherited() const { return inherited_; }

  nlohmann::json to_json() const;
  static LineageTree from_json(const nlohmann::json& doc);

 private:
  std::vector<Node> nodes_;
  std::set<std::string> leaf_set_;
  std::set<std::string> inherited_;
};

// ---------------------------------------------------------------------------
// Period decisions (pure functions)

struct CandidateRate {
  std::string id;
  int period = 0;
  double win_rate = 0.5;  // against the live MA
};

struct PeriodDecision {
  enum class Action { kContinue, kInherit, kReset };
  Action action = Action::kContinue;
  bool freeze = false;
  std::string inherit_from;  // set for kInherit

  static PeriodDecision keep() { return {}; }
  static PeriodDecision inherit(std::string id, bool freeze) {
    return {Action::kInherit, freeze, std::move(id)};
  }
  static PeriodDecision reset(bool freeze) { return {Action::kReset, freeze, {}}; }
  bool operator==(const PeriodDecision&) const = default;
};

// Freeze trigger shared by every exploiter role.
bool period_trigger(double win_rate_vs_target, std::int64_t steps_in_period,
                    const RoleConfig& cfg);

// Among leaves with win-rate in [aee_low, aee_high], inherit the one closest
// to aee_high (ties to the newer period); otherwise reset.
PeriodDecision aee_period_decision(const std::vector<CandidateRate>& leaves,
                                   const RoleConfig& cfg, bool freeze = true);
PeriodDecision aee_period_decision(const LineageTree& tree, const WinRateTable& rates,
                                   const std::string& live_ma_id, const RoleConfig& cfg);

// Highest win-rate vs MA among historical EEs, or reset when there are none.
PeriodDecision ee_best_historical(const std::vector<CandidateRate>& history, bool freeze);
// At a check point: continue, or freeze and inherit the best (current
// model included).
PeriodDecision ee_period_decision(const std::vector<CandidateRate>& history,
                                  const CandidateRate& current, std::int64_t steps_in_period,
                                  const RoleConfig& cfg);

PeriodDecision standard_reset_decision(double win_rate_vs_target, std::int64_t steps_in_period,
                                       const RoleConfig& cfg);

// ---------------------------------------------------------------------------
// Agents and scheduling

struct AgentSpec {
  std::string name;
  Role role = Role::kMA;
  Matching matching = Matching::kMainAgent;
  std::string initial_model;  // model id of the initial model
  StrategyTagConfig tags;
  double distill_scale = 1.0;
  bool use_rgps = false;

  nlohmann::json to_json() const;
  static AgentSpec from_json(const nlohmann::json& doc);
};

struct AgentState {
  AgentSpec spec;
  std::string model_id;  // live model
  int period_index = 1;
  int model_counter = 0;
  std::int64_t steps_in_period = 0;
  std::int64_t total_steps = 0;
  std::int64_t steps_since_snapshot = 0;
  std::int64_t next_check = 0;
  std::string teacher_id;     // distillation target (initial model)
  std::string prev_model_id;  // last frozen model of this agent (DAPO anchor)
  LineageTree tree;

  nlohmann::json to_json() const;
  static AgentState from_json(const nlohmann::json& doc);
};

enum class MatchBranch { kSelfPlay, kPfsp, kForgotten, kMainAgent, kMainHistory, kLeague };

std::string to_string(MatchBranch b);
MatchBranch branch_from_string(const std::string& name);

struct MatchDescriptor {
  std::uint64_t match_id = 0;
  std::string agent;
  std::string model_id;     // the agent's live model
  std::string opponent_id;  // frozen model id or a live model id
  MatchBranch branch = MatchBranch::kSelfPlay;
};

// PFSP weights f(p) = (1 - p)^k; all-zero weights fall back to uniform.
std::vector<double> pfsp_weights(const std::vector<double>& win_rates, double exponent);
std::size_t pfsp_pick(const std::vector<double>& win_rates, double exponent, Rng& rng);

struct PeriodEvent {
  std::string agent;
  PeriodDecision decision;
  std::string frozen_id;     // non-empty if a model was frozen
  std::string new_model_id;  // the agent's next live model
  std::string source_id;     // model whose parameters seed the new live model
};

class LeagueManager {
 public:
  static constexpr int kVersion = 1;
  static constexpr const char* kMainAgentName = "MA";

  explicit LeagueManager(RoleConfig cfg);

  const RoleConfig& config() const { return cfg_; }

  // Initial models are frozen members with id "None:<name>".
  std::string add_initial_model(const std::string& name, SnapshotPtr snapshot);
  // Registers the agent's first live model, seeded from its initial model.
  void add_agent(const AgentSpec& spec);

  const ModelRecord& record(const std::string& model_id) const;
  bool is_registered(const std::string& model_id) const;
  std::vector<std::string> frozen_ids() const;  // registration order
  std::vector<std::string> model_ids() const;   // registration order
  SnapshotPtr snapshot(const std::string& model_id) const;

  const AgentState& agent(const std::string& name) const;
  std::vector<std::string> agent_names() const;
  const AgentState& main_agent() const { return agent(kMainAgentName); }
  std::string live_ma_id() const;

  const WinRateTable& win_rates() const { return rates_; }

  MatchDescriptor schedule_opponent(const std::string& agent_name, Rng& rng);
  void record_match_result(const MatchDescriptor& match, int outcome);

  double win_rate_vs_target(const std::string& agent_name) const;
  // Past MA snapshots against which the live MA scores below the threshold.
  std::vector<std::string> forgotten_main_players() const;

  // Adds consumed environment steps; returns the MA snapshot id if one was
  // pushed and every period event that fired.
  std::vector<PeriodEvent> advance(const std::string& agent_name, std::int64_t steps,
                                   const PolicyParams& live_params);

  std::optional<std::string> ma_snapshot_tick(const PolicyParams& live_params);
  std::optional<PeriodEvent> period_check(const std::string& agent_name,
                                          const PolicyParams& live_params);

  std::uint64_t next_match_id() const { return next_match_id_; }

  nlohmann::json to_json() const;
  static LeagueManager from_json(const nlohmann::json& doc);

 private:
  std::string freeze_live(AgentState& st, const PolicyParams& live_params);
  std::string start_model(AgentState& st, const std::string& parent_child);
  ModelRecord& mutable_record(const std::string& model_id);
  AgentState& mutable_agent(const std::string& name);
  std::vector<std::string> agent_history(const std::string& agent_name) const;

  RoleConfig cfg_;
  std::map<std::string, ModelRecord> models_;
  std::vector<std::string> order_;
  std::map<std::string, AgentState> agents_;
  std::vector<std::string> agent_order_;
  WinRateTable rates_;
  std::uint64_t next_match_id_ = 0;
  std::int64_t ma_snapshot_counter_ = 0;
};

}  // namespace dlt
