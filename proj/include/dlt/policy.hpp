#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dlt/game.hpp"
#include "dlt/rng.hpp"

namespace dlt {

// Anything that maps (view, strategy tag) to a move distribution.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int num_moves() const = 0;
  virtual Distribution distribution(const PlayerView& view, int tag) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

using PolicyPtr = std::shared_ptr<const Policy>;

// ---------------------------------------------------------------------------
// Scripted bots

enum class BotKind { kPure, kCounterLast, kElite, kUniform, kCycle };

class ScriptedBot final : public Policy {
 public:
  static constexpr double kEliteCounterProb = 0.8;

  ScriptedBot(BotKind kind, int num_moves, Move pure_move = 0);

  int num_moves() const override { return num_moves_; }
  Distribution distribution(const PlayerView& view, int tag) const override;
  nlohmann::json to_json() const override;

  BotKind kind() const { return kind_; }
  Move pure_move() const { return pure_move_; }

 private:
  BotKind kind_;
  int num_moves_;
  Move pure_move_;
};

PolicyPtr scripted_bot(BotKind kind, int num_moves, Move pure_move = 0);

// ---------------------------------------------------------------------------
// Tabular policy

// (last move pair or start) x score bucket {behind, even, ahead}.
struct StateEncoder {
  static constexpr double kBucketThreshold = 0.5;

  int num_moves = 3;

  int num_states() const { return 3 * (num_moves * num_moves + 1); }
  int encode(const PlayerView& view) const;
  // A representative view of `state`; encode(decode(s, t)) == s.
  PlayerView decode(int state, int step_index) const;
};

class PolicyParams final : public Policy {
 public:
  static constexpr int kVersion = 1;
  static constexpr double kLogitClamp = 40.0;

  PolicyParams(int num_moves, int tag_count);

  int num_moves() const override { return encoder_.num_moves; }
  int tag_count() const { return tag_count_; }
  int num_states() const { return encoder_.num_states(); }
  const StateEncoder& encoder() const { return encoder_; }

  Distribution distribution(const PlayerView& view, int tag) const override;
  Distribution probs(int state, int tag) const;
  double value(int state, int tag) const { return values_[slot(state, tag)]; }
  double& value(int state, int tag) { return values_[slot(state, tag)]; }

  // Logits for (state, tag) live at [offset, offset + num_moves).
  std::size_t logit_offset(int state, int tag) const {
    return slot(state, tag) * static_cast<std::size_t>(num_moves());
  }
  std::size_t slot(int state, int tag) const;

  std::vector<double>& logits() { return logits_; }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void clamp_logits();

  nlohmann::json to_json() const override;
  static PolicyParams from_json(const nlohmann::json& doc);

  bool operator==(const PolicyParams& other) const {
    return tag_count_ == other.tag_count_ && encoder_.num_moves == other.encoder_.num_moves &&
           logits_ == other.logits_ && values_ == other.values_;
  }

 private:
  StateEncoder encoder_;
  int tag_count_;
  std::vector<double> logits_;
  std::vector<double> values_;
};

Distribution softmax(const double* logits, int n);

// Deserializes either a tabular policy or a scripted bot.
PolicyPtr policy_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Strategy tags

struct StrategyTagConfig {
  double zero_tag_prob = 0.5;
  // Tags other than 0 with sampling weights (normalized on validation).
  std::vector<std::pair<int, double>> tag_pool;

  void validate() const;
  int sample(Rng& rng) const;

  static StrategyTagConfig only(int tag);
  // zero_tag_prob on tag 0, the rest uniformly over 1..num_tags.
  static StrategyTagConfig mixed(double zero_tag_prob, int num_tags);

  nlohmann::json to_json() const;
  static StrategyTagConfig from_json(const nlohmann::json& doc);

  bool operator==(const StrategyTagConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Snapshots

// A frozen, shareable policy plus the tag configuration it plays with.
struct Snapshot {
  std::string model_id;
  PolicyPtr policy;
  StrategyTagConfig tags;

  // Non-null iff the policy is tabular.
  const PolicyParams* tabular() const {
    return dynamic_cast<const PolicyParams*>(policy.get());
  }
  nlohmann::json to_json() const;
  static Snapshot from_json(const nlohmann::json& doc);
};

using SnapshotPtr = std::shared_ptr<const Snapshot>;

// Deep copy of `params`; later edits to `params` never reach the snapshot.
SnapshotPtr make_snapshot(const PolicyParams& params, std::string model_id,
                          StrategyTagConfig tags = StrategyTagConfig::only(0));
SnapshotPtr make_snapshot(PolicyPtr policy, std::string model_id,
                          StrategyTagConfig tags = StrategyTagConfig::only(0));

class SnapshotRegistry {
 public:
  SnapshotPtr freeze(const PolicyParams& params, const std::string& model_id,
                     StrategyTagConfig tags = StrategyTagConfig::only(0));
  void add(SnapshotPtr snapshot);
  SnapshotPtr get(const std::string& model_id) const;
  bool contains(const std::string& model_id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, SnapshotPtr> items_;
};

// ---------------------------------------------------------------------------
// Rollouts

struct TrajectoryStep {
  int encoded_state = 0;
  int tag = 0;
  Move action = 0;
  double behavior_prob = 1.0;
  double reward = 0.0;
  bool critical = false;
  Distribution expert;  // empty unless critical
  int step_index = 0;

  bool operator==(const TrajectoryStep&) const = default;
};

struct Trajectory {
  std::string model_id;  // the snapshot that generated the actions
  std::vector<TrajectoryStep> steps;
  double bootstrap_value = 0.0;
  int outcome = 0;

  bool operator==(const Trajectory&) const = default;
};

struct ActionSample {
  Move action;
  double prob;
};

ActionSample sample_action(const Policy& policy, const PlayerView& view, int tag,
                           Rng& rng);
ActionSample sample_from(const Distribution& dist, Rng& rng);

struct RolloutResult {
  Trajectory p1;
  Trajectory p2;
  int outcome = 0;  // player 1 perspective
};

RolloutResult rollout(const GameSpec& spec, const Snapshot& p1, const Snapshot& p2,
                      std::pair<int, int> tags, std::uint64_t seed,
                      const RuleSet& rules = default_rule_set());

// Tags drawn from each snapshot's own configuration.
RolloutResult rollout(const GameSpec& spec, const Snapshot& p1, const Snapshot& p2,
                      std::uint64_t seed, const RuleSet& rules = default_rule_set());

}  // namespace dlt
