#pragma once

// Desk-scale league training loop: configuration, league templates, the
// rollout worker pool, per-agent learners, checkpointing and ablations.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlt/eval.hpp"
#include "dlt/game.hpp"
#include "dlt/league.hpp"
#include "dlt/losses.hpp"
#include "dlt/policy.hpp"

namespace dlt {

struct ExperimentConfig {
  static constexpr int kVersion = 1;

  // game
  int num_moves = 5;
  int horizon = 8;
  double noise = 0.25;
  std::uint64_t game_seed = 1;

  // policies
  int num_tags = 6;  // tags 1..num_tags plus tag 0
  double zero_tag_prob = 0.5;
  double init_smoothing = 0.4;
  double init_noise = 0.0;
  std::uint64_t policy_seed = 0;

  // losses; overrides are keyed by role ("MA", "AEE", ...) or agent name.
  // Exploiters learn slower than the main agent, and the main agent keeps
  // only a light rule prior: a hard counter-last prior is itself exploitable.
  LossConfig loss = exploiter_loss();
  std::map<std::string, nlohmann::json> loss_overrides{
      {"MA", {{"learning_rate", 0.2}, {"lambda_rgps", 0.03}}}};

  // league
  RoleConfig roles;
  std::string league_template = "dlt-formal";

  // runtime
  int workers = 1;
  int batch_size = 16;  // matches per agent per round, one update each
  std::int64_t total_steps = 880000;  // env steps per agent: 22 max-length periods
  int actor_refresh_matches = 50;
  double watchdog_seconds = 300.0;
  std::uint64_t seed = 0;
  double dapo_activation_fraction = 0.74;
  std::int64_t dapo_activation_step = -1;  // < 0: fraction * total_steps
  bool write_match_log = true;

  static LossConfig exploiter_loss() {
    LossConfig c;
    c.learning_rate = 0.02;
    return c;
  }

  GameSpec game() const;
  std::int64_t effective_dapo_step() const;
  std::int64_t steps_per_round() const {
    return static_cast<std::int64_t>(batch_size) * horizon;
  }

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& doc);
  // FNV-1a over the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

// ---------------------------------------------------------------------------
// Templates and initial models

struct LeagueTemplate {
  std::string name;
  bool rgps = false;
  bool dapo = false;
  bool dapo_from_start = false;
};

const std::vector<LeagueTemplate>& league_templates();
const LeagueTemplate& find_template(const std::string& name);

// Style 0 is the smoothed elite bot; style k >= 1 is pure(k - 1) for k <= m,
// then counter-last, then cycle.
Distribution style_distribution(int style, int num_moves, const PlayerView& view);

// Tabular fit to smoothed scripted styles: softmax(logits) equals
// (1 - smoothing) * style + smoothing / m at every (state, tag). With
// specific_style < 0 tag t plays style t; otherwise every tag plays it.
PolicyParams make_initial_params(int num_moves, int num_tags, double smoothing,
                                 int specific_style = -1, double noise = 0.0,
                                 std::uint64_t seed = 0);

// Initial models plus the template's agents.
LeagueManager build_league(const ExperimentConfig& cfg);

// Per-agent loss settings after template, role and agent adjustments.
LossConfig agent_loss_config(const ExperimentConfig& cfg, const AgentSpec& spec);

// ---------------------------------------------------------------------------
// Training

struct RunManifest {
  std::string config_hash;
  std::string code_version;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::int64_t rounds = 0;
  bool completed = false;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);
};

class StateFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class WatchdogTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

extern const char* const kCodeVersion;

// Artifact directory from DLT_ARTIFACT_DIR, else `fallback`.
std::filesystem::path artifact_dir_from_env(const std::filesystem::path& fallback);

class RolloutPool;

class Experiment {
 public:
  Experiment(ExperimentConfig cfg, std::filesystem::path artifact_dir);
  ~Experiment();

  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  // Loads a checkpoint. If `expected` is given its hash must match.
  static std::unique_ptr<Experiment> resume(const std::filesystem::path& state_file,
                                            std::filesystem::path artifact_dir,
                                            const std::optional<ExperimentConfig>& expected = {});

  // Runs until the per-agent budget is spent or `max_rounds` more rounds
  // have run. Returns the manifest written at the end.
  RunManifest run(std::optional<std::int64_t> max_rounds = std::nullopt);
  bool finished() const;

  const ExperimentConfig& config() const { return cfg_; }
  const GameSpec& game() const { return spec_; }
  const LeagueManager& league() const { return league_; }
  const PolicyParams& live_params(const std::string& agent) const;
  std::int64_t round() const { return round_; }

  // Final live models as snapshots, keyed by agent.
  SnapshotPtr live_snapshot(const std::string& agent) const;
  // Frozen members plus the live models.
  std::vector<SnapshotPtr> league_members(bool include_initial = true) const;
  std::vector<SnapshotPtr> main_agent_lineage() const;

  nlohmann::json checkpoint_json() const;
  void write_checkpoint(const std::filesystem::path& path) const;

  const std::filesystem::path& artifact_dir() const { return dir_; }
  std::filesystem::path checkpoint_path() const { return dir_ / "league_state.json"; }
  std::filesystem::path match_log_path() const { return dir_ / "match_log.jsonl"; }
  std::filesystem::path train_log_path() const { return dir_ / "train_log.jsonl"; }
  std::filesystem::path manifest_path() const { return dir_ / "manifest.json"; }

 private:
  struct AgentRuntime {
    PolicyParams params{3, 1};
    SnapshotPtr actor;
    int matches_since_refresh = 0;
  };

  Experiment(ExperimentConfig cfg, std::filesystem::path artifact_dir, LeagueManager league);

  void init_agents();
  void refresh_actor(const std::string& agent);
  void run_round();
  SnapshotPtr resolve(const std::string& model_id) const;
  RunManifest make_manifest(bool completed) const;

  ExperimentConfig cfg_;
  GameSpec spec_;
  std::filesystem::path dir_;
  LeagueManager league_;
  std::map<std::string, AgentRuntime> agents_;
  std::int64_t round_ = 0;
  RuleSet rules_;
  std::unique_ptr<RolloutPool> pool_;  // last: workers reference spec_ and rules_
};

// Read-only view of a league state file for evaluation.
struct LoadedLeague {
  ExperimentConfig config;
  GameSpec spec;
  std::vector<SnapshotPtr> members;  // frozen members, then live models
  std::vector<std::string> roles;    // parallel to members
  std::vector<SnapshotPtr> main_lineage;
};

LoadedLeague load_league_state(const std::filesystem::path& state_file, bool include_initial = true);

// Convenience wrapper: fresh run in `artifact_dir`.
RunManifest train(const ExperimentConfig& cfg, const std::filesystem::path& artifact_dir);

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string template_name;
  double league_rpp = 0.0;
  double league_rpp_se = 0.0;
  double ma_rpp = 0.0;
  double ma_rpp_se = 0.0;
  double diversity_entropy = 0.0;
  std::string error;  // non-empty if the template failed

  nlohmann::json to_json() const;
};

struct AblationReport {
  std::string reference;
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const;
  void write_csv(std::ostream& out) const;
};

struct AblationOptions {
  int eval_matches = 20;  // per cross pair
  int bootstrap = 0;
  std::string reference = "alphastar-surrogate";
};

// Trains each template under the base config's budget, then compares each
// against the reference league.
AblationReport ablation(const ExperimentConfig& base, const std::vector<std::string>& templates,
                        const std::filesystem::path& artifact_dir, const AblationOptions& opts = {});

// Pooled (tag, move) entropy over exploiter matches of a match log.
double exploiter_diversity(const std::filesystem::path& match_log, int num_moves, int tag_count);

}  // namespace dlt
