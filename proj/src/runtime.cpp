#include "dlt/runtime.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "dlt/bounded_queue.hpp"
#include "dlt/parallel.hpp"
#include "dlt/rng.hpp"

namespace dlt {

const char* const kCodeVersion = "dlt-league 0.1.0";

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Salts for derive_seed so the streams never collide.
constexpr std::uint64_t kScheduleSalt = 0x7363686564ULL;
constexpr std::uint64_t kMatchSalt = 0x6d61746368ULL;
constexpr std::uint64_t kPolicySalt = 0x706f6c6963ULL;

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

GameSpec ExperimentConfig::game() const {
  return generate_cyclic_game(num_moves, horizon, noise, game_seed);
}

std::int64_t ExperimentConfig::effective_dapo_step() const {
  if (dapo_activation_step >= 0) return dapo_activation_step;
  return static_cast<std::int64_t>(std::llround(dapo_activation_fraction * static_cast<double>(total_steps)));
}

void ExperimentConfig::validate() const {
  if (num_moves < 2) throw DomainError("config: game.m must be >= 2");
  if (horizon < 1) throw DomainError("config: game.horizon must be >= 1");
  if (!(noise >= 0.0)) throw DomainError("config: game.sigma must be >= 0");
  if (num_tags < 0) throw DomainError("config: policy.num_tags must be >= 0");
  if (!(zero_tag_prob >= 0.0 && zero_tag_prob <= 1.0))
    throw DomainError("config: policy.zero_tag_prob must lie in [0, 1]");
  if (num_tags == 0 && zero_tag_prob != 1.0)
    throw DomainError("config: zero_tag_prob must be 1 when there are no tags");
  if (!(init_smoothing > 0.0 && init_smoothing <= 1.0))
    throw DomainError("config: policy.init_smoothing must lie in (0, 1]");
  if (!(init_noise >= 0.0)) throw DomainError("config: policy.init_noise must be >= 0");
  loss.validate(horizon);
  for (const auto& [key, doc] : loss_overrides) LossConfig::from_json(doc, loss).validate(horizon);
  roles.validate();
  find_template(league_template);
  if (workers < 1) throw DomainError("config: runtime.workers must be >= 1");
  if (batch_size < 1) throw DomainError("config: runtime.batch_size must be >= 1");
  if (actor_refresh_matches < 1) throw DomainError("config: runtime.actor_refresh_matches must be >= 1");
  if (!(watchdog_seconds > 0.0)) throw DomainError("config: runtime.watchdog_seconds must be > 0");
  if (total_steps < roles.min_period_steps)
    throw DomainError("config: runtime.total_steps must cover at least one period");
  if (!(dapo_activation_fraction >= 0.0 && dapo_activation_fraction <= 1.0))
    throw DomainError("config: dapo_activation_fraction must lie in [0, 1]");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [k, v] : loss_overrides) overrides[k] = v;
  return {
      {"version", kVersion},
      {"game", {{"m", num_moves}, {"horizon", horizon}, {"sigma", noise}, {"seed", game_seed}}},
      {"policy",
       {{"num_tags", num_tags},
        {"zero_tag_prob", zero_tag_prob},
        {"init_smoothing", init_smoothing},
        {"init_noise", init_noise},
        {"seed", policy_seed}}},
      {"loss", loss.to_json()},
      {"loss_overrides", overrides},
      {"league", {{"template", league_template}, {"roles", roles.to_json()}}},
      {"runtime",
       {{"workers", workers},
        {"batch_size", batch_size},
        {"total_steps", total_steps},
        {"actor_refresh_matches", actor_refresh_matches},
        {"watchdog_seconds", watchdog_seconds},
        {"seed", seed},
        {"dapo_activation_fraction", dapo_activation_fraction},
        {"dapo_activation_step", dapo_activation_step},
        {"write_match_log", write_match_log}}}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  if (doc.contains("version") && doc["version"].get<int>() != kVersion)
    throw DomainError("config: unsupported version");
  if (doc.contains("game")) {
    const auto& g = doc["game"];
    c.num_moves = g.value("m", c.num_moves);
    c.horizon = g.value("horizon", c.horizon);
    c.noise = g.value("sigma", c.noise);
    c.game_seed = g.value("seed", c.game_seed);
  }
  if (doc.contains("policy")) {
    const auto& p = doc["policy"];
    c.num_tags = p.value("num_tags", c.num_tags);
    c.zero_tag_prob = p.value("zero_tag_prob", c.zero_tag_prob);
    c.init_smoothing = p.value("init_smoothing", c.init_smoothing);
    c.init_noise = p.value("init_noise", c.init_noise);
    c.policy_seed = p.value("seed", c.policy_seed);
  }
  if (doc.contains("loss")) c.loss = LossConfig::from_json(doc["loss"], c.loss);
  if (doc.contains("loss_overrides")) {
    c.loss_overrides.clear();
    for (const auto& [k, v] : doc["loss_overrides"].items()) c.loss_overrides[k] = v;
  }
  if (doc.contains("league")) {
    const auto& l = doc["league"];
    c.league_template = l.value("template", c.league_template);
    if (l.contains("roles")) c.roles = RoleConfig::from_json(l["roles"], c.roles);
  }
  if (doc.contains("runtime")) {
    const auto& r = doc["runtime"];
    c.workers = r.value("workers", c.workers);
    c.batch_size = r.value("batch_size", c.batch_size);
    c.total_steps = r.value("total_steps", c.total_steps);
    c.actor_refresh_matches = r.value("actor_refresh_matches", c.actor_refresh_matches);
    c.watchdog_seconds = r.value("watchdog_seconds", c.watchdog_seconds);
    c.seed = r.value("seed", c.seed);
    c.dapo_activation_fraction = r.value("dapo_activation_fraction", c.dapo_activation_fraction);
    c.dapo_activation_step = r.value("dapo_activation_step", c.dapo_activation_step);
    c.write_match_log = r.value("write_match_log", c.write_match_log);
  }
  return c;
}

std::string ExperimentConfig::hash() const { return hex16(fnv1a(to_json().dump())); }

// ---------------------------------------------------------------------------
// Templates and initial models

const std::vector<LeagueTemplate>& league_templates() {
  static const std::vector<LeagueTemplate> kTemplates = {
      {"dlt-formal", true, true, false},
      {"alphastar-surrogate", false, false, false},
      {"dlt-only", false, false, false},
      {"dlt-rgps", true, false, false},
      {"dlt-rgps-dapo", true, true, true},
  };
  return kTemplates;
}

const LeagueTemplate& find_template(const std::string& name) {
  for (const auto& t : league_templates())
    if (t.name == name) return t;
  throw DomainError("unknown league template: " + name);
}

Distribution style_distribution(int style, int m, const PlayerView& view) {
  if (style <= 0) return ScriptedBot(BotKind::kElite, m).distribution(view, 0);
  const int idx = (style - 1) % (m + 2);
  if (idx < m) return ScriptedBot(BotKind::kPure, m, idx).distribution(view, 0);
  if (idx == m) return ScriptedBot(BotKind::kCounterLast, m).distribution(view, 0);
  return ScriptedBot(BotKind::kCycle, m).distribution(view, 0);
}

PolicyParams make_initial_params(int m, int num_tags, double smoothing, int specific_style,
                                 double noise, std::uint64_t seed) {
  PolicyParams p(m, num_tags + 1);
  Rng rng(seed);
  const int start_state_step = 0;
  for (int s = 0; s < p.num_states(); ++s) {
    // Start states decode at t = 0, everything else at t = 1.
    PlayerView view = p.encoder().decode(s, start_state_step);
    if (view.opponent_last) view = p.encoder().decode(s, 1);
    for (int tag = 0; tag <= num_tags; ++tag) {
      const int style = specific_style >= 0 ? specific_style : tag;
      const Distribution d = style_distribution(style, m, view);
      const std::size_t off = p.logit_offset(s, tag);
      for (int k = 0; k < m; ++k) {
        double logit = std::log((1.0 - smoothing) * d[k] + smoothing / m);
        if (noise > 0.0) {
          // Box-Muller keeps the stream independent of the standard library.
          const double u1 = std::max(uniform01(rng), 1e-300), u2 = uniform01(rng);
          logit += noise * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        }
        p.logits()[off + k] = logit;
      }
    }
  }
  p.clamp_logits();
  return p;
}

LeagueManager build_league(const ExperimentConfig& cfg) {
  LeagueManager lm(cfg.roles);
  const LeagueTemplate& t = find_template(cfg.league_template);
  const int m = cfg.num_moves, k_tags = cfg.num_tags;
  const StrategyTagConfig mixed = k_tags > 0 ? StrategyTagConfig::mixed(cfg.zero_tag_prob, k_tags)
                                             : StrategyTagConfig::only(0);
  const std::uint64_t pseed = derive_seed({cfg.policy_seed, kPolicySalt});

  const std::string baseline = lm.add_initial_model(
      "baseline", make_snapshot(make_initial_params(m, k_tags, cfg.init_smoothing, -1,
                                                    cfg.init_noise, derive_seed({pseed, 0})),
                                "None:baseline", mixed));

  auto agent = [&](std::string name, Role role, Matching matching, std::string init,
                   StrategyTagConfig tags, double distill_scale, bool rgps) {
    AgentSpec a;
    a.name = std::move(name);
    a.role = role;
    a.matching = matching;
    a.initial_model = std::move(init);
    a.tags = std::move(tags);
    a.distill_scale = distill_scale;
    a.use_rgps = rgps;
    lm.add_agent(a);
  };

  agent(LeagueManager::kMainAgentName, Role::kMA, Matching::kMainAgent, baseline, mixed, 1.0, t.rgps);
  if (t.name == "alphastar-surrogate") {
    agent("ME-1", Role::kME, Matching::kMainAgent, baseline, mixed, 1.0, false);
    agent("ME-2", Role::kME, Matching::kMainAgent, baseline, mixed, 1.0, false);
    agent("LE-1", Role::kLE, Matching::kLeague, baseline, mixed, 1.0, false);
    agent("LE-2", Role::kLE, Matching::kLeague, baseline, mixed, 1.0, false);
    return lm;
  }
  agent("AEE-General", Role::kAEE, Matching::kMainAgent, baseline, mixed, 1.0, false);
  agent("AEE-League", Role::kAEE, Matching::kLeague, baseline, mixed, 1.0, false);
  for (int k = 1; k <= k_tags; ++k) {
    const std::string name = "specific-" + std::to_string(k);
    const std::string id = lm.add_initial_model(
        name, make_snapshot(make_initial_params(m, k_tags, cfg.init_smoothing, k, cfg.init_noise,
                                                derive_seed({pseed, static_cast<std::uint64_t>(k)})),
                            "None:" + name, StrategyTagConfig::only(k)));
    agent("AEE-Specific-" + std::to_string(k), Role::kAEE, Matching::kMainAgent, id,
          StrategyTagConfig::only(k), cfg.roles.se_distill_boost, false);
  }
  return lm;
}

LossConfig agent_loss_config(const ExperimentConfig& cfg, const AgentSpec& spec) {
  LossConfig c = cfg.loss;
  if (auto it = cfg.loss_overrides.find(to_string(spec.role)); it != cfg.loss_overrides.end())
    c = LossConfig::from_json(it->second, c);
  if (auto it = cfg.loss_overrides.find(spec.name); it != cfg.loss_overrides.end())
    c = LossConfig::from_json(it->second, c);
  if (!spec.use_rgps) c.lambda_rgps = 0.0;
  if (!find_template(cfg.league_template).dapo) c.lambda_dapo = 0.0;
  c.lambda_distill *= spec.distill_scale;
  return c;
}

// ---------------------------------------------------------------------------
// Manifest

nlohmann::json RunManifest::to_json() const {
  return {{"config_hash", config_hash}, {"code_version", code_version}, {"seeds", seeds},
          {"artifacts", artifacts},     {"rounds", rounds},             {"completed", completed}};
}

RunManifest RunManifest::from_json(const nlohmann::json& doc) {
  RunManifest m;
  m.config_hash = doc.at("config_hash").get<std::string>();
  m.code_version = doc.at("code_version").get<std::string>();
  m.seeds = doc.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.artifacts = doc.at("artifacts").get<std::vector<std::string>>();
  m.rounds = doc.at("rounds").get<std::int64_t>();
  m.completed = doc.at("completed").get<bool>();
  return m;
}

fs::path artifact_dir_from_env(const fs::path& fallback) {
  if (const char* env = std::getenv("DLT_ARTIFACT_DIR"); env != nullptr && *env != '\0') return env;
  return fallback;
}

// ---------------------------------------------------------------------------
// Rollout workers

struct RolloutTask {
  std::size_t slot = 0;
  SnapshotPtr p1;
  SnapshotPtr p2;
  std::uint64_t seed = 0;
  bool with_rules = false;
};

struct RolloutDone {
  std::size_t slot = 0;
  std::optional<RolloutResult> result;
  std::string error;
};

class RolloutPool {
 public:
  RolloutPool(const GameSpec& spec, const RuleSet& rules, int workers, double watchdog_seconds)
      : spec_(spec),
        rules_(rules),
        tasks_(static_cast<std::size_t>(4 * workers)),
        done_(std::size_t{1} << 22),
        watchdog_(watchdog_seconds) {
    for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { work(); });
  }

  ~RolloutPool() {
    tasks_.close();
    done_.close();
    for (auto& t : threads_) t.join();
  }

  std::vector<RolloutResult> run(std::vector<RolloutTask> tasks) {
    const std::size_t n = tasks.size();
    for (auto& t : tasks)
      if (!tasks_.push(std::move(t))) throw std::runtime_error("rollout pool: closed");
    std::vector<std::optional<RolloutResult>> slots(n);
    const auto timeout = std::chrono::duration<double>(watchdog_);
    for (std::size_t received = 0; received < n; ++received) {
      auto d = done_.pop_for(timeout);
      if (!d) throw WatchdogTimeout("watchdog: no rollout result within " +
                                    std::to_string(watchdog_) + " s (" +
                                    std::to_string(received) + "/" + std::to_string(n) +
                                    " received)");
      if (!d->error.empty()) throw std::runtime_error("rollout failed: " + d->error);
      slots.at(d->slot) = std::move(d->result);
    }
    std::vector<RolloutResult> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

 private:
  void work() {
    static const RuleSet kNoRules;
    while (auto task = tasks_.pop()) {
      RolloutDone d;
      d.slot = task->slot;
      try {
        d.result = rollout(spec_, *task->p1, *task->p2, task->seed,
                           task->with_rules ? rules_ : kNoRules);
      } catch (const std::exception& e) {
        d.error = e.what();
      }
      if (!done_.push(std::move(d))) return;
    }
  }

  const GameSpec& spec_;
  const RuleSet& rules_;
  BoundedQueue<RolloutTask> tasks_;
  BoundedQueue<RolloutDone> done_;
  double watchdog_;
  std::vector<std::thread> threads_;
};

// ---------------------------------------------------------------------------
// Experiment

Experiment::Experiment(ExperimentConfig cfg, fs::path artifact_dir, LeagueManager league)
    : cfg_(std::move(cfg)),
      spec_(cfg_.game()),
      dir_(std::move(artifact_dir)),
      league_(std::move(league)),
      rules_(default_rule_set()) {
  cfg_.validate();
  fs::create_directories(dir_);
  pool_ = std::make_unique<RolloutPool>(spec_, rules_, cfg_.workers, cfg_.watchdog_seconds);
}

Experiment::Experiment(ExperimentConfig cfg, fs::path artifact_dir)
    : Experiment(cfg, std::move(artifact_dir), build_league(cfg)) {
  init_agents();
  std::ofstream(match_log_path(), std::ios::trunc);
  std::ofstream(train_log_path(), std::ios::trunc);
  write_atomic(dir_ / "config.json", cfg_.to_json().dump(2) + "\n");
}

Experiment::~Experiment() = default;

void Experiment::init_agents() {
  for (const auto& name : league_.agent_names()) {
    const AgentState& st = league_.agent(name);
    const PolicyParams* init = league_.snapshot(st.spec.initial_model)->tabular();
    if (init == nullptr) throw DomainError("initial model must be tabular: " + st.spec.initial_model);
    AgentRuntime rt;
    rt.params = *init;
    agents_[name] = std::move(rt);
    refresh_actor(name);
  }
}

void Experiment::refresh_actor(const std::string& name) {
  AgentRuntime& rt = agents_.at(name);
  const AgentState& st = league_.agent(name);
  rt.actor = make_snapshot(rt.params, st.model_id, st.spec.tags);
  rt.matches_since_refresh = 0;
}

const PolicyParams& Experiment::live_params(const std::string& agent) const {
  auto it = agents_.find(agent);
  if (it == agents_.end()) throw DomainError("unknown agent " + agent);
  return it->second.params;
}

SnapshotPtr Experiment::live_snapshot(const std::string& agent) const {
  const AgentState& st = league_.agent(agent);
  return make_snapshot(live_params(agent), st.model_id, st.spec.tags);
}

std::vector<SnapshotPtr> Experiment::league_members(bool include_initial) const {
  std::vector<SnapshotPtr> out;
  for (const auto& id : league_.frozen_ids()) {
    if (!include_initial && ModelId::parse(id).parent == "None") continue;
    out.push_back(league_.snapshot(id));
  }
  for (const auto& name : league_.agent_names()) out.push_back(live_snapshot(name));
  return out;
}

std::vector<SnapshotPtr> Experiment::main_agent_lineage() const {
  std::vector<SnapshotPtr> out;
  for (const auto& id : league_.frozen_ids())
    if (league_.record(id).agent == LeagueManager::kMainAgentName) out.push_back(league_.snapshot(id));
  out.push_back(live_snapshot(LeagueManager::kMainAgentName));
  return out;
}

SnapshotPtr Experiment::resolve(const std::string& model_id) const {
  const ModelRecord& r = league_.record(model_id);
  if (r.frozen) return r.snapshot;
  for (const auto& [name, rt] : agents_)
    if (league_.agent(name).model_id == model_id) return rt.actor;
  throw std::logic_error("no live agent owns model " + model_id);
}

bool Experiment::finished() const {
  return league_.main_agent().total_steps >= cfg_.total_steps;
}

void Experiment::run_round() {
  const std::vector<std::string> names = league_.agent_names();
  for (const auto& name : names)
    if (agents_.at(name).matches_since_refresh >= cfg_.actor_refresh_matches) refresh_actor(name);

  struct Planned {
    std::string agent;
    MatchDescriptor match;
    bool agent_first = true;
    std::uint64_t seed = 0;
  };
  std::vector<Planned> plan;
  std::vector<RolloutTask> tasks;
  Rng sched(derive_seed({cfg_.seed, static_cast<std::uint64_t>(round_), kScheduleSalt}));
  for (const auto& name : names) {
    const AgentState& st = league_.agent(name);
    const SnapshotPtr me = agents_.at(name).actor;
    for (int k = 0; k < cfg_.batch_size; ++k) {
      Planned p;
      p.agent = name;
      p.match = league_.schedule_opponent(name, sched);
      p.agent_first = k % 2 == 0;
      p.seed = derive_seed({cfg_.seed, static_cast<std::uint64_t>(round_),
                            static_cast<std::uint64_t>(plan.size()), kMatchSalt});
      const SnapshotPtr opp = resolve(p.match.opponent_id);
      RolloutTask t;
      t.slot = plan.size();
      t.p1 = p.agent_first ? me : opp;
      t.p2 = p.agent_first ? opp : me;
      t.seed = p.seed;
      t.with_rules = st.spec.use_rgps;
      tasks.push_back(std::move(t));
      plan.push_back(std::move(p));
    }
  }

  std::vector<RolloutResult> results = pool_->run(std::move(tasks));

  std::map<std::string, std::vector<Trajectory>> batches;
  std::ofstream mlog;
  if (cfg_.write_match_log) mlog.open(match_log_path(), std::ios::app);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Planned& p = plan[i];
    RolloutResult& r = results[i];
    Trajectory& mine = p.agent_first ? r.p1 : r.p2;
    const Trajectory& theirs = p.agent_first ? r.p2 : r.p1;
    const int outcome = p.agent_first ? r.outcome : -r.outcome;
    league_.record_match_result(p.match, outcome);
    if (cfg_.write_match_log) {
      MatchLogRecord rec;
      rec.match_id = p.match.match_id;
      rec.timestamp = round_;
      rec.agent = p.agent;
      rec.model_id = p.match.model_id;
      rec.opponent_id = p.match.opponent_id;
      rec.branch = to_string(p.match.branch);
      rec.seed = p.seed;
      rec.tag = mine.steps.front().tag;
      rec.opponent_tag = theirs.steps.front().tag;
      for (const auto& s : mine.steps) rec.moves.push_back(s.action);
      for (const auto& s : theirs.steps) rec.opponent_moves.push_back(s.action);
      rec.outcome = outcome;
      rec.agent_first = p.agent_first;
      mlog << rec.to_json().dump() << '\n';
    }
    batches[p.agent].push_back(std::move(mine));
  }
  if (cfg_.write_match_log && !mlog) throw std::runtime_error("cannot append to match log");

  // Learners: independent per agent, so they may run concurrently.
  std::vector<LossReport> reports(names.size());
  parallel_for(names.size(), cfg_.workers, [&](std::size_t i) {
    const std::string& name = names[i];
    const AgentState& st = league_.agent(name);
    const std::vector<Trajectory>& batch = batches.at(name);
    for (const auto& traj : batch)
      if (traj.model_id != st.model_id)
        throw std::logic_error("learner " + name + " received a trajectory from " + traj.model_id);
    const LeagueTemplate& t = find_template(cfg_.league_template);
    UpdateContext ctx;
    ctx.teacher = league_.snapshot(st.teacher_id)->policy.get();
    ctx.prev_snapshot =
        st.prev_model_id.empty() ? nullptr : league_.snapshot(st.prev_model_id)->policy.get();
    ctx.dapo_active = t.dapo && (t.dapo_from_start || st.total_steps >= cfg_.effective_dapo_step());
    ctx.horizon = cfg_.horizon;
    reports[i] = total_update(batch, agents_.at(name).params, agent_loss_config(cfg_, st.spec), ctx);
  });

  {
    std::ofstream tlog(train_log_path(), std::ios::app);
    for (std::size_t i = 0; i < names.size(); ++i) {
      const AgentState& st = league_.agent(names[i]);
      nlohmann::json rec = reports[i].to_json();
      rec["round"] = round_;
      rec["agent"] = names[i];
      rec["model_id"] = st.model_id;
      rec["step"] = st.total_steps + cfg_.steps_per_round();
      tlog << rec.dump() << '\n';
    }
  }

  bool boundary = false;
  for (const auto& name : names) {
    AgentRuntime& rt = agents_.at(name);
    rt.matches_since_refresh += cfg_.batch_size;
    const std::string before = league_.agent(name).model_id;
    const auto events = league_.advance(name, cfg_.steps_per_round(), rt.params);
    if (!events.empty()) boundary = true;
    for (const auto& ev : events) {
      if (ev.new_model_id.empty() || ev.source_id.empty()) continue;
      const PolicyParams* src = league_.snapshot(ev.source_id)->tabular();
      if (src == nullptr) throw std::logic_error("non-tabular source model " + ev.source_id);
      rt.params = *src;
    }
    if (league_.agent(name).model_id != before) refresh_actor(name);
  }
  ++round_;
  if (boundary) write_checkpoint(checkpoint_path());
}

RunManifest Experiment::make_manifest(bool completed) const {
  RunManifest m;
  m.config_hash = cfg_.hash();
  m.code_version = kCodeVersion;
  m.seeds = {{"master", cfg_.seed},
             {"game", cfg_.game_seed},
             {"policy", cfg_.policy_seed},
             {"schedule", derive_seed({cfg_.seed, kScheduleSalt})},
             {"match", derive_seed({cfg_.seed, kMatchSalt})}};
  m.artifacts = {(dir_ / "config.json").string(), checkpoint_path().string(),
                 train_log_path().string(), manifest_path().string()};
  if (cfg_.write_match_log) m.artifacts.push_back(match_log_path().string());
  m.rounds = round_;
  m.completed = completed;
  return m;
}

RunManifest Experiment::run(std::optional<std::int64_t> max_rounds) {
  std::int64_t done = 0;
  while (!finished() && (!max_rounds || done < *max_rounds)) {
    run_round();
    ++done;
  }
  write_checkpoint(checkpoint_path());
  const RunManifest m = make_manifest(finished());
  write_atomic(manifest_path(), m.to_json().dump(2) + "\n");
  return m;
}

nlohmann::json Experiment::checkpoint_json() const {
  nlohmann::json agents = nlohmann::json::object();
  for (const auto& [name, rt] : agents_)
    agents[name] = {{"params", rt.params.to_json()},
                    {"actor", rt.actor->to_json()},
                    {"matches_since_refresh", rt.matches_since_refresh}};
  return {{"version", 1},
          {"code_version", kCodeVersion},
          {"config", cfg_.to_json()},
          {"config_hash", cfg_.hash()},
          {"round", round_},
          {"league", league_.to_json()},
          {"agents", agents}};
}

void Experiment::write_checkpoint(const fs::path& path) const {
  write_atomic(path, checkpoint_json().dump() + "\n");
}

std::unique_ptr<Experiment> Experiment::resume(const fs::path& state_file, fs::path artifact_dir,
                                               const std::optional<ExperimentConfig>& expected) {
  nlohmann::json doc;
  try {
    std::ifstream in(state_file);
    if (!in) throw StateFileError("cannot open state file " + state_file.string());
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw StateFileError("state file " + state_file.string() + " is corrupt: " + e.what());
  }
  try {
    if (doc.at("version").get<int>() != 1) throw StateFileError("unsupported state file version");
    const ExperimentConfig cfg = ExperimentConfig::from_json(doc.at("config"));
    const std::string stored = doc.at("config_hash").get<std::string>();
    if (cfg.hash() != stored) throw StateFileError("state file config does not match its hash");
    if (expected && expected->hash() != stored)
      throw StateFileError("config hash mismatch on resume: state " + stored + ", given " +
                           expected->hash());
    std::unique_ptr<Experiment> e(
        new Experiment(cfg, std::move(artifact_dir), LeagueManager::from_json(doc.at("league"))));
    e->round_ = doc.at("round").get<std::int64_t>();
    for (const auto& name : e->league_.agent_names()) {
      const auto& a = doc.at("agents").at(name);
      AgentRuntime rt;
      rt.params = PolicyParams::from_json(a.at("params"));
      rt.actor = std::make_shared<const Snapshot>(Snapshot::from_json(a.at("actor")));
      rt.matches_since_refresh = a.at("matches_since_refresh").get<int>();
      e->agents_[name] = std::move(rt);
    }
    if (!fs::exists(e->dir_ / "config.json"))
      write_atomic(e->dir_ / "config.json", cfg.to_json().dump(2) + "\n");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw StateFileError("state file " + state_file.string() + " is malformed: " + ex.what());
  }
}

LoadedLeague load_league_state(const fs::path& state_file, bool include_initial) {
  nlohmann::json doc;
  try {
    std::ifstream in(state_file);
    if (!in) throw StateFileError("cannot open state file " + state_file.string());
    doc = nlohmann::json::parse(in);
    LoadedLeague out;
    out.config = ExperimentConfig::from_json(doc.at("config"));
    out.spec = out.config.game();
    const LeagueManager lm = LeagueManager::from_json(doc.at("league"));
    for (const auto& id : lm.frozen_ids()) {
      const ModelRecord& r = lm.record(id);
      const bool initial = ModelId::parse(id).parent == "None";
      if (!r.agent.empty() && r.agent == LeagueManager::kMainAgentName) out.main_lineage.push_back(r.snapshot);
      if (initial && !include_initial) continue;
      out.members.push_back(r.snapshot);
      out.roles.push_back(initial ? "initial" : to_string(r.role));
    }
    for (const auto& name : lm.agent_names()) {
      const AgentState& st = lm.agent(name);
      auto snap = make_snapshot(PolicyParams::from_json(doc.at("agents").at(name).at("params")),
                                st.model_id, st.spec.tags);
      if (name == LeagueManager::kMainAgentName) out.main_lineage.push_back(snap);
      out.members.push_back(std::move(snap));
      out.roles.push_back(to_string(st.spec.role));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw StateFileError("state file " + state_file.string() + " is malformed: " + e.what());
  }
}

RunManifest train(const ExperimentConfig& cfg, const fs::path& artifact_dir) {
  Experiment e(cfg, artifact_dir);
  return e.run();
}

// ---------------------------------------------------------------------------
// Ablation

nlohmann::json AblationRow::to_json() const {
  return {{"template", template_name}, {"league_rpp", league_rpp}, {"league_rpp_se", league_rpp_se},
          {"ma_rpp", ma_rpp},          {"ma_rpp_se", ma_rpp_se},   {"diversity_entropy", diversity_entropy},
          {"error", error}};
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) rs.push_back(r.to_json());
  return {{"reference", reference}, {"rows", rs}};
}

void AblationReport::write_csv(std::ostream& out) const {
  out << "template,league_rpp,league_rpp_se,ma_rpp,ma_rpp_se,diversity_entropy,error\n";
  for (const auto& r : rows)
    out << r.template_name << ',' << r.league_rpp << ',' << r.league_rpp_se << ',' << r.ma_rpp << ','
        << r.ma_rpp_se << ',' << r.diversity_entropy << ',' << r.error << '\n';
}

double exploiter_diversity(const fs::path& match_log, int num_moves, int tag_count) {
  std::ifstream in(match_log);
  if (!in) throw std::runtime_error("cannot read match log " + match_log.string());
  std::vector<MatchLogRecord> log;
  for (auto& r : read_match_log(in))
    if (r.agent != LeagueManager::kMainAgentName) log.push_back(std::move(r));
  return diversity_report(log, tag_move_classifier(num_moves, tag_count)).pooled_entropy;
}

AblationReport ablation(const ExperimentConfig& base, const std::vector<std::string>& templates,
                        const fs::path& artifact_dir, const AblationOptions& opts) {
  struct Trained {
    std::vector<SnapshotPtr> league;
    std::vector<SnapshotPtr> lineage;
    double diversity = 0.0;
    std::string error;
  };
  std::vector<std::string> names = templates;
  if (std::find(names.begin(), names.end(), opts.reference) == names.end())
    names.insert(names.begin(), opts.reference);

  std::map<std::string, Trained> trained;
  for (const auto& name : names) {
    Trained t;
    try {
      ExperimentConfig cfg = base;
      cfg.league_template = name;
      cfg.write_match_log = true;
      Experiment e(cfg, artifact_dir / name);
      e.run();
      t.league = e.league_members(false);
      t.lineage = e.main_agent_lineage();
      t.diversity = exploiter_diversity(e.match_log_path(), cfg.num_moves, cfg.num_tags + 1);
    } catch (const std::exception& ex) {
      t.error = ex.what();
    }
    trained[name] = std::move(t);
  }

  AblationReport rep;
  rep.reference = opts.reference;
  const GameSpec spec = base.game();
  const Trained& ref = trained.at(opts.reference);
  for (const auto& name : names) {
    AblationRow row;
    row.template_name = name;
    const Trained& t = trained.at(name);
    row.error = t.error;
    if (row.error.empty() && !ref.error.empty()) row.error = "reference failed: " + ref.error;
    if (row.error.empty()) {
      try {
        const std::uint64_t s = derive_seed({base.seed, 0x61626cULL});
        const RppResult league = rpp(t.league, ref.league, spec, opts.eval_matches, s, base.workers,
                                     opts.bootstrap);
        const RppResult ma = rpp(t.lineage, ref.lineage, spec, opts.eval_matches, s + 1, base.workers,
                                 opts.bootstrap);
        row.league_rpp = league.value;
        row.league_rpp_se = league.standard_error;
        row.ma_rpp = ma.value;
        row.ma_rpp_se = ma.standard_error;
        row.diversity_entropy = t.diversity;
      } catch (const std::exception& ex) {
        row.error = ex.what();
      }
    }
    rep.rows.push_back(std::move(row));
  }

  fs::create_directories(artifact_dir);
  write_atomic(artifact_dir / "ablation.json", rep.to_json().dump(2) + "\n");
  std::ostringstream csv;
  rep.write_csv(csv);
  write_atomic(artifact_dir / "ablation.csv", csv.str());
  return rep;
}

}  // namespace dlt
