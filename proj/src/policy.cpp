#include "dlt/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dlt {

// ---------------------------------------------------------------------------
// Scripted bots

namespace {

const char* bot_name(BotKind kind) {
  switch (kind) {
    case BotKind::kPure: return "pure";
    case BotKind::kCounterLast: return "counter_last";
    case BotKind::kElite: return "elite";
    case BotKind::kUniform: return "uniform";
    case BotKind::kCycle: return "cycle";
  }
  return "?";
}

BotKind bot_kind_from_name(const std::string& name) {
  for (auto k : {BotKind::kPure, BotKind::kCounterLast, BotKind::kElite,
                 BotKind::kUniform, BotKind::kCycle})
    if (name == bot_name(k)) return k;
  throw DomainError("unknown scripted bot: " + name);
}

}  // namespace

ScriptedBot::ScriptedBot(BotKind kind, int num_moves, Move pure_move)
    : kind_(kind), num_moves_(num_moves), pure_move_(pure_move) {
  if (num_moves < 2) throw DomainError("scripted bot: num_moves must be >= 2");
  if (kind == BotKind::kPure && (pure_move < 0 || pure_move >= num_moves))
    throw DomainError("scripted bot: pure move out of range");
}

Distribution ScriptedBot::distribution(const PlayerView& view, int) const {
  const auto m = static_cast<std::size_t>(num_moves_);
  Distribution uniform(m, 1.0 / num_moves_);
  Distribution d(m, 0.0);
  switch (kind_) {
    case BotKind::kPure:
      d[pure_move_] = 1.0;
      return d;
    case BotKind::kUniform:
      return uniform;
    case BotKind::kCounterLast:
      if (!view.opponent_last) return uniform;
      d[(*view.opponent_last + 1) % num_moves_] = 1.0;
      return d;
    case BotKind::kElite: {
      if (!view.opponent_last) return uniform;
      for (auto& p : d) p = (1.0 - kEliteCounterProb) / num_moves_;
      d[(*view.opponent_last + 1) % num_moves_] += kEliteCounterProb;
      return d;
    }
    case BotKind::kCycle:
      if (!view.own_last) return uniform;
      d[(*view.own_last + 1) % num_moves_] = 1.0;
      return d;
  }
  return uniform;
}

nlohmann::json ScriptedBot::to_json() const {
  nlohmann::json doc = {{"kind", "scripted"}, {"bot", bot_name(kind_)}, {"m", num_moves_}};
  if (kind_ == BotKind::kPure) doc["move"] = pure_move_;
  return doc;
}

PolicyPtr scripted_bot(BotKind kind, int num_moves, Move pure_move) {
  return std::make_shared<const ScriptedBot>(kind, num_moves, pure_move);
}

// ---------------------------------------------------------------------------
// Tabular policy

int StateEncoder::encode(const PlayerView& view) const {
  const int bucket =
      view.score < -kBucketThreshold ? 0 : (view.score > kBucketThreshold ? 2 : 1);
  int pair = 0;
  if (view.own_last && view.opponent_last)
    pair = 1 + *view.own_last * num_moves + *view.opponent_last;
  return bucket * (num_moves * num_moves + 1) + pair;
}

PlayerView StateEncoder::decode(int state, int step_index) const {
  const int per_bucket = num_moves * num_moves + 1;
  PlayerView v;
  v.step_index = step_index;
  v.score = static_cast<double>(state / per_bucket - 1);
  const int pair = state % per_bucket;
  if (pair > 0) {
    v.own_last = (pair - 1) / num_moves;
    v.opponent_last = (pair - 1) % num_moves;
  }
  return v;
}

PolicyParams::PolicyParams(int num_moves, int tag_count)
    : encoder_{num_moves}, tag_count_(tag_count) {
  if (num_moves < 2) throw DomainError("policy: num_moves must be >= 2");
  if (tag_count < 1) throw DomainError("policy: tag_count must be >= 1");
  const auto slots = static_cast<std::size_t>(encoder_.num_states() * tag_count);
  logits_.assign(slots * num_moves, 0.0);
  values_.assign(slots, 0.0);
}

std::size_t PolicyParams::slot(int state, int tag) const {
  if (state < 0 || state >= num_states()) throw std::out_of_range("policy: state out of range");
  if (tag < 0 || tag >= tag_count_) throw std::out_of_range("policy: tag out of range");
  return static_cast<std::size_t>(state) * tag_count_ + tag;
}

Distribution softmax(const double* logits, int n) {
  const double hi = *std::max_element(logits, logits + n);
  Distribution p(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += (p[i] = std::exp(logits[i] - hi));
  for (auto& x : p) x /= total;
  return p;
}

Distribution PolicyParams::probs(int state, int tag) const {
  return softmax(logits_.data() + logit_offset(state, tag), num_moves());
}

Distribution PolicyParams::distribution(const PlayerView& view, int tag) const {
  return probs(encoder_.encode(view), tag);
}

void PolicyParams::clamp_logits() {
  for (auto& z : logits_) z = std::clamp(z, -kLogitClamp, kLogitClamp);
}

nlohmann::json PolicyParams::to_json() const {
  return {{"kind", "tabular"},      {"version", kVersion}, {"m", num_moves()},
          {"tag_count", tag_count_}, {"logits", logits_},  {"values", values_}};
}

PolicyParams PolicyParams::from_json(const nlohmann::json& doc) {
  if (doc.value("version", 0) != kVersion) throw DomainError("policy: unsupported version");
  PolicyParams p(doc.at("m").get<int>(), doc.at("tag_count").get<int>());
  auto logits = doc.at("logits").get<std::vector<double>>();
  auto values = doc.at("values").get<std::vector<double>>();
  if (logits.size() != p.logits_.size() || values.size() != p.values_.size())
    throw DomainError("policy: table size mismatch");
  p.logits_ = std::move(logits);
  p.values_ = std::move(values);
  return p;
}

PolicyPtr policy_from_json(const nlohmann::json& doc) {
  const auto kind = doc.at("kind").get<std::string>();
  if (kind == "tabular") return std::make_shared<const PolicyParams>(PolicyParams::from_json(doc));
  if (kind == "scripted")
    return scripted_bot(bot_kind_from_name(doc.at("bot").get<std::string>()),
                        doc.at("m").get<int>(), doc.value("move", 0));
  throw DomainError("unknown policy kind: " + kind);
}

// ---------------------------------------------------------------------------
// Strategy tags

void StrategyTagConfig::validate() const {
  if (!(zero_tag_prob >= 0.0 && zero_tag_prob <= 1.0))
    throw DomainError("tags: zero_tag_prob must lie in [0, 1]");
  if (zero_tag_prob < 1.0 && tag_pool.empty())
    throw DomainError("tags: empty pool with zero_tag_prob < 1");
  double total = 0.0;
  for (const auto& [tag, w] : tag_pool) {
    if (tag < 0) throw DomainError("tags: negative tag");
    if (!(w > 0.0)) throw DomainError("tags: pool weights must be positive");
    total += w;
  }
  if (!tag_pool.empty() && std::abs(total - 1.0) > 1e-9)
    throw DomainError("tags: pool weights must sum to 1");
}

int StrategyTagConfig::sample(Rng& rng) const {
  const double u = uniform01(rng);
  if (u < zero_tag_prob || tag_pool.empty()) return 0;
  double v = uniform01(rng);
  for (const auto& [tag, w] : tag_pool) {
    if (v < w) return tag;
    v -= w;
  }
  return tag_pool.back().first;
}

StrategyTagConfig StrategyTagConfig::only(int tag) {
  if (tag == 0) return {1.0, {}};
  return {0.0, {{tag, 1.0}}};
}

StrategyTagConfig StrategyTagConfig::mixed(double zero_tag_prob, int num_tags) {
  StrategyTagConfig cfg{zero_tag_prob, {}};
  for (int k = 1; k <= num_tags; ++k) cfg.tag_pool.emplace_back(k, 1.0 / num_tags);
  if (num_tags == 0) cfg.zero_tag_prob = 1.0;
  cfg.validate();
  return cfg;
}

nlohmann::json StrategyTagConfig::to_json() const {
  nlohmann::json pool = nlohmann::json::array();
  for (const auto& [tag, w] : tag_pool) pool.push_back({tag, w});
  return {{"zero_tag_prob", zero_tag_prob}, {"pool", pool}};
}

StrategyTagConfig StrategyTagConfig::from_json(const nlohmann::json& doc) {
  StrategyTagConfig cfg;
  cfg.zero_tag_prob = doc.at("zero_tag_prob").get<double>();
  for (const auto& e : doc.at("pool")) cfg.tag_pool.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Snapshots

nlohmann::json Snapshot::to_json() const {
  return {{"model_id", model_id}, {"policy", policy->to_json()}, {"tags", tags.to_json()}};
}

Snapshot Snapshot::from_json(const nlohmann::json& doc) {
  return {doc.at("model_id").get<std::string>(), policy_from_json(doc.at("policy")),
          StrategyTagConfig::from_json(doc.at("tags"))};
}

SnapshotPtr make_snapshot(const PolicyParams& params, std::string model_id,
                          StrategyTagConfig tags) {
  return make_snapshot(std::make_shared<const PolicyParams>(params), std::move(model_id),
                       std::move(tags));
}

SnapshotPtr make_snapshot(PolicyPtr policy, std::string model_id, StrategyTagConfig tags) {
  tags.validate();
  return std::make_shared<const Snapshot>(
      Snapshot{std::move(model_id), std::move(policy), std::move(tags)});
}

SnapshotPtr SnapshotRegistry::freeze(const PolicyParams& params, const std::string& model_id,
                                     StrategyTagConfig tags) {
  auto snap = make_snapshot(params, model_id, std::move(tags));
  add(snap);
  return snap;
}

void SnapshotRegistry::add(SnapshotPtr snapshot) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = items_.emplace(snapshot->model_id, snapshot);
  if (!inserted) throw DomainError("snapshot id already registered: " + snapshot->model_id);
}

SnapshotPtr SnapshotRegistry::get(const std::string& model_id) const {
  std::lock_guard lock(mu_);
  auto it = items_.find(model_id);
  if (it == items_.end()) throw DomainError("unknown snapshot id: " + model_id);
  return it->second;
}

bool SnapshotRegistry::contains(const std::string& model_id) const {
  std::lock_guard lock(mu_);
  return items_.count(model_id) > 0;
}

std::vector<std::string> SnapshotRegistry::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : items_) out.push_back(id);
  return out;
}

std::size_t SnapshotRegistry::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

// ---------------------------------------------------------------------------
// Rollouts

ActionSample sample_from(const Distribution& dist, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    acc += dist[a];
    if (u < acc && dist[a] > 0.0) return {static_cast<Move>(a), dist[a]};
  }
  // Rounding left u above the running total; take the last supported move.
  for (std::size_t a = dist.size(); a-- > 0;)
    if (dist[a] > 0.0) return {static_cast<Move>(a), dist[a]};
  throw DomainError("sample_from: distribution has no support");
}

ActionSample sample_action(const Policy& policy, const PlayerView& view, int tag, Rng& rng) {
  return sample_from(policy.distribution(view, tag), rng);
}

namespace {

TrajectoryStep make_step(const GameSpec& spec, const PlayerView& view,
                         int tag, ActionSample s, const RuleSet& rules) {
  TrajectoryStep st;
  st.encoded_state = StateEncoder{spec.num_moves}.encode(view);
  st.tag = tag;
  st.action = s.action;
  st.behavior_prob = s.prob;
  st.step_index = view.step_index;
  if (auto expert = critical_oracle(spec, view, rules)) {
    st.critical = true;
    st.expert = std::move(*expert);
  }
  return st;
}

}  // namespace

RolloutResult rollout(const GameSpec& spec, const Snapshot& p1, const Snapshot& p2,
                      std::pair<int, int> tags, std::uint64_t seed, const RuleSet& rules) {
  if (p1.policy->num_moves() != spec.num_moves || p2.policy->num_moves() != spec.num_moves)
    throw DomainError("rollout: policy move count does not match the game");
  Rng rng(seed);
  RolloutResult out;
  out.p1.model_id = p1.model_id;
  out.p2.model_id = p2.model_id;
  out.p1.steps.reserve(spec.horizon);
  out.p2.steps.reserve(spec.horizon);

  GameState state;
  while (!is_terminal(spec, state)) {
    const PlayerView v1 = view_for(state, Seat::kFirst);
    const PlayerView v2 = view_for(state, Seat::kSecond);
    const ActionSample a1 = sample_action(*p1.policy, v1, tags.first, rng);
    const ActionSample a2 = sample_action(*p2.policy, v2, tags.second, rng);
    out.p1.steps.push_back(make_step(spec, v1, tags.first, a1, rules));
    out.p2.steps.push_back(make_step(spec, v2, tags.second, a2, rules));
    StepResult r = step(spec, state, a1.action, a2.action, rng);
    out.p1.steps.back().reward = r.reward_p1;
    out.p2.steps.back().reward = r.reward_p2;
    state = r.state;
  }
  out.outcome = static_cast<int>(out.p1.steps.back().reward);
  out.p1.outcome = out.outcome;
  out.p2.outcome = -out.outcome;
  return out;
}

RolloutResult rollout(const GameSpec& spec, const Snapshot& p1, const Snapshot& p2,
                      std::uint64_t seed, const RuleSet& rules) {
  Rng tag_rng(derive_seed({seed, 0x74616773ULL}));
  const int t1 = p1.tags.sample(tag_rng);
  const int t2 = p2.tags.sample(tag_rng);
  return rollout(spec, p1, p2, {t1, t2}, seed, rules);
}

}  // namespace dlt
