#include "dlt/league.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dlt {

namespace {

constexpr Role kAllRoles[] = {Role::kMA, Role::kME, Role::kLE, Role::kSE, Role::kEE, Role::kAEE};
constexpr MatchBranch kAllBranches[] = {MatchBranch::kSelfPlay,  MatchBranch::kPfsp,
                                        MatchBranch::kForgotten, MatchBranch::kMainAgent,
                                        MatchBranch::kMainHistory, MatchBranch::kLeague};

std::string numbered(const std::string& agent, int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", n);
  return agent + "-" + buf;
}

}  // namespace

std::string to_string(Role role) {
  switch (role) {
    case Role::kMA: return "MA";
    case Role::kME: return "ME";
    case Role::kLE: return "LE";
    case Role::kSE: return "SE";
    case Role::kEE: return "EE";
    case Role::kAEE: return "AEE";
  }
  return "?";
}

Role role_from_string(const std::string& name) {
  for (Role r : kAllRoles)
    if (to_string(r) == name) return r;
  throw DomainError("unknown role: " + name);
}

std::string to_string(MatchBranch b) {
  switch (b) {
    case MatchBranch::kSelfPlay: return "self_play";
    case MatchBranch::kPfsp: return "pfsp";
    case MatchBranch::kForgotten: return "forgotten";
    case MatchBranch::kMainAgent: return "main_agent";
    case MatchBranch::kMainHistory: return "main_history";
    case MatchBranch::kLeague: return "league";
  }
  return "?";
}

MatchBranch branch_from_string(const std::string& name) {
  for (MatchBranch b : kAllBranches)
    if (to_string(b) == name) return b;
  throw DomainError("unknown match branch: " + name);
}

ModelId ModelId::parse(const std::string& id) {
  const auto colon = id.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == id.size())
    throw DomainError("model id must look like parent:child, got " + id);
  return {id.substr(0, colon), id.substr(colon + 1)};
}

// ---------------------------------------------------------------------------

void RoleConfig::validate() const {
  if (min_period_steps <= 0) throw DomainError("roles: min_period_steps must be > 0");
  if (max_period_steps < min_period_steps)
    throw DomainError("roles: max_period_steps must be >= min_period_steps");
  if (!(0.0 < aee_low && aee_low < aee_high && aee_high < win_threshold && win_threshold <= 1.0))
    throw DomainError("roles: need 0 < aee_low < aee_high < win_threshold <= 1");
  for (double p : {mix_self_play, mix_pfsp, mix_forgotten})
    if (!(p >= 0.0)) throw DomainError("roles: mixture weights must be >= 0");
  if (std::abs(mix_self_play + mix_pfsp + mix_forgotten - 1.0) > 1e-9)
    throw DomainError("roles: MA mixture must sum to 1");
  if (!(pfsp_exponent >= 0.0)) throw DomainError("roles: pfsp_exponent must be >= 0");
  if (ma_snapshot_steps <= 0) throw DomainError("roles: ma_snapshot_steps must be > 0");
  if (winrate_window == 0) throw DomainError("roles: winrate_window must be > 0");
  if (!(se_distill_boost >= 0.0)) throw DomainError("roles: se_distill_boost must be >= 0");
}

nlohmann::json RoleConfig::to_json() const {
  return {{"min_period_steps", min_period_steps},
          {"max_period_steps", max_period_steps},
          {"check_interval", check_interval},
          {"win_threshold", win_threshold},
          {"aee_window", {aee_low, aee_high}},
          {"ma_snapshot_steps", ma_snapshot_steps},
          {"ma_mixture", {{"self_play", mix_self_play}, {"pfsp", mix_pfsp}, {"forgotten", mix_forgotten}}},
          {"pfsp_exponent", pfsp_exponent},
          {"forgotten_threshold", forgotten_threshold},
          {"exploiter_fallback_threshold", exploiter_fallback_threshold},
          {"winrate_window", winrate_window},
          {"se_distill_boost", se_distill_boost}};
}

RoleConfig RoleConfig::from_json(const nlohmann::json& doc) { return from_json(doc, RoleConfig{}); }

RoleConfig RoleConfig::from_json(const nlohmann::json& doc, RoleConfig c) {
  c.min_period_steps = doc.value("min_period_steps", c.min_period_steps);
  c.max_period_steps = doc.value("max_period_steps", c.max_period_steps);
  c.check_interval = doc.value("check_interval", c.check_interval);
  c.win_threshold = doc.value("win_threshold", c.win_threshold);
  if (doc.contains("aee_window")) {
    c.aee_low = doc["aee_window"].at(0).get<double>();
    c.aee_high = doc["aee_window"].at(1).get<double>();
  }
  c.ma_snapshot_steps = doc.value("ma_snapshot_steps", c.ma_snapshot_steps);
  if (doc.contains("ma_mixture")) {
    const auto& mix = doc["ma_mixture"];
    c.mix_self_play = mix.value("self_play", c.mix_self_play);
    c.mix_pfsp = mix.value("pfsp", c.mix_pfsp);
    c.mix_forgotten = mix.value("forgotten", c.mix_forgotten);
  }
  c.pfsp_exponent = doc.value("pfsp_exponent", c.pfsp_exponent);
  c.forgotten_threshold = doc.value("forgotten_threshold", c.forgotten_threshold);
  c.exploiter_fallback_threshold =
      doc.value("exploiter_fallback_threshold", c.exploiter_fallback_threshold);
  c.winrate_window = doc.value("winrate_window", c.winrate_window);
  c.se_distill_boost = doc.value("se_distill_boost", c.se_distill_boost);
  return c;
}

// ---------------------------------------------------------------------------
// Win rates

double WinStats::win_rate(double prior) const {
  const auto n = count();
  if (n == 0) return prior;
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(draws)) / static_cast<double>(n);
}

WinRateTable::WinRateTable(const WinRateTable& other) : window_(other.window_) {
  std::shared_lock lock(other.mu_);
  results_ = other.results_;
}

WinRateTable& WinRateTable::operator=(const WinRateTable& other) {
  if (this == &other) return *this;
  std::map<Key, std::deque<int>> copy;
  {
    std::shared_lock lock(other.mu_);
    copy = other.results_;
  }
  std::unique_lock lock(mu_);
  window_ = other.window_;
  results_ = std::move(copy);
  return *this;
}

std::pair<WinRateTable::Key, bool> WinRateTable::key_for(const std::string& a,
                                                         const std::string& b) {
  if (a <= b) return {{a, b}, false};
  return {{b, a}, true};
}

void WinRateTable::record(const std::string& a, const std::string& b, int outcome) {
  if (outcome < -1 || outcome > 1) throw DomainError("win rates: outcome must be -1, 0 or +1");
  if (a == b) throw DomainError("win rates: a model cannot be recorded against itself");
  auto [key, flipped] = key_for(a, b);
  std::unique_lock lock(mu_);
  auto& window = results_[key];
  window.push_back(flipped ? -outcome : outcome);
  while (window.size() > window_) window.pop_front();
}

WinStats WinRateTable::stats(const std::string& a, const std::string& b) const {
  auto [key, flipped] = key_for(a, b);
  std::shared_lock lock(mu_);
  WinStats s;
  auto it = results_.find(key);
  if (it == results_.end()) return s;
  for (int o : it->second) {
    const int v = flipped ? -o : o;
    if (v > 0) ++s.wins;
    else if (v < 0) ++s.losses;
    else ++s.draws;
  }
  return s;
}

double WinRateTable::win_rate(const std::string& a, const std::string& b, double prior) const {
  return stats(a, b).win_rate(prior);
}

WinStats WinRateTable::pooled(const std::string& a) const {
  std::vector<std::string> opponents;
  {
    std::shared_lock lock(mu_);
    for (const auto& [key, _] : results_) {
      if (key.first == a) opponents.push_back(key.second);
      else if (key.second == a) opponents.push_back(key.first);
    }
  }
  WinStats total;
  for (const auto& o : opponents) {
    const WinStats s = stats(a, o);
    total.wins += s.wins;
    total.draws += s.draws;
    total.losses += s.losses;
  }
  return total;
}

nlohmann::json WinRateTable::to_json() const {
  std::shared_lock lock(mu_);
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [key, window] : results_)
    pairs.push_back({{"a", key.first}, {"b", key.second}, {"results", window}});
  return {{"window", window_}, {"pairs", pairs}};
}

WinRateTable WinRateTable::from_json(const nlohmann::json& doc) {
  WinRateTable t(doc.at("window").get<std::size_t>());
  for (const auto& p : doc.at("pairs")) {
    auto& w = t.results_[{p.at("a").get<std::string>(), p.at("b").get<std::string>()}];
    for (int o : p.at("results")) w.push_back(o);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Registry and lineage

nlohmann::json ModelRecord::to_json() const {
  nlohmann::json doc = {{"model_id", model_id},   {"agent", agent},
                        {"role", to_string(role)}, {"period_index", period_index},
                        {"frozen", frozen},        {"initial_model", initial_model},
                        {"tags", tags.to_json()}};
  if (snapshot) doc["snapshot"] = snapshot->to_json();
  return doc;
}

ModelRecord ModelRecord::from_json(const nlohmann::json& doc) {
  ModelRecord r;
  r.model_id = doc.at("model_id").get<std::string>();
  r.agent = doc.at("agent").get<std::string>();
  r.role = role_from_string(doc.at("role").get<std::string>());
  r.period_index = doc.at("period_index").get<int>();
  r.frozen = doc.at("frozen").get<bool>();
  r.initial_model = doc.at("initial_model").get<std::string>();
  r.tags = StrategyTagConfig::from_json(doc.at("tags"));
  if (doc.contains("snapshot"))
    r.snapshot = std::make_shared<const Snapshot>(Snapshot::from_json(doc["snapshot"]));
  return r;
}

void LineageTree::add(const std::string& id, const std::string& parent, int period) {
  if (contains(id)) throw DomainError("lineage: duplicate node " + id);
  if (!parent.empty() && !contains(parent)) throw DomainError("lineage: unknown parent " + parent);
  nodes_.push_back({id, parent, period});
  leaf_set_.insert(id);
  if (!parent.empty()) mark_inherited(parent);
}

void LineageTree::mark_inherited(const std::string& id) {
  if (!contains(id)) throw DomainError("lineage: unknown node " + id);
  inherited_.insert(id);
  leaf_set_.erase(id);
}

bool LineageTree::contains(const std::string& id) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.id == id; });
}

std::vector<std::string> LineageTree::leaves() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (leaf_set_.count(n.id)) out.push_back(n.id);
  return out;
}

std::vector<std::string> LineageTree::recompute_leaves() const {
  std::set<std::string> has_child(inherited_.begin(), inherited_.end());
  for (const auto& n : nodes_)
    if (!n.parent.empty()) has_child.insert(n.parent);
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (!has_child.count(n.id)) out.push_back(n.id);
  return out;
}

nlohmann::json LineageTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) nodes.push_back({{"id", n.id}, {"parent", n.parent}, {"period", n.period}});
  return {{"nodes", nodes}, {"inherited", inherited_}};
}

LineageTree LineageTree::from_json(const nlohmann::json& doc) {
  LineageTree t;
  for (const auto& n : doc.at("nodes")) {
    t.nodes_.push_back({n.at("id").get<std::string>(), n.at("parent").get<std::string>(),
                        n.at("period").get<int>()});
    t.leaf_set_.insert(t.nodes_.back().id);
  }
  for (const auto& id : doc.at("inherited")) {
    t.inherited_.insert(id.get<std::string>());
    t.leaf_set_.erase(id.get<std::string>());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Period decisions

bool period_trigger(double win_rate_vs_target, std::int64_t steps_in_period,
                    const RoleConfig& cfg) {
  if (steps_in_period < cfg.min_period_steps) return false;
  return win_rate_vs_target > cfg.win_threshold || steps_in_period >= cfg.max_period_steps;
}

PeriodDecision aee_period_decision(const std::vector<CandidateRate>& leaves,
                                   const RoleConfig& cfg, bool freeze) {
  const CandidateRate* best = nullptr;
  double best_gap = 0.0;
  for (const auto& leaf : leaves) {
    if (leaf.win_rate < cfg.aee_low || leaf.win_rate > cfg.aee_high) continue;
    const double gap = std::abs(cfg.aee_high - leaf.win_rate);
    if (best == nullptr || gap < best_gap || (gap == best_gap && leaf.period > best->period)) {
      best = &leaf;
      best_gap = gap;
    }
  }
  if (best == nullptr) return PeriodDecision::reset(freeze);
  return PeriodDecision::inherit(best->id, freeze);
}

PeriodDecision aee_period_decision(const LineageTree& tree, const WinRateTable& rates,
                                   const std::string& live_ma_id, const RoleConfig& cfg) {
  std::vector<CandidateRate> leaves;
  for (const auto& id : tree.leaves()) {
    const WinStats s = rates.stats(id, live_ma_id);
    if (s.count() == 0) continue;  // no evidence against the live MA
    int period = 0;
    for (const auto& n : tree.nodes())
      if (n.id == id) period = n.period;
    leaves.push_back({id, period, s.win_rate()});
  }
  return aee_period_decision(leaves, cfg, false);
}

PeriodDecision ee_best_historical(const std::vector<CandidateRate>& history, bool freeze) {
  const CandidateRate* best = nullptr;
  for (const auto& h : history)
    if (best == nullptr || h.win_rate > best->win_rate ||
        (h.win_rate == best->win_rate && h.period > best->period))
      best = &h;
  if (best == nullptr) return PeriodDecision::reset(freeze);
  return PeriodDecision::inherit(best->id, freeze);
}

PeriodDecision ee_period_decision(const std::vector<CandidateRate>& history,
                                  const CandidateRate& current, std::int64_t steps_in_period,
                                  const RoleConfig& cfg) {
  if (!period_trigger(current.win_rate, steps_in_period, cfg)) return PeriodDecision::keep();
  std::vector<CandidateRate> all = history;
  all.push_back(current);
  return ee_best_historical(all, true);
}

PeriodDecision standard_reset_decision(double win_rate_vs_target, std::int64_t steps_in_period,
                                       const RoleConfig& cfg) {
  if (!period_trigger(win_rate_vs_target, steps_in_period, cfg)) return PeriodDecision::keep();
  return PeriodDecision::reset(true);
}

// ---------------------------------------------------------------------------
// Agents

nlohmann::json AgentSpec::to_json() const {
  return {{"name", name},
          {"role", to_string(role)},
          {"matching", matching == Matching::kLeague ? "league" : "main_agent"},
          {"initial_model", initial_model},
          {"tags", tags.to_json()},
          {"distill_scale", distill_scale},
          {"use_rgps", use_rgps}};
}

AgentSpec AgentSpec::from_json(const nlohmann::json& doc) {
  AgentSpec s;
  s.name = doc.at("name").get<std::string>();
  s.role = role_from_string(doc.at("role").get<std::string>());
  s.matching = doc.at("matching").get<std::string>() == "league" ? Matching::kLeague
                                                                 : Matching::kMainAgent;
  s.initial_model = doc.at("initial_model").get<std::string>();
  s.tags = StrategyTagConfig::from_json(doc.at("tags"));
  s.distill_scale = doc.at("distill_scale").get<double>();
  s.use_rgps = doc.at("use_rgps").get<bool>();
  return s;
}

nlohmann::json AgentState::to_json() const {
  return {{"spec", spec.to_json()},
          {"model_id", model_id},
          {"period_index", period_index},
          {"model_counter", model_counter},
          {"steps_in_period", steps_in_period},
          {"total_steps", total_steps},
          {"steps_since_snapshot", steps_since_snapshot},
          {"next_check", next_check},
          {"teacher_id", teacher_id},
          {"prev_model_id", prev_model_id},
          {"tree", tree.to_json()}};
}

AgentState AgentState::from_json(const nlohmann::json& doc) {
  AgentState s;
  s.spec = AgentSpec::from_json(doc.at("spec"));
  s.model_id = doc.at("model_id").get<std::string>();
  s.period_index = doc.at("period_index").get<int>();
  s.model_counter = doc.at("model_counter").get<int>();
  s.steps_in_period = doc.at("steps_in_period").get<std::int64_t>();
  s.total_steps = doc.at("total_steps").get<std::int64_t>();
  s.steps_since_snapshot = doc.at("steps_since_snapshot").get<std::int64_t>();
  s.next_check = doc.at("next_check").get<std::int64_t>();
  s.teacher_id = doc.at("teacher_id").get<std::string>();
  s.prev_model_id = doc.at("prev_model_id").get<std::string>();
  s.tree = LineageTree::from_json(doc.at("tree"));
  return s;
}

// ---------------------------------------------------------------------------
// PFSP

std::vector<double> pfsp_weights(const std::vector<double>& win_rates, double exponent) {
  std::vector<double> w;
  w.reserve(win_rates.size());
  double total = 0.0;
  for (double p : win_rates) {
    const double x = std::pow(std::clamp(1.0 - p, 0.0, 1.0), exponent);
    w.push_back(x);
    total += x;
  }
  if (total == 0.0) std::fill(w.begin(), w.end(), 1.0);
  return w;
}

std::size_t pfsp_pick(const std::vector<double>& win_rates, double exponent, Rng& rng) {
  if (win_rates.empty()) throw DomainError("pfsp: no candidates");
  const std::vector<double> w = pfsp_weights(win_rates, exponent);
  double total = 0.0;
  for (double x : w) total += x;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0 && u < w[i]) return i;
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return i;
  return w.size() - 1;
}

// ---------------------------------------------------------------------------
// League manager

LeagueManager::LeagueManager(RoleConfig cfg) : cfg_(cfg), rates_(cfg.winrate_window) {
  cfg_.validate();
}

std::string LeagueManager::add_initial_model(const std::string& name, SnapshotPtr snapshot) {
  const std::string id = ModelId{"None", name}.str();
  if (models_.count(id)) throw DomainError("league: duplicate initial model " + id);
  ModelRecord r;
  r.model_id = id;
  r.role = Role::kMA;
  r.period_index = 0;
  r.frozen = true;
  r.initial_model = id;
  r.tags = snapshot->tags;
  r.snapshot = make_snapshot(snapshot->policy, id, snapshot->tags);
  models_.emplace(id, std::move(r));
  order_.push_back(id);
  return id;
}

void LeagueManager::add_agent(const AgentSpec& spec) {
  if (agents_.count(spec.name)) throw DomainError("league: duplicate agent " + spec.name);
  if (spec.name.find(':') != std::string::npos) throw DomainError("league: agent names cannot contain ':'");
  if (!is_registered(spec.initial_model) || !record(spec.initial_model).frozen)
    throw DomainError("league: unknown initial model " + spec.initial_model);
  if (agents_.empty() && spec.role != Role::kMA)
    throw DomainError("league: the main agent must be added first");
  if (spec.role == Role::kMA && spec.name != kMainAgentName)
    throw DomainError("league: the main agent must be named MA");
  spec.tags.validate();

  AgentState st;
  st.spec = spec;
  st.teacher_id = spec.initial_model;
  st.next_check = cfg_.min_period_steps;
  const std::string init_child = ModelId::parse(spec.initial_model).child;
  if (spec.role == Role::kMA) {
    st.model_id = ModelId{init_child, kMainAgentName}.str();
    ModelRecord r{st.model_id, spec.name, spec.role, 0, false, spec.initial_model, spec.tags, nullptr};
    models_.emplace(st.model_id, std::move(r));
    order_.push_back(st.model_id);
  } else {
    start_model(st, init_child);
  }
  agents_.emplace(spec.name, std::move(st));
  agent_order_.push_back(spec.name);
}

std::string LeagueManager::start_model(AgentState& st, const std::string& parent_child) {
  st.model_id = ModelId{parent_child, numbered(st.spec.name, ++st.model_counter)}.str();
  if (models_.count(st.model_id)) throw DomainError("league: model id collision " + st.model_id);
  ModelRecord r{st.model_id, st.spec.name, st.spec.role, st.period_index, false,
                st.spec.initial_model, st.spec.tags, nullptr};
  models_.emplace(st.model_id, std::move(r));
  order_.push_back(st.model_id);
  return st.model_id;
}

const ModelRecord& LeagueManager::record(const std::string& model_id) const {
  auto it = models_.find(model_id);
  if (it == models_.end()) throw DomainError("league: unknown model id " + model_id);
  return it->second;
}

ModelRecord& LeagueManager::mutable_record(const std::string& model_id) {
  auto it = models_.find(model_id);
  if (it == models_.end()) throw DomainError("league: unknown model id " + model_id);
  if (it->second.frozen) throw std::logic_error("league: frozen record is immutable: " + model_id);
  return it->second;
}

bool LeagueManager::is_registered(const std::string& model_id) const {
  return models_.count(model_id) > 0;
}

std::vector<std::string> LeagueManager::frozen_ids() const {
  std::vector<std::string> out;
  for (const auto& id : order_)
    if (models_.at(id).frozen) out.push_back(id);
  return out;
}

std::vector<std::string> LeagueManager::model_ids() const { return order_; }

SnapshotPtr LeagueManager::snapshot(const std::string& model_id) const {
  const auto& r = record(model_id);
  if (!r.snapshot) throw DomainError("league: model is not frozen: " + model_id);
  return r.snapshot;
}

const AgentState& LeagueManager::agent(const std::string& name) const {
  auto it = agents_.find(name);
  if (it == agents_.end()) throw DomainError("league: unknown agent " + name);
  return it->second;
}

AgentState& LeagueManager::mutable_agent(const std::string& name) {
  auto it = agents_.find(name);
  if (it == agents_.end()) throw DomainError("league: unknown agent " + name);
  return it->second;
}

std::vector<std::string> LeagueManager::agent_names() const { return agent_order_; }

std::string LeagueManager::live_ma_id() const { return main_agent().model_id; }

std::vector<std::string> LeagueManager::agent_history(const std::string& agent_name) const {
  std::vector<std::string> out;
  for (const auto& id : order_) {
    const auto& r = models_.at(id);
    if (r.frozen && r.agent == agent_name) out.push_back(id);
  }
  return out;
}

std::vector<std::string> LeagueManager::forgotten_main_players() const {
  const std::string ma = live_ma_id();
  std::vector<std::string> out;
  for (const auto& id : agent_history(kMainAgentName)) {
    const WinStats s = rates_.stats(ma, id);
    if (s.count() > 0 && s.win_rate() < cfg_.forgotten_threshold) out.push_back(id);
  }
  return out;
}

double LeagueManager::win_rate_vs_target(const std::string& agent_name) const {
  const AgentState& st = agent(agent_name);
  if (st.spec.role == Role::kMA) return rates_.pooled(st.model_id).win_rate();
  if (st.spec.matching == Matching::kLeague) return rates_.pooled(st.model_id).win_rate();
  return rates_.win_rate(st.model_id, live_ma_id());
}

MatchDescriptor LeagueManager::schedule_opponent(const std::string& agent_name, Rng& rng) {
  const AgentState& st = agent(agent_name);
  const std::vector<std::string> frozen = frozen_ids();
  if (frozen.empty()) throw DomainError("league: no frozen members to schedule against");

  MatchDescriptor m;
  m.match_id = next_match_id_++;
  m.agent = agent_name;
  m.model_id = st.model_id;

  auto pfsp_over = [&](const std::vector<std::string>& ids) {
    std::vector<double> rates;
    rates.reserve(ids.size());
    for (const auto& id : ids) rates.push_back(rates_.win_rate(st.model_id, id));
    return ids[pfsp_pick(rates, cfg_.pfsp_exponent, rng)];
  };

  if (st.spec.role == Role::kMA) {
    const double u = uniform01(rng);
    if (u < cfg_.mix_self_play) {
      m.branch = MatchBranch::kSelfPlay;
      m.opponent_id = st.model_id;
      return m;
    }
    if (u >= cfg_.mix_self_play + cfg_.mix_pfsp) {
      const auto forgotten = forgotten_main_players();
      if (!forgotten.empty()) {
        m.branch = MatchBranch::kForgotten;
        m.opponent_id = pfsp_over(forgotten);
        return m;
      }
    }
    m.branch = MatchBranch::kPfsp;
    m.opponent_id = pfsp_over(frozen);
    return m;
  }

  if (st.spec.matching == Matching::kLeague) {
    std::vector<std::string> league = frozen;
    league.push_back(live_ma_id());
    m.branch = MatchBranch::kLeague;
    m.opponent_id = pfsp_over(league);
    return m;
  }

  const std::string ma = live_ma_id();
  const WinStats vs_ma = rates_.stats(st.model_id, ma);
  const auto history = agent_history(kMainAgentName);
  if (!history.empty() && vs_ma.count() >= 20 &&
      vs_ma.win_rate() < cfg_.exploiter_fallback_threshold) {
    m.branch = MatchBranch::kMainHistory;
    m.opponent_id = pfsp_over(history);
    return m;
  }
  m.branch = MatchBranch::kMainAgent;
  m.opponent_id = ma;
  return m;
}

void LeagueManager::record_match_result(const MatchDescriptor& match, int outcome) {
  if (!is_registered(match.model_id)) throw DomainError("league: unknown model id " + match.model_id);
  if (!is_registered(match.opponent_id))
    throw DomainError("league: unknown model id " + match.opponent_id);
  if (match.model_id == match.opponent_id) return;  // self-play mirror carries no information
  rates_.record(match.model_id, match.opponent_id, outcome);
}

std::string LeagueManager::freeze_live(AgentState& st, const PolicyParams& live_params) {
  ModelRecord& r = mutable_record(st.model_id);
  r.snapshot = make_snapshot(live_params, r.model_id, r.tags);
  r.period_index = st.period_index;
  r.frozen = true;
  return r.model_id;
}

std::optional<std::string> LeagueManager::ma_snapshot_tick(const PolicyParams& live_params) {
  AgentState& st = mutable_agent(kMainAgentName);
  if (st.steps_since_snapshot < cfg_.ma_snapshot_steps) return std::nullopt;
  st.steps_since_snapshot -= cfg_.ma_snapshot_steps;
  ++st.period_index;
  const std::string id =
      ModelId{kMainAgentName, numbered(kMainAgentName, static_cast<int>(++ma_snapshot_counter_))}.str();
  ModelRecord r{id, kMainAgentName, Role::kMA, st.period_index, true, st.spec.initial_model,
                st.spec.tags, make_snapshot(live_params, id, st.spec.tags)};
  models_.emplace(id, std::move(r));
  order_.push_back(id);
  st.prev_model_id = id;
  return id;
}

std::optional<PeriodEvent> LeagueManager::period_check(const std::string& agent_name,
                                                       const PolicyParams& live_params) {
  AgentState& st = mutable_agent(agent_name);
  if (st.spec.role == Role::kMA) return std::nullopt;
  if (st.steps_in_period < st.next_check) return std::nullopt;
  st.next_check += cfg_.effective_check_interval();

  const double wr = win_rate_vs_target(agent_name);
  const std::string ma = live_ma_id();
  PeriodDecision decision;
  switch (st.spec.role) {
    case Role::kME:
    case Role::kLE:
    case Role::kSE:
      decision = standard_reset_decision(wr, st.steps_in_period, cfg_);
      break;
    case Role::kEE: {
      std::vector<CandidateRate> history;
      for (const auto& id : agent_history(agent_name)) {
        const auto& rec = models_.at(id);
        history.push_back({id, rec.period_index, rates_.win_rate(id, ma)});
      }
      decision = ee_period_decision(history, {st.model_id, st.period_index, rates_.win_rate(st.model_id, ma)},
                                    st.steps_in_period, cfg_);
      break;
    }
    case Role::kAEE:
      decision = period_trigger(wr, st.steps_in_period, cfg_) ? PeriodDecision::reset(true)
                                                             : PeriodDecision::keep();
      break;
    case Role::kMA:
      break;
  }
  if (!decision.freeze && decision.action == PeriodDecision::Action::kContinue) return std::nullopt;

  PeriodEvent ev;
  ev.agent = agent_name;
  if (decision.freeze) {
    ev.frozen_id = freeze_live(st, live_params);
    // Tree parent is the node this model inherited from, if any.
    const std::string parent_child = ModelId::parse(ev.frozen_id).parent;
    std::string tree_parent;
    for (const auto& n : st.tree.nodes())
      if (ModelId::parse(n.id).child == parent_child) tree_parent = n.id;
    st.tree.add(ev.frozen_id, tree_parent, st.period_index);
    st.prev_model_id = ev.frozen_id;
  }
  if (st.spec.role == Role::kAEE) {
    decision = aee_period_decision(st.tree, rates_, ma, cfg_);
    decision.freeze = true;
  }
  ev.decision = decision;

  ++st.period_index;
  st.steps_in_period = 0;
  st.next_check = cfg_.min_period_steps;
  if (decision.action == PeriodDecision::Action::kInherit) {
    if (st.tree.contains(decision.inherit_from)) st.tree.mark_inherited(decision.inherit_from);
    ev.source_id = decision.inherit_from;
    start_model(st, ModelId::parse(decision.inherit_from).child);
  } else {
    ev.source_id = st.spec.initial_model;
    start_model(st, ModelId::parse(st.spec.initial_model).child);
  }
  ev.new_model_id = st.model_id;
  return ev;
}

std::vector<PeriodEvent> LeagueManager::advance(const std::string& agent_name, std::int64_t steps,
                                                const PolicyParams& live_params) {
  AgentState& st = mutable_agent(agent_name);
  st.steps_in_period += steps;
  st.total_steps += steps;
  std::vector<PeriodEvent> events;
  if (st.spec.role == Role::kMA) {
    st.steps_since_snapshot += steps;
    while (auto id = ma_snapshot_tick(live_params)) {
      PeriodEvent ev;
      ev.agent = agent_name;
      ev.frozen_id = *id;
      ev.new_model_id = st.model_id;
      events.push_back(std::move(ev));
    }
    return events;
  }
  while (auto ev = period_check(agent_name, live_params)) events.push_back(std::move(*ev));
  return events;
}

nlohmann::json LeagueManager::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& id : order_) models.push_back(models_.at(id).to_json());
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& name : agent_order_) agents.push_back(agents_.at(name).to_json());
  return {{"version", kVersion},
          {"roles", cfg_.to_json()},
          {"models", models},
          {"agents", agents},
          {"win_rates", rates_.to_json()},
          {"next_match_id", next_match_id_},
          {"ma_snapshot_counter", ma_snapshot_counter_}};
}

LeagueManager LeagueManager::from_json(const nlohmann::json& doc) {
  if (doc.value("version", 0) != kVersion) throw DomainError("league: unsupported state version");
  LeagueManager lm(RoleConfig::from_json(doc.at("roles")));
  for (const auto& m : doc.at("models")) {
    ModelRecord r = ModelRecord::from_json(m);
    if (r.frozen && !r.snapshot) throw DomainError("league: frozen model without snapshot " + r.model_id);
    lm.order_.push_back(r.model_id);
    lm.models_.emplace(r.model_id, std::move(r));
  }
  for (const auto& a : doc.at("agents")) {
    AgentState st = AgentState::from_json(a);
    lm.agent_order_.push_back(st.spec.name);
    lm.agents_.emplace(st.spec.name, std::move(st));
  }
  lm.rates_ = WinRateTable::from_json(doc.at("win_rates"));
  lm.next_match_id_ = doc.at("next_match_id").get<std::uint64_t>();
  lm.ma_snapshot_counter_ = doc.at("ma_snapshot_counter").get<std::int64_t>();
  return lm;
}

}  // namespace dlt
