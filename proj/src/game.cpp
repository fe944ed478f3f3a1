#include "dlt/game.hpp"

#include <cmath>
#include <numeric>

namespace dlt {

GameSpec generate_cyclic_game(int num_moves, int horizon, double noise_level,
                              std::uint64_t seed) {
  if (num_moves < 2) throw DomainError("generate_cyclic_game: num_moves must be >= 2");
  if (horizon < 1) throw DomainError("generate_cyclic_game: horizon must be >= 1");
  if (!(noise_level >= 0.0)) throw DomainError("generate_cyclic_game: noise_level must be >= 0");

  GameSpec spec;
  spec.num_moves = num_moves;
  spec.horizon = horizon;
  spec.noise_level = noise_level;
  spec.seed = seed;
  spec.payoff.assign(static_cast<std::size_t>(num_moves * num_moves), 0.0);
  auto cell = [&](int r, int c) -> double& { return spec.payoff[r * num_moves + c]; };

  if (num_moves == 2) {
    // The "cycle" degenerates to one dominance edge.
    cell(1, 0) = 1.0;
    cell(0, 1) = -1.0;
    return spec;
  }

  for (int i = 0; i < num_moves; ++i) {
    const int succ = (i + 1) % num_moves;
    cell(succ, i) = 1.0;
    cell(i, succ) = -1.0;
  }
  if (num_moves > 3) {
    Rng rng(derive_seed({seed, 0x6379636c6963ULL}));
    std::uniform_real_distribution<double> perturb(-0.5, 0.5);
    for (int i = 0; i < num_moves; ++i) {
      for (int j = i + 1; j < num_moves; ++j) {
        const bool adjacent = (j == i + 1) || (i == 0 && j == num_moves - 1);
        if (adjacent) continue;
        const double d = perturb(rng);
        cell(i, j) = d;
        cell(j, i) = -d;
      }
    }
  }
  return spec;
}

void validate(const GameSpec& spec) {
  const int m = spec.num_moves;
  if (m < 2) throw DomainError("game spec: num_moves must be >= 2");
  if (spec.horizon < 1) throw DomainError("game spec: horizon must be >= 1");
  if (!(spec.noise_level >= 0.0)) throw DomainError("game spec: noise_level must be >= 0");
  if (spec.payoff.size() != static_cast<std::size_t>(m * m))
    throw DomainError("game spec: payoff has wrong size");
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (spec.at(i, j) != -spec.at(j, i))
        throw DomainError("game spec: payoff is not antisymmetric");
}

nlohmann::json to_json(const GameSpec& spec) {
  return {{"version", GameSpec::kVersion}, {"m", spec.num_moves},
          {"H", spec.horizon},             {"sigma", spec.noise_level},
          {"seed", spec.seed},             {"payoff", spec.payoff}};
}

GameSpec game_spec_from_json(const nlohmann::json& doc) {
  if (doc.value("version", 0) != GameSpec::kVersion)
    throw DomainError("game spec: unsupported version");
  GameSpec spec;
  spec.num_moves = doc.at("m").get<int>();
  spec.horizon = doc.at("H").get<int>();
  spec.noise_level = doc.at("sigma").get<double>();
  spec.seed = doc.at("seed").get<std::uint64_t>();
  spec.payoff = doc.at("payoff").get<std::vector<double>>();
  validate(spec);
  return spec;
}

bool is_terminal(const GameSpec& spec, const GameState& state) {
  return state.step_index >= spec.horizon;
}

StepResult step(const GameSpec& spec, const GameState& state, Move move_p1,
                Move move_p2, Rng& rng) {
  if (is_terminal(spec, state)) throw std::logic_error("step: state is terminal");
  if (move_p1 < 0 || move_p1 >= spec.num_moves || move_p2 < 0 ||
      move_p2 >= spec.num_moves)
    throw std::out_of_range("step: move out of range");

  StepResult out;
  out.state.step_index = state.step_index + 1;
  double delta = spec.at(move_p1, move_p2);
  if (spec.noise_level > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_level);
    delta += noise(rng);
  }
  out.state.cumulative_score = state.cumulative_score + delta;
  out.state.last_moves = std::make_pair(move_p1, move_p2);
  if (is_terminal(spec, out.state)) {
    const double s = out.state.cumulative_score;
    out.reward_p1 = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
    out.reward_p2 = -out.reward_p1;
  }
  return out;
}

PlayerView view_for(const GameState& state, Seat seat) {
  PlayerView v;
  v.step_index = state.step_index;
  const bool first = seat == Seat::kFirst;
  v.score = first ? state.cumulative_score : -state.cumulative_score;
  if (state.last_moves) {
    v.own_last = first ? state.last_moves->first : state.last_moves->second;
    v.opponent_last = first ? state.last_moves->second : state.last_moves->first;
  }
  return v;
}

void check_distribution(const Distribution& dist, int num_moves, double tol) {
  if (dist.size() != static_cast<std::size_t>(num_moves))
    throw DomainError("distribution has wrong length");
  double total = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0)) throw DomainError("distribution has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > tol) throw DomainError("distribution does not sum to 1");
}

CriticalRule counter_last_rule() {
  CriticalRule rule;
  rule.name = "counter_last";
  rule.predicate = [](const GameSpec&, const PlayerView& v) {
    return v.opponent_last.has_value();
  };
  rule.expert = [](const GameSpec& spec, const PlayerView& v) {
    Distribution d(static_cast<std::size_t>(spec.num_moves), 0.0);
    d[spec.counter_of(*v.opponent_last)] = 1.0;
    return d;
  };
  return rule;
}

RuleSet default_rule_set() { return {counter_last_rule()}; }

std::optional<Distribution> critical_oracle(const GameSpec& spec,
                                            const PlayerView& view,
                                            const RuleSet& rules) {
  for (const auto& rule : rules) {
    if (!rule.predicate(spec, view)) continue;
    Distribution d = rule.expert(spec, view);
    check_distribution(d, spec.num_moves);
    return d;
  }
  return std::nullopt;
}

std::optional<Distribution> critical_oracle(const GameSpec& spec,
                                            const GameState& state) {
  static const RuleSet rules = default_rule_set();
  return critical_oracle(spec, view_for(state, Seat::kFirst), rules);
}

}  // namespace dlt
