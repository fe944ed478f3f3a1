#pragma once

// Two-player zero-sum stochastic game with a cyclic payoff core.
//
// Each episode is H simultaneous-move steps. Every step adds
// A[move_p1][move_p2] (plus optional Gaussian noise) to a running score held
// from player 1's perspective; the terminal reward is the sign of that score.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dlt/rng.hpp"

namespace dlt {

using Move = int;
using Distribution = std::vector<double>;

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GameSpec {
  static constexpr int kVersion = 1;

  int num_moves = 3;
  int horizon = 10;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  // Row-major num_moves x num_moves, antisymmetric.
  std::vector<double> payoff;

  double at(Move row, Move col) const { return payoff[row * num_moves + col]; }
  // The move that beats `move` along the cycle.
  Move counter_of(Move move) const { return (move + 1) % num_moves; }

  bool operator==(const GameSpec&) const = default;
};

GameSpec generate_cyclic_game(int num_moves, int horizon, double noise_level,
                              std::uint64_t seed);

// Throws DomainError if shape, antisymmetry or ranges are violated.
void validate(const GameSpec& spec);

nlohmann::json to_json(const GameSpec& spec);
GameSpec game_spec_from_json(const nlohmann::json& doc);

struct GameState {
  int step_index = 0;
  double cumulative_score = 0.0;  // player 1 perspective
  std::optional<std::pair<Move, Move>> last_moves;  // (p1, p2)

  bool operator==(const GameState&) const = default;
};

struct StepResult {
  GameState state;
  double reward_p1 = 0.0;
  double reward_p2 = 0.0;
};

bool is_terminal(const GameSpec& spec, const GameState& state);

// Advances one simultaneous step. Noise is drawn from `rng` only when
// noise_level > 0.
StepResult step(const GameSpec& spec, const GameState& state, Move move_p1,
                Move move_p2, Rng& rng);

enum class Seat { kFirst, kSecond };

// The state as seen by one seat: own score, own/opponent last move.
struct PlayerView {
  int step_index = 0;
  double score = 0.0;
  std::optional<Move> own_last;
  std::optional<Move> opponent_last;
};

PlayerView view_for(const GameState& state, Seat seat);

// A named predicate + expert distribution pair over player views.
struct CriticalRule {
  std::string name;
  std::function<bool(const GameSpec&, const PlayerView&)> predicate;
  std::function<Distribution(const GameSpec&, const PlayerView&)> expert;
};

using RuleSet = std::vector<CriticalRule>;

// One-hot on the counter of the opponent's last move, active for t > 0.
CriticalRule counter_last_rule();
RuleSet default_rule_set();

// First matching rule wins. Rejects expert outputs that are not
// probability vectors.
std::optional<Distribution> critical_oracle(const GameSpec& spec,
                                            const PlayerView& view,
                                            const RuleSet& rules);
std::optional<Distribution> critical_oracle(const GameSpec& spec,
                                            const GameState& state);

void check_distribution(const Distribution& dist, int num_moves,
                        double tol = 1e-9);

}  // namespace dlt
