#pragma once

// Population evaluation: round-robin payoff matrices, anchored ELO, zero-sum
// Nash solving, relative population performance, and diversity / response
// reports over match logs.

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlt/game.hpp"
#include "dlt/policy.hpp"

namespace dlt {

// Score counts of row vs column; p = (wins + draws / 2) / n.
struct PairCounts {
  std::int64_t wins = 0;
  std::int64_t draws = 0;
  std::int64_t losses = 0;

  std::int64_t n() const { return wins + draws + losses; }
  bool operator==(const PairCounts&) const = default;
};

class PayoffMatrix {
 public:
  PayoffMatrix() = default;
  explicit PayoffMatrix(std::vector<std::string> model_ids);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& model_ids() const { return ids_; }
  std::size_t index_of(const std::string& id) const;

  // Adds results of row i against column j and mirrors them into (j, i).
  void add(std::size_t i, std::size_t j, const PairCounts& counts);
  // Sets p_ij directly (and p_ji = 1 - p_ij) with n matches.
  void set(std::size_t i, std::size_t j, double p, std::int64_t n);

  double p(std::size_t i, std::size_t j) const;  // diagonal and unplayed: 0.5
  double n(std::size_t i, std::size_t j) const;
  // 2p - 1, in [-1, 1].
  std::vector<std::vector<double>> rescaled() const;

  // Header row of model ids, one row per model.
  void write_csv(std::ostream& out, bool rescaled = false) const;
  static PayoffMatrix read_csv(std::istream& in, std::int64_t n_per_entry = 1);
  nlohmann::json to_json() const;
  static PayoffMatrix from_json(const nlohmann::json& doc);

  bool operator==(const PayoffMatrix&) const = default;

 private:
  std::vector<std::string> ids_;
  std::vector<double> score_;  // row-major total score of row vs column
  std::vector<double> n_;
};

// Match scores (1 / 0.5 / 0) of a against b, role-balanced: even match
// indices seat a as player 1.
PairCounts play_pair(const GameSpec& spec, const Snapshot& a, const Snapshot& b, int n,
                     std::uint64_t seed, const RuleSet& rules = RuleSet{});

// Every unordered pair plays n_per_pair matches. Seeds derive from
// (seed, i, j, k), so the matrix does not depend on the worker count.
PayoffMatrix round_robin(const std::vector<SnapshotPtr>& models, const GameSpec& spec,
                         int n_per_pair, std::uint64_t seed, int workers = 1);

// ---------------------------------------------------------------------------
// ELO

class DisconnectedPayoff : public std::runtime_error {
 public:
  DisconnectedPayoff(const std::string& what, std::vector<std::vector<std::string>> components)
      : std::runtime_error(what), components(std::move(components)) {}
  std::vector<std::vector<std::string>> components;
};

struct EloFit {
  std::map<std::string, double> ratings;
  double loss = 0.0;
  double grad_norm = 0.0;
  int sweeps = 0;

  nlohmann::json to_json() const;
};

double elo_expected(double r_i, double r_j);
// Weighted cross-entropy of the observed win-rates under `ratings`.
double elo_loss(const PayoffMatrix& payoff, const std::vector<double>& ratings);

EloFit elo_fit(const PayoffMatrix& payoff, const std::string& baseline_id, double tol = 1e-6,
               int max_sweeps = 200000);

// ---------------------------------------------------------------------------
// Nash

struct NashSolution {
  std::vector<double> x;
  std::vector<double> y;
  double value = 0.0;
  double exploitability = 0.0;  // max of the two certificate gaps
  long iterations = 0;

  nlohmann::json to_json() const;
};

class NashNotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Matrix = std::vector<std::vector<double>>;

// Certificate gaps (best-response value minus x'Ay, for each side).
double nash_gap(const Matrix& a, const std::vector<double>& x, const std::vector<double>& y);

// Regret-matching+ with alternating updates and linearly weighted averages.
NashSolution nash_solve(const Matrix& a, double eps = 1e-4, long max_iterations = 5000000);

// ---------------------------------------------------------------------------
// RPP

struct RppResult {
  double value = 0.0;
  double standard_error = 0.0;  // parametric bootstrap over match outcomes
  NashSolution nash;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  std::vector<std::vector<PairCounts>> counts;

  nlohmann::json to_json() const;
};

RppResult rpp(const std::vector<SnapshotPtr>& league_a, const std::vector<SnapshotPtr>& league_b,
              const GameSpec& spec, int n_per_pair, std::uint64_t seed, int workers = 1,
              int bootstrap = 0);

// Nash value of the rescaled cross matrix built from counts.
RppResult rpp_from_counts(std::vector<std::vector<PairCounts>> counts, std::uint64_t seed,
                          int bootstrap);

// ---------------------------------------------------------------------------
// Match logs and reports

struct MatchLogRecord {
  std::uint64_t match_id = 0;
  std::int64_t timestamp = 0;  // logical: training round
  std::string agent;
  std::string model_id;
  std::string opponent_id;
  std::string branch;
  std::uint64_t seed = 0;
  int tag = 0;
  int opponent_tag = 0;
  std::vector<int> moves;
  std::vector<int> opponent_moves;
  int outcome = 0;  // from model_id's side
  bool agent_first = true;

  nlohmann::json to_json() const;
  static MatchLogRecord from_json(const nlohmann::json& doc);
  bool operator==(const MatchLogRecord&) const = default;
};

std::vector<MatchLogRecord> read_match_log(std::istream& in);

// Maps each of the agent's steps in a match to a category index.
struct StrategyClassifier {
  std::vector<std::string> labels;
  std::function<std::vector<int>(const MatchLogRecord&)> classify;
};

StrategyClassifier move_classifier(int num_moves);
// Joint (tag, move) axis: label "t<tag>/m<move>".
StrategyClassifier tag_move_classifier(int num_moves, int tag_count);

struct DiversityReport {
  std::vector<std::string> labels;
  std::map<std::string, std::vector<double>> per_agent;  // occurrence probabilities
  std::map<std::string, double> per_agent_entropy;
  std::vector<double> pooled;
  double pooled_entropy = 0.0;  // nats

  nlohmann::json to_json() const;
  void write_csv(std::ostream& out) const;
};

double entropy(const std::vector<double>& probs);

DiversityReport diversity_report(const std::vector<MatchLogRecord>& log,
                                 const StrategyClassifier& classifier);

struct ResponseRow {
  std::string probe_id;
  std::vector<double> move_probs;  // MA's move usage against this probe
  double win_rate = 0.5;
};

std::vector<ResponseRow> response_report(const Snapshot& ma, const std::vector<SnapshotPtr>& probes,
                                         const GameSpec& spec, int n, std::uint64_t seed);

struct LeagueBarRow {
  std::string model_id;
  std::string role;
  double win_rate = 0.5;
};

std::vector<LeagueBarRow> league_bar(const Snapshot& ma, const std::vector<SnapshotPtr>& league,
                                     const std::vector<std::string>& roles, const GameSpec& spec,
                                     int n, std::uint64_t seed, int workers = 1);

void write_league_bar_csv(std::ostream& out, const std::vector<LeagueBarRow>& rows);
void write_response_csv(std::ostream& out, const std::vector<ResponseRow>& rows);

}  // namespace dlt
