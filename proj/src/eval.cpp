#include "dlt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dlt/parallel.hpp"
#include "dlt/rng.hpp"

namespace dlt {

namespace {

constexpr double kEloScale = 400.0;

double score_of(int outcome) { return outcome > 0 ? 1.0 : (outcome == 0 ? 0.5 : 0.0); }

void tally(PairCounts& c, int outcome) {
  if (outcome > 0) ++c.wins;
  else if (outcome < 0) ++c.losses;
  else ++c.draws;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// PayoffMatrix

PayoffMatrix::PayoffMatrix(std::vector<std::string> model_ids)
    : ids_(std::move(model_ids)),
      score_(ids_.size() * ids_.size(), 0.0),
      n_(ids_.size() * ids_.size(), 0.0) {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    for (std::size_t j = i + 1; j < ids_.size(); ++j)
      if (ids_[i] == ids_[j]) throw DomainError("payoff: duplicate model id " + ids_[i]);
}

std::size_t PayoffMatrix::index_of(const std::string& id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw DomainError("payoff: unknown model id " + id);
  return static_cast<std::size_t>(it - ids_.begin());
}

void PayoffMatrix::add(std::size_t i, std::size_t j, const PairCounts& c) {
  if (i == j) throw DomainError("payoff: diagonal entries are fixed at 0.5");
  const std::size_t k = ids_.size();
  const double n = static_cast<double>(c.n());
  const double s = static_cast<double>(c.wins) + 0.5 * static_cast<double>(c.draws);
  score_[i * k + j] += s;
  n_[i * k + j] += n;
  score_[j * k + i] += n - s;
  n_[j * k + i] += n;
}

void PayoffMatrix::set(std::size_t i, std::size_t j, double p, std::int64_t n) {
  if (i == j) throw DomainError("payoff: diagonal entries are fixed at 0.5");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("payoff: p must lie in [0, 1]");
  const std::size_t k = ids_.size();
  const double nn = static_cast<double>(n);
  score_[i * k + j] = p * nn;
  n_[i * k + j] = nn;
  score_[j * k + i] = (1.0 - p) * nn;
  n_[j * k + i] = nn;
}

double PayoffMatrix::p(std::size_t i, std::size_t j) const {
  const std::size_t k = ids_.size();
  if (i == j || n_[i * k + j] == 0.0) return 0.5;
  return score_[i * k + j] / n_[i * k + j];
}

double PayoffMatrix::n(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  return n_[i * ids_.size() + j];
}

Matrix PayoffMatrix::rescaled() const {
  Matrix out(size(), std::vector<double>(size(), 0.0));
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < size(); ++j) out[i][j] = 2.0 * p(i, j) - 1.0;
  return out;
}

void PayoffMatrix::write_csv(std::ostream& out, bool rescaled_entries) const {
  out << "model_id";
  for (const auto& id : ids_) out << ',' << id;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < size(); ++i) {
    out << ids_[i];
    for (std::size_t j = 0; j < size(); ++j)
      out << ',' << (rescaled_entries ? 2.0 * p(i, j) - 1.0 : p(i, j));
    out << '\n';
  }
}

PayoffMatrix PayoffMatrix::read_csv(std::istream& in, std::int64_t n_per_entry) {
  std::string line;
  if (!std::getline(in, line)) throw DomainError("payoff csv: empty input");
  auto header = split_csv_line(line);
  if (header.size() < 3) throw DomainError("payoff csv: need at least two models");
  PayoffMatrix m(std::vector<std::string>(header.begin() + 1, header.end()));
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw DomainError("payoff csv: ragged row");
    const std::size_t i = m.index_of(cells[0]);
    for (std::size_t j = 0; j < m.size(); ++j)
      if (j > i) m.set(i, j, std::stod(cells[j + 1]), n_per_entry);
    ++row;
  }
  if (row != m.size()) throw DomainError("payoff csv: row count does not match header");
  return m;
}

nlohmann::json PayoffMatrix::to_json() const {
  nlohmann::json p_rows = nlohmann::json::array();
  nlohmann::json n_rows = nlohmann::json::array();
  for (std::size_t i = 0; i < size(); ++i) {
    std::vector<double> pr, nr;
    for (std::size_t j = 0; j < size(); ++j) {
      pr.push_back(p(i, j));
      nr.push_back(n(i, j));
    }
    p_rows.push_back(pr);
    n_rows.push_back(nr);
  }
  return {{"model_ids", ids_}, {"p", p_rows}, {"n", n_rows}};
}

PayoffMatrix PayoffMatrix::from_json(const nlohmann::json& doc) {
  PayoffMatrix m(doc.at("model_ids").get<std::vector<std::string>>());
  const auto& p = doc.at("p");
  const auto& n = doc.at("n");
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      const double nn = n.at(i).at(j).get<double>();
      if (nn > 0) m.set(i, j, p.at(i).at(j).get<double>(), static_cast<std::int64_t>(nn));
    }
  return m;
}

// ---------------------------------------------------------------------------
// Tournaments

PairCounts play_pair(const GameSpec& spec, const Snapshot& a, const Snapshot& b, int n,
                     std::uint64_t seed, const RuleSet& rules) {
  PairCounts c;
  for (int k = 0; k < n; ++k) {
    const std::uint64_t s = derive_seed({seed, static_cast<std::uint64_t>(k)});
    if (k % 2 == 0) {
      tally(c, rollout(spec, a, b, s, rules).outcome);
    } else {
      tally(c, -rollout(spec, b, a, s, rules).outcome);
    }
  }
  return c;
}

PayoffMatrix round_robin(const std::vector<SnapshotPtr>& models, const GameSpec& spec,
                         int n_per_pair, std::uint64_t seed, int workers) {
  if (models.size() < 2) throw DomainError("round_robin: need at least two models");
  if (n_per_pair < 1) throw DomainError("round_robin: n_per_pair must be >= 1");
  std::vector<std::string> ids;
  for (const auto& m : models) ids.push_back(m->model_id);
  PayoffMatrix out(ids);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t j = i + 1; j < models.size(); ++j) pairs.emplace_back(i, j);
  std::vector<PairCounts> results(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    results[k] = play_pair(spec, *models[i], *models[j], n_per_pair,
                           derive_seed({seed, i, j}));
  });
  for (std::size_t k = 0; k < pairs.size(); ++k) out.add(pairs[k].first, pairs[k].second, results[k]);
  return out;
}

// ---------------------------------------------------------------------------
// ELO

double elo_expected(double r_i, double r_j) {
  return 1.0 / (1.0 + std::pow(10.0, (r_j - r_i) / kEloScale));
}

namespace {

double clamp_p(double p) { return std::clamp(p, 1e-3, 1.0 - 1e-3); }

std::vector<std::vector<std::size_t>> components_of(const PayoffMatrix& m) {
  const std::size_t k = m.size();
  std::vector<int> comp(k, -1);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < k; ++s) {
    if (comp[s] >= 0) continue;
    out.emplace_back();
    std::vector<std::size_t> stack{s};
    comp[s] = static_cast<int>(out.size() - 1);
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      out.back().push_back(u);
      for (std::size_t v = 0; v < k; ++v)
        if (comp[v] < 0 && m.n(u, v) > 0) {
          comp[v] = comp[s];
          stack.push_back(v);
        }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

// d loss / d r_i and the diagonal curvature.
std::pair<double, double> elo_coord(const PayoffMatrix& m, const std::vector<double>& r,
                                    std::size_t i) {
  const double c = std::log(10.0) / kEloScale;
  double g = 0.0, h = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    const double n = m.n(i, j);
    if (n == 0.0) continue;
    const double q = elo_expected(r[i], r[j]);
    g += n * (q - clamp_p(m.p(i, j))) * c;
    h += n * q * (1.0 - q) * c * c;
  }
  return {g, h};
}

}  // namespace

double elo_loss(const PayoffMatrix& m, const std::vector<double>& r) {
  double loss = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      const double n = m.n(i, j);
      if (n == 0.0) continue;
      const double p = clamp_p(m.p(i, j));
      const double q = elo_expected(r[i], r[j]);
      loss -= n * (p * std::log(q) + (1.0 - p) * std::log(1.0 - q));
    }
  return loss;
}

nlohmann::json EloFit::to_json() const {
  return {{"ratings", ratings}, {"loss", loss}, {"grad_norm", grad_norm}, {"sweeps", sweeps}};
}

EloFit elo_fit(const PayoffMatrix& m, const std::string& baseline_id, double tol, int max_sweeps) {
  const std::size_t base = m.index_of(baseline_id);
  const auto comps = components_of(m);
  if (comps.size() > 1) {
    std::vector<std::vector<std::string>> named;
    std::string msg = "elo: payoff matrix is disconnected:";
    for (const auto& c : comps) {
      named.emplace_back();
      msg += " {";
      for (std::size_t i : c) {
        named.back().push_back(m.model_ids()[i]);
        msg += (named.back().size() > 1 ? "," : "") + m.model_ids()[i];
      }
      msg += "}";
    }
    throw DisconnectedPayoff(msg, named);
  }

  std::vector<double> r(m.size(), 0.0);
  EloFit fit;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (i == base) continue;
      const auto [g, h] = elo_coord(m, r, i);
      if (h <= 0.0) continue;
      r[i] -= std::clamp(g / h, -200.0, 200.0);
    }
    double norm2 = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (i != base) norm2 += std::pow(elo_coord(m, r, i).first, 2);
    fit.sweeps = sweep + 1;
    fit.grad_norm = std::sqrt(norm2);
    if (fit.grad_norm < tol) break;
  }
  if (fit.grad_norm >= tol) throw std::runtime_error("elo: coordinate descent did not converge");
  for (std::size_t i = 0; i < m.size(); ++i) fit.ratings[m.model_ids()[i]] = r[i];
  fit.loss = elo_loss(m, r);
  return fit;
}

// ---------------------------------------------------------------------------
// Nash

double nash_gap(const Matrix& a, const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t rows = a.size(), cols = a[0].size();
  double v = 0.0;
  std::vector<double> ay(rows, 0.0), xa(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      ay[i] += a[i][j] * y[j];
      xa[j] += x[i] * a[i][j];
      v += x[i] * a[i][j] * y[j];
    }
  const double row_gap = *std::max_element(ay.begin(), ay.end()) - v;
  const double col_gap = v - *std::min_element(xa.begin(), xa.end());
  return std::max(row_gap, col_gap);
}

nlohmann::json NashSolution::to_json() const {
  return {{"x", x}, {"y", y}, {"value", value}, {"exploitability", exploitability},
          {"iterations", iterations}};
}

NashSolution nash_solve(const Matrix& a, double eps, long max_iterations) {
  if (a.empty() || a[0].empty()) throw DomainError("nash: empty matrix");
  const std::size_t rows = a.size(), cols = a[0].size();
  for (const auto& row : a) {
    if (row.size() != cols) throw DomainError("nash: ragged matrix");
    for (double v : row)
      if (!std::isfinite(v)) throw DomainError("nash: non-finite entry");
  }

  auto normalize = [](const std::vector<double>& regret, std::vector<double>& out) {
    const double s = std::accumulate(regret.begin(), regret.end(), 0.0);
    for (std::size_t i = 0; i < regret.size(); ++i)
      out[i] = s > 0.0 ? regret[i] / s : 1.0 / static_cast<double>(regret.size());
  };

  std::vector<double> rx(rows, 0.0), ry(cols, 0.0);
  std::vector<double> x(rows, 1.0 / rows), y(cols, 1.0 / cols);
  std::vector<double> xs(rows, 0.0), ys(cols, 0.0);
  std::vector<double> u(std::max(rows, cols));
  NashSolution sol;
  sol.x.resize(rows);
  sol.y.resize(cols);
  double wsum = 0.0;

  for (long t = 1; t <= max_iterations; ++t) {
    // Row player maximizes against the current y.
    double vx = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      u[i] = 0.0;
      for (std::size_t j = 0; j < cols; ++j) u[i] += a[i][j] * y[j];
      vx += x[i] * u[i];
    }
    for (std::size_t i = 0; i < rows; ++i) rx[i] = std::max(0.0, rx[i] + u[i] - vx);
    normalize(rx, x);

    // Column player minimizes against the updated x.
    double vy = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      u[j] = 0.0;
      for (std::size_t i = 0; i < rows; ++i) u[j] -= x[i] * a[i][j];
      vy += y[j] * u[j];
    }
    for (std::size_t j = 0; j < cols; ++j) ry[j] = std::max(0.0, ry[j] + u[j] - vy);
    normalize(ry, y);

    const double w = static_cast<double>(t);
    wsum += w;
    for (std::size_t i = 0; i < rows; ++i) xs[i] += w * x[i];
    for (std::size_t j = 0; j < cols; ++j) ys[j] += w * y[j];

    if (t % 16 == 0 || t == max_iterations) {
      for (std::size_t i = 0; i < rows; ++i) sol.x[i] = xs[i] / wsum;
      for (std::size_t j = 0; j < cols; ++j) sol.y[j] = ys[j] / wsum;
      sol.exploitability = nash_gap(a, sol.x, sol.y);
      sol.iterations = t;
      if (sol.exploitability <= eps) {
        sol.value = 0.0;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) sol.value += sol.x[i] * a[i][j] * sol.y[j];
        return sol;
      }
    }
  }
  throw NashNotConverged("nash: no eps-equilibrium certificate after " +
                         std::to_string(max_iterations) + " iterations (gap " +
                         std::to_string(sol.exploitability) + ")");
}

// ---------------------------------------------------------------------------
// RPP

nlohmann::json RppResult::to_json() const {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& row : counts) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back({c.wins, c.draws, c.losses});
    cells.push_back(r);
  }
  return {{"value", value},       {"standard_error", standard_error}, {"nash", nash.to_json()},
          {"row_ids", row_ids},   {"col_ids", col_ids},               {"counts_wdl", cells}};
}

namespace {

Matrix rescaled_counts(const std::vector<std::vector<PairCounts>>& counts) {
  Matrix a(counts.size(), std::vector<double>(counts[0].size(), 0.0));
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      const auto& c = counts[i][j];
      if (c.n() == 0) throw DomainError("rpp: empty cross-matrix cell");
      a[i][j] = static_cast<double>(c.wins - c.losses) / static_cast<double>(c.n());
    }
  return a;
}

}  // namespace

RppResult rpp_from_counts(std::vector<std::vector<PairCounts>> counts, std::uint64_t seed,
                          int bootstrap) {
  if (counts.empty() || counts[0].empty()) throw DomainError("rpp: both leagues must be nonempty");
  RppResult out;
  const Matrix a = rescaled_counts(counts);
  out.nash = nash_solve(a);
  out.value = out.nash.value;

  if (bootstrap > 0) {
    Rng rng(derive_seed({seed, 0x626f6f74ULL}));
    std::vector<double> values;
    values.reserve(bootstrap);
    for (int b = 0; b < bootstrap; ++b) {
      auto resampled = counts;
      for (std::size_t i = 0; i < counts.size(); ++i)
        for (std::size_t j = 0; j < counts[i].size(); ++j) {
          const auto& c = counts[i][j];
          const double n = static_cast<double>(c.n());
          PairCounts r;
          for (std::int64_t k = 0; k < c.n(); ++k) {
            const double u = uniform01(rng) * n;
            if (u < static_cast<double>(c.wins)) ++r.wins;
            else if (u < static_cast<double>(c.wins + c.draws)) ++r.draws;
            else ++r.losses;
          }
          resampled[i][j] = r;
        }
      values.push_back(nash_solve(rescaled_counts(resampled)).value);
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    out.standard_error = std::sqrt(var / std::max<std::size_t>(1, values.size() - 1));
  } else {
    // Delta-method approximation with the equilibrium strategies held fixed.
    double var = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i)
      for (std::size_t j = 0; j < counts[i].size(); ++j) {
        const auto& c = counts[i][j];
        const double n = static_cast<double>(c.n());
        const double mean = a[i][j];
        const double second = static_cast<double>(c.wins + c.losses) / n;
        const double w = out.nash.x[i] * out.nash.y[j];
        var += w * w * (second - mean * mean) / n;
      }
    out.standard_error = std::sqrt(var);
  }
  out.counts = std::move(counts);
  return out;
}

RppResult rpp(const std::vector<SnapshotPtr>& league_a, const std::vector<SnapshotPtr>& league_b,
              const GameSpec& spec, int n_per_pair, std::uint64_t seed, int workers,
              int bootstrap) {
  if (league_a.empty() || league_b.empty()) throw DomainError("rpp: both leagues must be nonempty");
  if (n_per_pair < 1) throw DomainError("rpp: n_per_pair must be >= 1");
  std::vector<std::vector<PairCounts>> counts(league_a.size(),
                                              std::vector<PairCounts>(league_b.size()));
  const std::size_t cols = league_b.size();
  parallel_for(league_a.size() * cols, workers, [&](std::size_t k) {
    const std::size_t i = k / cols, j = k % cols;
    counts[i][j] = play_pair(spec, *league_a[i], *league_b[j], n_per_pair,
                             derive_seed({seed, i, j}));
  });
  RppResult out = rpp_from_counts(std::move(counts), seed, bootstrap);
  for (const auto& s : league_a) out.row_ids.push_back(s->model_id);
  for (const auto& s : league_b) out.col_ids.push_back(s->model_id);
  return out;
}

// ---------------------------------------------------------------------------
// Match logs and reports

nlohmann::json MatchLogRecord::to_json() const {
  return {{"timestamp", timestamp},
          {"match_id", match_id},
          {"agent", agent},
          {"model_id", model_id},
          {"opponent_id", opponent_id},
          {"branch", branch},
          {"seed", seed},
          {"tags", {tag, opponent_tag}},
          {"moves", moves},
          {"opponent_moves", opponent_moves},
          {"outcome", outcome},
          {"agent_first", agent_first}};
}

MatchLogRecord MatchLogRecord::from_json(const nlohmann::json& doc) {
  MatchLogRecord r;
  r.match_id = doc.at("match_id").get<std::uint64_t>();
  r.timestamp = doc.value("timestamp", std::int64_t{0});
  r.agent = doc.value("agent", std::string{});
  r.model_id = doc.at("model_id").get<std::string>();
  r.opponent_id = doc.at("opponent_id").get<std::string>();
  r.branch = doc.value("branch", std::string{});
  r.seed = doc.value("seed", std::uint64_t{0});
  r.tag = doc.at("tags").at(0).get<int>();
  r.opponent_tag = doc.at("tags").at(1).get<int>();
  r.moves = doc.at("moves").get<std::vector<int>>();
  r.opponent_moves = doc.value("opponent_moves", std::vector<int>{});
  r.outcome = doc.at("outcome").get<int>();
  r.agent_first = doc.value("agent_first", true);
  return r;
}

std::vector<MatchLogRecord> read_match_log(std::istream& in) {
  std::vector<MatchLogRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(MatchLogRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

StrategyClassifier move_classifier(int num_moves) {
  StrategyClassifier c;
  for (int k = 0; k < num_moves; ++k) c.labels.push_back("m" + std::to_string(k));
  c.classify = [num_moves](const MatchLogRecord& r) {
    for (int mv : r.moves)
      if (mv < 0 || mv >= num_moves) throw DomainError("diversity: move out of range");
    return r.moves;
  };
  return c;
}

StrategyClassifier tag_move_classifier(int num_moves, int tag_count) {
  StrategyClassifier c;
  for (int t = 0; t < tag_count; ++t)
    for (int k = 0; k < num_moves; ++k)
      c.labels.push_back("t" + std::to_string(t) + "/m" + std::to_string(k));
  c.classify = [num_moves, tag_count](const MatchLogRecord& r) {
    if (r.tag < 0 || r.tag >= tag_count) throw DomainError("diversity: tag out of range");
    std::vector<int> out;
    out.reserve(r.moves.size());
    for (int mv : r.moves) {
      if (mv < 0 || mv >= num_moves) throw DomainError("diversity: move out of range");
      out.push_back(r.tag * num_moves + mv);
    }
    return out;
  };
  return c;
}

double entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

nlohmann::json DiversityReport::to_json() const {
  return {{"labels", labels},
          {"per_agent", per_agent},
          {"per_agent_entropy", per_agent_entropy},
          {"pooled", pooled},
          {"pooled_entropy", pooled_entropy}};
}

void DiversityReport::write_csv(std::ostream& out) const {
  out << "agent,entropy";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  auto row = [&](const std::string& name, double h, const std::vector<double>& probs) {
    out << name << ',' << h;
    for (double p : probs) out << ',' << p;
    out << '\n';
  };
  for (const auto& [agent, probs] : per_agent) row(agent, per_agent_entropy.at(agent), probs);
  row("pooled", pooled_entropy, pooled);
}

DiversityReport diversity_report(const std::vector<MatchLogRecord>& log,
                                 const StrategyClassifier& classifier) {
  if (log.empty()) throw DomainError("diversity: empty match log");
  const std::size_t k = classifier.labels.size();
  std::map<std::string, std::vector<double>> counts;
  std::vector<double> pooled(k, 0.0);
  for (const auto& r : log) {
    auto& c = counts[r.agent.empty() ? r.model_id : r.agent];
    c.resize(k, 0.0);
    for (int cat : classifier.classify(r)) {
      if (cat < 0 || static_cast<std::size_t>(cat) >= k)
        throw DomainError("diversity: classifier returned an unknown category");
      c[cat] += 1.0;
      pooled[cat] += 1.0;
    }
  }
  auto normalize = [](std::vector<double>& v) {
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    if (s > 0.0)
      for (double& x : v) x /= s;
  };
  DiversityReport rep;
  rep.labels = classifier.labels;
  for (auto& [agent, c] : counts) {
    normalize(c);
    rep.per_agent_entropy[agent] = entropy(c);
    rep.per_agent[agent] = std::move(c);
  }
  normalize(pooled);
  rep.pooled_entropy = entropy(pooled);
  rep.pooled = std::move(pooled);
  return rep;
}

std::vector<ResponseRow> response_report(const Snapshot& ma, const std::vector<SnapshotPtr>& probes,
                                         const GameSpec& spec, int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("response_report: n must be >= 1");
  std::vector<ResponseRow> out;
  for (const auto& probe : probes) {
    ResponseRow row;
    row.probe_id = probe->model_id;
    row.move_probs.assign(spec.num_moves, 0.0);
    double score = 0.0, total = 0.0;
    for (int k = 0; k < n; ++k) {
      const std::uint64_t s = derive_seed({seed, static_cast<std::uint64_t>(k)});
      const bool ma_first = k % 2 == 0;
      const RolloutResult r = ma_first ? rollout(spec, ma, *probe, s, RuleSet{})
                                       : rollout(spec, *probe, ma, s, RuleSet{});
      const Trajectory& mine = ma_first ? r.p1 : r.p2;
      for (const auto& st : mine.steps) {
        row.move_probs[st.action] += 1.0;
        total += 1.0;
      }
      score += score_of(ma_first ? r.outcome : -r.outcome);
    }
    for (double& p : row.move_probs) p /= total;
    row.win_rate = score / n;
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<LeagueBarRow> league_bar(const Snapshot& ma, const std::vector<SnapshotPtr>& league,
                                     const std::vector<std::string>& roles, const GameSpec& spec,
                                     int n, std::uint64_t seed, int workers) {
  if (league.empty()) throw DomainError("league_bar: league is empty");
  if (!roles.empty() && roles.size() != league.size())
    throw DomainError("league_bar: roles must match the league size");
  std::vector<LeagueBarRow> rows(league.size());
  parallel_for(league.size(), workers, [&](std::size_t i) {
    const PairCounts c = play_pair(spec, ma, *league[i], n, derive_seed({seed, i}));
    rows[i].model_id = league[i]->model_id;
    rows[i].role = roles.empty() ? "" : roles[i];
    rows[i].win_rate = (static_cast<double>(c.wins) + 0.5 * static_cast<double>(c.draws)) /
                       static_cast<double>(c.n());
  });
  return rows;
}

void write_league_bar_csv(std::ostream& out, const std::vector<LeagueBarRow>& rows) {
  out << "model_id,role,win_rate\n";
  for (const auto& r : rows) out << r.model_id << ',' << r.role << ',' << r.win_rate << '\n';
}

void write_response_csv(std::ostream& out, const std::vector<ResponseRow>& rows) {
  if (rows.empty()) return;
  out << "probe_id,win_rate";
  for (std::size_t k = 0; k < rows[0].move_probs.size(); ++k) out << ",m" << k;
  out << '\n';
  for (const auto& r : rows) {
    out << r.probe_id << ',' << r.win_rate;
    for (double p : r.move_probs) out << ',' << p;
    out << '\n';
  }
}

}  // namespace dlt
