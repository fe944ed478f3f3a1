#pragma once

// Loss-stack checks shared by the unit tests and the acceptance binary. Each
// returns the worst discrepancy against an independent reference.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dlt/losses.hpp"
#include "oracles.hpp"

namespace checks {

using namespace dlt;

inline PolicyParams random_params(int m, int tags, Rng& rng, double scale = 2.0) {
  PolicyParams p(m, tags);
  for (auto& x : p.logits()) x = (uniform01(rng) - 0.5) * 2.0 * scale;
  for (auto& x : p.values()) x = uniform01(rng) * 2.0 - 1.0;
  return p;
}

inline Trajectory random_trajectory(const PolicyParams& behavior, int length, Rng& rng) {
  Trajectory t;
  t.model_id = "b";
  const int m = behavior.num_moves();
  for (int i = 0; i < length; ++i) {
    TrajectoryStep st;
    st.encoded_state = static_cast<int>(rng() % behavior.num_states());
    st.tag = static_cast<int>(rng() % behavior.tag_count());
    st.action = static_cast<int>(rng() % m);
    st.behavior_prob = behavior.probs(st.encoded_state, st.tag)[st.action];
    st.reward = i + 1 == length ? (rng() % 3) - 1.0 : 0.0;
    st.step_index = i;
    st.critical = rng() % 2 == 0;
    if (st.critical) {
      st.expert.assign(m, 0.0);
      st.expert[rng() % m] = 1.0;
    }
    t.steps.push_back(st);
  }
  return t;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

// Central differences of a loss with respect to the logits.
inline std::vector<double> fd_grad(const PolicyParams& base,
                                   const std::function<double(const PolicyParams&)>& loss) {
  return oracle::finite_difference(
      [&](const std::vector<double>& x) {
        PolicyParams p = base;
        p.logits() = x;
        return loss(p);
      },
      base.logits(), 1e-5);
}

// Worst relative error of the six policy-loss gradients over random instances.
inline double worst_gradient_error(int instances, std::uint64_t seed) {
  Rng rng(seed);
  LossConfig cfg;
  cfg.rho_bar = 1.0;
  cfg.c_bar = 1.0;
  double worst = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    const PolicyParams live = random_params(3, 2, rng);
    const PolicyParams behavior = random_params(3, 2, rng);
    const PolicyParams teacher = random_params(3, 2, rng);
    const Trajectory traj = random_trajectory(behavior, 6, rng);

    // Advantage weights are constants of the surrogate.
    const auto vt_w = vtrace_targets(traj, live, cfg).advantages;
    auto up = upgo_returns(traj, live, cfg);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& st = traj.steps[t];
      up.weights[t] *= std::min(cfg.rho_bar, live.probs(st.encoded_state, st.tag)[st.action] / st.behavior_prob);
    }

    const std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs = {
        {vtrace_policy_loss(traj, live, cfg).grad,
         fd_grad(live, [&](const PolicyParams& p) { return weighted_log_prob_loss(traj, p, vt_w).loss; })},
        {upgo_policy_loss(traj, live, cfg).grad,
         fd_grad(live, [&](const PolicyParams& p) { return weighted_log_prob_loss(traj, p, up.weights).loss; })},
        {entropy_loss(traj, live).grad,
         fd_grad(live, [&](const PolicyParams& p) { return entropy_loss(traj, p).loss; })},
        {distill_loss(traj, live, teacher).grad,
         fd_grad(live, [&](const PolicyParams& p) { return distill_loss(traj, p, teacher).loss; })},
        {rgps_loss(traj, live).grad,
         fd_grad(live, [&](const PolicyParams& p) { return rgps_loss(traj, p).loss; })},
        {dapo_loss(traj, live, &teacher, cfg, 6).grad,
         fd_grad(live, [&](const PolicyParams& p) { return dapo_loss(traj, p, &teacher, cfg, 6).loss; })},
    };
    for (const auto& [analytic, numeric] : pairs) worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

// On-policy, unit clips, no discount: V-trace targets vs Monte-Carlo returns.
inline double worst_vtrace_mc_error(int instances, std::uint64_t seed) {
  Rng rng(seed);
  LossConfig cfg;
  double worst = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    const PolicyParams p = random_params(4, 1, rng);
    Trajectory t = random_trajectory(p, 1 + static_cast<int>(rng() % 10), rng);
    std::vector<double> rewards;
    for (auto& st : t.steps) {
      st.reward = uniform01(rng) - 0.5;
      rewards.push_back(st.reward);
    }
    const auto out = vtrace_targets(t, p, cfg);
    for (std::size_t s = 0; s < rewards.size(); ++s)
      worst = std::max(worst, std::abs(out.value_targets[s] - oracle::mc_return(rewards, 0.0, 1.0, s)));
  }
  return worst;
}

struct UpgoSweep {
  long trajectories = 0;
  double worst = 0.0;
};

// Every trajectory of length 1..4 over two states and two actions.
inline UpgoSweep upgo_brute_force() {
  PolicyParams p(2, 1);
  Rng rng(77);
  for (auto& x : p.logits()) x = uniform01(rng) - 0.5;
  p.value(0, 0) = 0.3;
  p.value(1, 0) = -0.2;
  LossConfig cfg;
  cfg.discount = 0.9;
  const double reward_table[2][2] = {{0.5, -0.25}, {-0.75, 1.0}};
  UpgoSweep out;
  for (int len = 1; len <= 4; ++len) {
    const int combos = 1 << (2 * len);
    for (int code = 0; code < combos; ++code) {
      Trajectory t;
      std::vector<double> rewards, values;
      for (int i = 0; i < len; ++i) {
        const int sa = (code >> (2 * i)) & 3;
        TrajectoryStep st;
        st.encoded_state = sa >> 1;
        st.action = sa & 1;
        st.behavior_prob = p.probs(st.encoded_state, 0)[st.action];
        st.reward = reward_table[st.encoded_state][st.action];
        st.step_index = i;
        t.steps.push_back(st);
        rewards.push_back(st.reward);
        values.push_back(p.value(st.encoded_state, 0));
      }
      t.bootstrap_value = 0.1;
      values.push_back(t.bootstrap_value);
      const auto r = upgo_returns(t, p, cfg);
      for (int i = 0; i < len; ++i) {
        const double g = oracle::upgo_return(rewards, values, cfg.discount, i);
        out.worst = std::max(out.worst, std::abs(r.returns[i] - g));
        out.worst = std::max(out.worst, std::abs(r.weights[i] - std::max(0.0, g - values[i])));
      }
      ++out.trajectories;
    }
  }
  return out;
}

}  // namespace checks
