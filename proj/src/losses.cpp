#include "dlt/losses.hpp"

#include <algorithm>
#include <cmath>

namespace dlt {

void LossConfig::validate(int horizon) const {
  if (!(discount >= 0.0 && discount <= 1.0)) throw DomainError("loss: discount must lie in [0, 1]");
  if (!(rho_bar > 0.0) || !(c_bar > 0.0)) throw DomainError("loss: clip thresholds must be > 0");
  for (double c : {lambda_vtrace, lambda_upgo, lambda_entropy, lambda_distill, lambda_rgps,
                   lambda_dapo, value_coef})
    if (!(c >= 0.0)) throw DomainError("loss: coefficients must be >= 0");
  if (!(learning_rate >= 0.0)) throw DomainError("loss: learning_rate must be >= 0");
  if (dapo_window > horizon) throw DomainError("loss: dapo_window must not exceed the horizon");
}

int LossConfig::effective_dapo_window(int horizon) const {
  if (dapo_window > 0) return dapo_window;
  return static_cast<int>(std::ceil(0.4 * horizon));
}

nlohmann::json LossConfig::to_json() const {
  return {{"discount", discount},
          {"rho_bar", rho_bar},
          {"c_bar", c_bar},
          {"lambda_vtrace", lambda_vtrace},
          {"lambda_upgo", lambda_upgo},
          {"lambda_entropy", lambda_entropy},
          {"lambda_distill", lambda_distill},
          {"lambda_rgps", lambda_rgps},
          {"lambda_dapo", lambda_dapo},
          {"value_coef", value_coef},
          {"dapo_window", dapo_window},
          {"learning_rate", learning_rate},
          {"upgo_clip_negative", upgo_clip_negative}};
}

LossConfig LossConfig::from_json(const nlohmann::json& doc) { return from_json(doc, LossConfig{}); }

LossConfig LossConfig::from_json(const nlohmann::json& doc, LossConfig c) {
  c.discount = doc.value("discount", c.discount);
  c.rho_bar = doc.value("rho_bar", c.rho_bar);
  c.c_bar = doc.value("c_bar", c.c_bar);
  c.lambda_vtrace = doc.value("lambda_vtrace", c.lambda_vtrace);
  c.lambda_upgo = doc.value("lambda_upgo", c.lambda_upgo);
  c.lambda_entropy = doc.value("lambda_entropy", c.lambda_entropy);
  c.lambda_distill = doc.value("lambda_distill", c.lambda_distill);
  c.lambda_rgps = doc.value("lambda_rgps", c.lambda_rgps);
  c.lambda_dapo = doc.value("lambda_dapo", c.lambda_dapo);
  c.value_coef = doc.value("value_coef", c.value_coef);
  c.dapo_window = doc.value("dapo_window", c.dapo_window);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.upgo_clip_negative = doc.value("upgo_clip_negative", c.upgo_clip_negative);
  return c;
}

std::vector<double> trajectory_values(const Trajectory& traj, const PolicyParams& policy) {
  std::vector<double> v;
  v.reserve(traj.steps.size() + 1);
  for (const auto& st : traj.steps) v.push_back(policy.value(st.encoded_state, st.tag));
  v.push_back(traj.bootstrap_value);
  return v;
}

namespace {

std::vector<double> importance_ratios(const Trajectory& traj, const PolicyParams& policy) {
  std::vector<double> out;
  out.reserve(traj.steps.size());
  for (const auto& st : traj.steps) {
    if (!(st.behavior_prob > 0.0))
      throw DataIntegrityError("trajectory " + traj.model_id + ": behavior_prob must be > 0 (step " +
                               std::to_string(st.step_index) + ")");
    const double pi = policy.probs(st.encoded_state, st.tag)[st.action];
    out.push_back(pi / st.behavior_prob);
  }
  return out;
}

}  // namespace

VTraceOutput vtrace_targets(const Trajectory& traj, const PolicyParams& policy,
                            const LossConfig& cfg) {
  const std::size_t n = traj.steps.size();
  const std::vector<double> ratio = importance_ratios(traj, policy);
  const std::vector<double> V = trajectory_values(traj, policy);
  const double g = cfg.discount;

  VTraceOutput out;
  out.rhos.resize(n);
  out.cs.resize(n);
  out.value_targets.resize(n);
  out.advantages.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    out.rhos[s] = std::min(cfg.rho_bar, ratio[s]);
    out.cs[s] = std::min(cfg.c_bar, ratio[s]);
  }
  // v_s - V(x_s) = delta_s + g c_s (v_{s+1} - V(x_{s+1})), with v_T = V(x_T).
  double next_diff = 0.0;
  double next_target = V[n];
  for (std::size_t s = n; s-- > 0;) {
    const double r = traj.steps[s].reward;
    const double delta = out.rhos[s] * (r + g * V[s + 1] - V[s]);
    const double diff = delta + g * out.cs[s] * next_diff;
    out.value_targets[s] = V[s] + diff;
    out.advantages[s] = out.rhos[s] * (r + g * next_target - V[s]);
    next_diff = diff;
    next_target = out.value_targets[s];
  }
  return out;
}

UpgoOutput upgo_returns(const Trajectory& traj, const PolicyParams& policy,
                        const LossConfig& cfg) {
  const std::size_t n = traj.steps.size();
  (void)importance_ratios(traj, policy);  // integrity check only
  const std::vector<double> V = trajectory_values(traj, policy);
  const double g = cfg.discount;

  UpgoOutput out;
  out.returns.resize(n);
  out.weights.resize(n);
  for (std::size_t t = n; t-- > 0;) {
    const double r = traj.steps[t].reward;
    if (t + 1 == n) {
      out.returns[t] = r + g * V[n];
    } else {
      const double q_next = traj.steps[t + 1].reward + g * V[t + 2];
      out.returns[t] = r + g * (q_next >= V[t + 1] ? out.returns[t + 1] : V[t + 1]);
    }
    const double w = out.returns[t] - V[t];
    out.weights[t] = cfg.upgo_clip_negative ? std::max(0.0, w) : w;
  }
  return out;
}

TermResult weighted_log_prob_loss(const Trajectory& traj, const PolicyParams& policy,
                                  const std::vector<double>& weights) {
  TermResult out;
  out.grad.assign(policy.logits().size(), 0.0);
  const int m = policy.num_moves();
  for (std::size_t s = 0; s < traj.steps.size(); ++s) {
    const auto& st = traj.steps[s];
    const Distribution pi = policy.probs(st.encoded_state, st.tag);
    const std::size_t off = policy.logit_offset(st.encoded_state, st.tag);
    const double w = weights[s];
    out.loss -= w * std::log(pi[st.action]);
    for (int a = 0; a < m; ++a) out.grad[off + a] -= w * ((a == st.action ? 1.0 : 0.0) - pi[a]);
  }
  return out;
}

TermResult vtrace_policy_loss(const Trajectory& traj, const PolicyParams& policy,
                              const LossConfig& cfg) {
  return weighted_log_prob_loss(traj, policy, vtrace_targets(traj, policy, cfg).advantages);
}

TermResult upgo_policy_loss(const Trajectory& traj, const PolicyParams& policy,
                            const LossConfig& cfg) {
  UpgoOutput up = upgo_returns(traj, policy, cfg);
  const std::vector<double> ratio = importance_ratios(traj, policy);
  for (std::size_t t = 0; t < up.weights.size(); ++t)
    up.weights[t] *= std::min(cfg.rho_bar, ratio[t]);
  return weighted_log_prob_loss(traj, policy, up.weights);
}

TermResult entropy_loss(const Trajectory& traj, const PolicyParams& policy) {
  TermResult out;
  out.grad.assign(policy.logits().size(), 0.0);
  const int m = policy.num_moves();
  for (const auto& st : traj.steps) {
    const Distribution pi = policy.probs(st.encoded_state, st.tag);
    const std::size_t off = policy.logit_offset(st.encoded_state, st.tag);
    double neg_entropy = 0.0;
    for (double p : pi)
      if (p > 0.0) neg_entropy += p * std::log(p);
    out.loss += neg_entropy;
    for (int a = 0; a < m; ++a)
      if (pi[a] > 0.0) out.grad[off + a] += pi[a] * (std::log(pi[a]) - neg_entropy);
  }
  return out;
}

namespace {

void add_kl_step(TermResult& out, const PolicyParams& policy, const TrajectoryStep& st,
                 const Distribution& target) {
  const int m = policy.num_moves();
  const Distribution live = policy.probs(st.encoded_state, st.tag);
  const std::size_t off = policy.logit_offset(st.encoded_state, st.tag);
  for (int a = 0; a < m; ++a) {
    if (target[a] > 0.0) out.loss += target[a] * (std::log(target[a]) - std::log(live[a]));
    out.grad[off + a] += live[a] - target[a];
  }
}

}  // namespace

TermResult kl_to_live(const Trajectory& traj, const PolicyParams& policy, const Policy& teacher,
                      const std::function<bool(const TrajectoryStep&)>& active) {
  TermResult out;
  out.grad.assign(policy.logits().size(), 0.0);
  for (const auto& st : traj.steps) {
    if (!active(st)) continue;
    const PlayerView view = policy.encoder().decode(st.encoded_state, st.step_index);
    add_kl_step(out, policy, st, teacher.distribution(view, st.tag));
  }
  return out;
}

TermResult rgps_loss(const Trajectory& traj, const PolicyParams& policy) {
  TermResult out;
  out.grad.assign(policy.logits().size(), 0.0);
  for (const auto& st : traj.steps) {
    if (!st.critical) continue;
    check_distribution(st.expert, policy.num_moves());
    add_kl_step(out, policy, st, st.expert);
  }
  return out;
}

TermResult dapo_loss(const Trajectory& traj, const PolicyParams& policy, const Policy* prev,
                     const LossConfig& cfg, int horizon) {
  if (prev == nullptr) return {0.0, std::vector<double>(policy.logits().size(), 0.0)};
  const int window = cfg.effective_dapo_window(horizon);
  return kl_to_live(traj, policy, *prev,
                    [window](const TrajectoryStep& st) { return st.step_index < window; });
}

TermResult distill_loss(const Trajectory& traj, const PolicyParams& policy,
                        const Policy& teacher) {
  return kl_to_live(traj, policy, teacher, [](const TrajectoryStep&) { return true; });
}

nlohmann::json LossReport::to_json() const {
  return {{"vtrace", vtrace},   {"upgo", upgo},   {"entropy", entropy},
          {"distill", distill}, {"rgps", rgps},   {"dapo", dapo},
          {"value", value},     {"total", total}, {"grad_norm", grad_norm},
          {"ratio_clip_fraction", ratio_clip_fraction}, {"steps", steps}};
}

namespace {

void axpy(std::vector<double>& acc, double scale, const std::vector<double>& g) {
  if (scale == 0.0) return;
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * g[i];
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

BatchGradient total_gradient(const std::vector<Trajectory>& batch, const PolicyParams& policy,
                             const LossConfig& cfg, const UpdateContext& ctx) {
  if (batch.empty()) throw DomainError("total_update: empty batch");
  BatchGradient out;
  out.logit_grad.assign(policy.logits().size(), 0.0);
  out.value_grad.assign(policy.values().size(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossReport& rep = out.report;

  for (const auto& traj : batch) {
    rep.steps += traj.steps.size();
    const VTraceOutput vt = vtrace_targets(traj, policy, cfg);
    if (cfg.lambda_vtrace > 0.0) {
      const TermResult t = weighted_log_prob_loss(traj, policy, vt.advantages);
      rep.vtrace += inv * t.loss;
      axpy(out.logit_grad, inv * cfg.lambda_vtrace, t.grad);
    }
    if (cfg.lambda_upgo > 0.0) {
      const TermResult t = upgo_policy_loss(traj, policy, cfg);
      rep.upgo += inv * t.loss;
      axpy(out.logit_grad, inv * cfg.lambda_upgo, t.grad);
    }
    if (cfg.lambda_entropy > 0.0) {
      const TermResult t = entropy_loss(traj, policy);
      rep.entropy += inv * t.loss;
      axpy(out.logit_grad, inv * cfg.lambda_entropy, t.grad);
    }
    if (cfg.lambda_distill > 0.0 && ctx.teacher != nullptr) {
      const TermResult t = distill_loss(traj, policy, *ctx.teacher);
      rep.distill += inv * t.loss;
      axpy(out.logit_grad, inv * cfg.lambda_distill, t.grad);
    }
    if (cfg.lambda_rgps > 0.0) {
      const TermResult t = rgps_loss(traj, policy);
      rep.rgps += inv * t.loss;
      axpy(out.logit_grad, inv * cfg.lambda_rgps, t.grad);
    }
    if (cfg.lambda_dapo > 0.0 && ctx.dapo_active && ctx.prev_snapshot != nullptr) {
      const TermResult t = dapo_loss(traj, policy, ctx.prev_snapshot, cfg, ctx.horizon);
      rep.dapo += inv * t.loss;
      axpy(out.logit_grad, inv * cfg.lambda_dapo, t.grad);
    }
    if (cfg.value_coef > 0.0) {
      for (std::size_t s = 0; s < traj.steps.size(); ++s) {
        const auto& st = traj.steps[s];
        const double err = policy.value(st.encoded_state, st.tag) - vt.value_targets[s];
        rep.value += inv * cfg.value_coef * err * err;
        out.value_grad[policy.slot(st.encoded_state, st.tag)] += inv * 2.0 * cfg.value_coef * err;
      }
    }
  }
  rep.total = cfg.lambda_vtrace * rep.vtrace + cfg.lambda_upgo * rep.upgo +
              cfg.lambda_entropy * rep.entropy + cfg.lambda_distill * rep.distill +
              cfg.lambda_rgps * rep.rgps + cfg.lambda_dapo * rep.dapo + rep.value;
  double sq = 0.0;
  for (double g : out.logit_grad) sq += g * g;
  rep.grad_norm = std::sqrt(sq);
  return out;
}

LossReport total_update(const std::vector<Trajectory>& batch, PolicyParams& policy,
                        const LossConfig& cfg, const UpdateContext& ctx) {
  BatchGradient g = total_gradient(batch, policy, cfg, ctx);
  const LossReport& r = g.report;
  for (double x : {r.vtrace, r.upgo, r.entropy, r.distill, r.rgps, r.dapo, r.value, r.total})
    if (!std::isfinite(x))
      throw NonFiniteLoss("total_update: non-finite loss " + r.to_json().dump());
  if (!all_finite(g.logit_grad) || !all_finite(g.value_grad))
    throw NonFiniteLoss("total_update: non-finite gradient " + r.to_json().dump());

  auto& logits = policy.logits();
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= cfg.learning_rate * g.logit_grad[i];
  auto& values = policy.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] -= cfg.learning_rate * g.value_grad[i];
  policy.clamp_logits();
  return g.report;
}

}  // namespace dlt
