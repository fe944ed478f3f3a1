#pragma once

// Loss stack for tabular softmax policies: V-trace, UPGO, entropy,
// distillation, rule-guided KL (RGPS) and the previous-period KL anchor
// (DAPO). Every term returns its value and its exact gradient with respect to
// the logits table; the advantage-weighted terms treat their weights as
// constants.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlt/policy.hpp"

namespace dlt {

struct LossConfig {
  double discount = 1.0;
  double rho_bar = 1.0;
  double c_bar = 1.0;
  double lambda_vtrace = 1.0;
  double lambda_upgo = 1.0;
  double lambda_entropy = 0.01;
  double lambda_distill = 0.01;
  double lambda_rgps = 1.0;
  double lambda_dapo = 1.0;
  double value_coef = 0.5;
  int dapo_window = 0;  // <= 0 means ceil(0.4 * H)
  double learning_rate = 0.2;
  bool upgo_clip_negative = true;

  void validate(int horizon) const;
  int effective_dapo_window(int horizon) const;

  nlohmann::json to_json() const;
  static LossConfig from_json(const nlohmann::json& doc);
  static LossConfig from_json(const nlohmann::json& doc, LossConfig base);
};

class DataIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Values V(x_s) of the live table along the trajectory plus V(x_T) =
// bootstrap_value at the end (length T + 1).
std::vector<double> trajectory_values(const Trajectory& traj, const PolicyParams& policy);

struct VTraceOutput {
  std::vector<double> value_targets;  // v_s
  std::vector<double> advantages;     // rho_s (r_s + g v_{s+1} - V(x_s))
  std::vector<double> rhos;           // min(rho_bar, pi/mu)
  std::vector<double> cs;             // min(c_bar, pi/mu)
};

VTraceOutput vtrace_targets(const Trajectory& traj, const PolicyParams& policy,
                            const LossConfig& cfg);

struct UpgoOutput {
  std::vector<double> returns;  // G_t
  std::vector<double> weights;  // G_t - V(x_t), clipped below at 0 unless disabled
};

UpgoOutput upgo_returns(const Trajectory& traj, const PolicyParams& policy,
                        const LossConfig& cfg);

// Gradient with the same layout as PolicyParams::logits().
struct TermResult {
  double loss = 0.0;
  std::vector<double> grad;
};

// Policy-gradient surrogate -sum_s weight_s * log pi(a_s | x_s).
TermResult weighted_log_prob_loss(const Trajectory& traj, const PolicyParams& policy,
                                  const std::vector<double>& weights);

TermResult vtrace_policy_loss(const Trajectory& traj, const PolicyParams& policy,
                              const LossConfig& cfg);
TermResult upgo_policy_loss(const Trajectory& traj, const PolicyParams& policy,
                            const LossConfig& cfg);
TermResult entropy_loss(const Trajectory& traj, const PolicyParams& policy);
TermResult rgps_loss(const Trajectory& traj, const PolicyParams& policy);
// `prev` may be null (no earlier period), in which case the term is 0.
TermResult dapo_loss(const Trajectory& traj, const PolicyParams& policy, const Policy* prev,
                     const LossConfig& cfg, int horizon);
TermResult distill_loss(const Trajectory& traj, const PolicyParams& policy,
                        const Policy& teacher);

// KL(teacher || live) summed over the steps for which `active` holds.
TermResult kl_to_live(const Trajectory& traj, const PolicyParams& policy, const Policy& teacher,
                      const std::function<bool(const TrajectoryStep&)>& active);

struct LossReport {
  double vtrace = 0.0;
  double upgo = 0.0;
  double entropy = 0.0;
  double distill = 0.0;
  double rgps = 0.0;
  double dapo = 0.0;
  double value = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  // Reserved for a clipped-ratio surrogate; always 0 here.
  double ratio_clip_fraction = 0.0;
  std::size_t steps = 0;

  nlohmann::json to_json() const;
};

struct UpdateContext {
  const Policy* teacher = nullptr;        // distillation target
  const Policy* prev_snapshot = nullptr;  // DAPO anchor
  bool dapo_active = true;
  int horizon = 1;
};

struct BatchGradient {
  LossReport report;
  std::vector<double> logit_grad;
  std::vector<double> value_grad;
};

// The lambda-weighted gradient of the full objective averaged over the batch.
BatchGradient total_gradient(const std::vector<Trajectory>& batch, const PolicyParams& policy,
                             const LossConfig& cfg, const UpdateContext& ctx);

// One gradient step on the combined objective. Throws NonFiniteLoss and leaves
// `policy` untouched if any term is not finite.
LossReport total_update(const std::vector<Trajectory>& batch, PolicyParams& policy,
                        const LossConfig& cfg, const UpdateContext& ctx);

}  // namespace dlt
