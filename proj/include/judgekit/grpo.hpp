#pragma once

#include <cstdint>
#include <vector>

#include "judgekit/errors.hpp"
#include "judgekit/reward.hpp"
#include "judgekit/util.hpp"

namespace judgekit::grpo {

struct GrpoConfig {
  int group_size = 5;
  double clip_epsilon = 0.5;
  double kl_beta = 1e-3;
  /// Added to the population std before dividing, so uniform groups get
  /// zero advantages instead of NaN.
  double std_smooth = 1e-6;
  double learning_rate = 0.2;
  int iterations = 400;
  std::uint64_t seed = 7;
};

void validate(const GrpoConfig& cfg);

class GroupTooSmallError : public Error {
  using Error::Error;
};
class ZeroOldProbabilityError : public Error {
  using Error::Error;
};

/// Group-relative advantages: (r_i - mean) / (pop_std + smooth).
std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double std_smooth);

/// Categorical policy over a fixed action set, parameterized by logits.
struct ToyPolicy {
  std::vector<double> logits;
  std::vector<double> probabilities() const;
};

/// Exact categorical KL(p || q). Requires q_i > 0 wherever p_i > 0.
double kl_divergence(const std::vector<double>& p,
                     const std::vector<double>& q);

/// One rollout drawn from the old policy, with its normalized advantage.
struct Sample {
  int action = 0;
  double advantage = 0.0;
  double old_prob = 0.0;
};

/// Clipped-ratio surrogate minus the KL penalty against the reference:
///   mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) - beta KL(p||ref)
/// with rho_i = p(a_i) / old_prob_i.
double grpo_objective(const ToyPolicy& policy,
                      const std::vector<double>& reference_probs,
                      const std::vector<Sample>& samples,
                      const GrpoConfig& cfg);

/// Analytic gradient of grpo_objective with respect to the logits. Samples
/// whose clipped branch is strictly active contribute nothing.
std::vector<double> grpo_gradient(const ToyPolicy& policy,
                                  const std::vector<double>& reference_probs,
                                  const std::vector<Sample>& samples,
                                  const GrpoConfig& cfg);

/// Six-armed judging bandit: pick a tool (or none) and a verdict. A used
/// tool earns per-call credit iff it matches the task domain, and flips the
/// realized verdict with probability flip_prob (the retrieval-noise
/// shortcut that outcome-only rewards exploit by never searching).
class JudgingBandit {
 public:
  enum class ToolArm { None, Wiki, Arxiv };
  static constexpr int kNumActions = 6;

  JudgingBandit(reward::RewardConfig reward_cfg, double flip_prob,
                engine::Domain domain = engine::Domain::Scientific,
                protocol::Choice gold = protocol::Choice::A);

  static ToolArm tool_of(int action);
  static protocol::Choice answer_of(int action);
  static const char* action_name(int action);

  double sample_reward(int action, util::Rng& rng) const;
  double expected_reward(int action) const;
  int best_action() const;
  double max_expected_reward() const;

  const reward::RewardConfig& reward_config() const { return reward_cfg_; }

 private:
  reward::RewardConfig reward_cfg_;
  double flip_prob_;
  engine::Domain domain_;
  protocol::Choice gold_;
};

struct TrainRecord {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_advantage_abs = 0.0;
  double kl = 0.0;
  double objective = 0.0;
};

struct TrainResult {
  ToyPolicy policy;
  std::vector<double> reference_probs;
  std::vector<TrainRecord> history;
};

/// Runs GRPO on the bandit from a uniform policy: each iteration draws one
/// group from the current policy, normalizes rewards within the group, and
/// takes one ascent step on the clipped surrogate. The uniform start is the
/// frozen KL reference.
TrainResult train_toy(const JudgingBandit& bandit, const GrpoConfig& cfg);

int sample_categorical(const std::vector<double>& probs, util::Rng& rng);

}  // namespace judgekit::grpo
