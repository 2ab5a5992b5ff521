#include "judgekit/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace judgekit::grpo {

void validate(const GrpoConfig& cfg) {
  if (cfg.group_size < 2)
    throw ConfigError("group_size must be at least 2, got " +
                      std::to_string(cfg.group_size));
  if (!(cfg.clip_epsilon > 0.0) || cfg.clip_epsilon >= 1.0)
    throw ConfigError("clip_epsilon must lie in (0, 1)");
  if (cfg.kl_beta < 0.0) throw ConfigError("kl_beta must be non-negative");
  if (!(cfg.std_smooth > 0.0)) throw ConfigError("std_smooth must be positive");
  if (!(cfg.learning_rate > 0.0))
    throw ConfigError("learning_rate must be positive");
  if (cfg.iterations < 1) throw ConfigError("iterations must be at least 1");
}

std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double std_smooth) {
  const std::size_t m = rewards.size();
  if (m < 2)
    throw GroupTooSmallError("advantage normalization needs a group of >= 2, got " +
                             std::to_string(m));
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(m);
  const double denom = std::sqrt(var) + std_smooth;
  std::vector<double> adv(m);
  for (std::size_t i = 0; i < m; ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

std::vector<double> ToyPolicy::probabilities() const {
  std::vector<double> p(logits.size());
  double zmax = -std::numeric_limits<double>::infinity();
  for (double z : logits) zmax = std::max(zmax, z);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double kl_divergence(const std::vector<double>& p,
                     const std::vector<double>& q) {
  if (p.size() != q.size())
    throw Error("kl_divergence: distributions differ in size");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0)
      throw Error("kl_divergence: reference assigns zero mass to a supported action");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

namespace {

constexpr double kMinOldProb = 1e-12;

double clip(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

}  // namespace

double grpo_objective(const ToyPolicy& policy,
                      const std::vector<double>& reference_probs,
                      const std::vector<Sample>& samples,
                      const GrpoConfig& cfg) {
  if (samples.empty()) throw GroupTooSmallError("objective needs samples");
  const std::vector<double> p = policy.probabilities();
  double surrogate = 0.0;
  for (const Sample& s : samples) {
    if (s.old_prob < kMinOldProb)
      throw ZeroOldProbabilityError(
          "sampled action has (near-)zero probability under the old policy");
    const double rho = p.at(static_cast<std::size_t>(s.action)) / s.old_prob;
    const double clipped =
        clip(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    surrogate += std::min(rho * s.advantage, clipped * s.advantage);
  }
  surrogate /= static_cast<double>(samples.size());
  return surrogate - cfg.kl_beta * kl_divergence(p, reference_probs);
}

std::vector<double> grpo_gradient(const ToyPolicy& policy,
                                  const std::vector<double>& reference_probs,
                                  const std::vector<Sample>& samples,
                                  const GrpoConfig& cfg) {
  if (samples.empty()) throw GroupTooSmallError("gradient needs samples");
  const std::vector<double> p = policy.probabilities();
  const std::size_t n = p.size();
  std::vector<double> grad(n, 0.0);

  for (const Sample& s : samples) {
    if (s.old_prob < kMinOldProb)
      throw ZeroOldProbabilityError(
          "sampled action has (near-)zero probability under the old policy");
    const std::size_t a = static_cast<std::size_t>(s.action);
    const double rho = p.at(a) / s.old_prob;
    const double clipped =
        clip(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    // The pessimistic min: only the unclipped branch carries a gradient.
    if (rho * s.advantage > clipped * s.advantage) continue;
    // d rho / d z_j = rho * (delta_aj - p_j)
    const double coeff = s.advantage * rho;
    for (std::size_t j = 0; j < n; ++j) {
      const double delta = (j == a) ? 1.0 : 0.0;
      grad[j] += coeff * (delta - p[j]);
    }
  }
  const double inv_m = 1.0 / static_cast<double>(samples.size());
  for (double& g : grad) g *= inv_m;

  if (cfg.kl_beta > 0.0) {
    const double kl = kl_divergence(p, reference_probs);
    for (std::size_t j = 0; j < n; ++j) {
      if (p[j] <= 0.0) continue;
      grad[j] -= cfg.kl_beta * p[j] * (std::log(p[j] / reference_probs[j]) - kl);
    }
  }
  return grad;
}

JudgingBandit::JudgingBandit(reward::RewardConfig reward_cfg, double flip_prob,
                             engine::Domain domain, protocol::Choice gold)
    : reward_cfg_(reward_cfg),
      flip_prob_(flip_prob),
      domain_(domain),
      gold_(gold) {
  if (flip_prob < 0.0 || flip_prob > 1.0)
    throw ConfigError("flip_prob must lie in [0, 1]");
}

JudgingBandit::ToolArm JudgingBandit::tool_of(int action) {
  switch (action / 2) {
    case 0: return ToolArm::None;
    case 1: return ToolArm::Wiki;
    default: return ToolArm::Arxiv;
  }
}

protocol::Choice JudgingBandit::answer_of(int action) {
  return action % 2 == 0 ? protocol::Choice::A : protocol::Choice::B;
}

const char* JudgingBandit::action_name(int action) {
  static const char* kNames[kNumActions] = {"none/A",  "none/B", "wiki/A",
                                            "wiki/B",  "arxiv/A", "arxiv/B"};
  return kNames[action];
}

namespace {

protocol::Choice flipped(protocol::Choice c) {
  return c == protocol::Choice::A ? protocol::Choice::B : protocol::Choice::A;
}

}  // namespace

double JudgingBandit::sample_reward(int action, util::Rng& rng) const {
  const ToolArm arm = tool_of(action);
  protocol::Choice verdict = answer_of(action);
  reward::ToolCorrectness correctness;
  if (arm != ToolArm::None) {
    const protocol::Tool used =
        arm == ToolArm::Wiki ? protocol::Tool::Wiki : protocol::Tool::Arxiv;
    const bool right_tool = used == reward::expected_tool(domain_);
    correctness.push_back(right_tool ? reward::CallJudgment::Correct
                                     : reward::CallJudgment::Incorrect);
    if (rng.next_double() < flip_prob_) verdict = flipped(verdict);
  }
  const int r_em = verdict == gold_ ? 1 : 0;
  return reward::compute_reward(r_em, correctness, reward_cfg_).total;
}

double JudgingBandit::expected_reward(int action) const {
  const ToolArm arm = tool_of(action);
  const protocol::Choice verdict = answer_of(action);
  reward::ToolCorrectness correctness;
  double p_match = verdict == gold_ ? 1.0 : 0.0;
  if (arm != ToolArm::None) {
    const protocol::Tool used =
        arm == ToolArm::Wiki ? protocol::Tool::Wiki : protocol::Tool::Arxiv;
    const bool right_tool = used == reward::expected_tool(domain_);
    correctness.push_back(right_tool ? reward::CallJudgment::Correct
                                     : reward::CallJudgment::Incorrect);
    p_match = verdict == gold_ ? 1.0 - flip_prob_ : flip_prob_;
  }
  const double r_if_match =
      reward::compute_reward(1, correctness, reward_cfg_).total;
  const double r_if_miss =
      reward::compute_reward(0, correctness, reward_cfg_).total;
  return p_match * r_if_match + (1.0 - p_match) * r_if_miss;
}

int JudgingBandit::best_action() const {
  int best = 0;
  double best_r = expected_reward(0);
  for (int a = 1; a < kNumActions; ++a) {
    const double r = expected_reward(a);
    if (r > best_r) {
      best_r = r;
      best = a;
    }
  }
  return best;
}

double JudgingBandit::max_expected_reward() const {
  return expected_reward(best_action());
}

int sample_categorical(const std::vector<double>& probs, util::Rng& rng) {
  const double u = rng.next_double();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

TrainResult train_toy(const JudgingBandit& bandit, const GrpoConfig& cfg) {
  validate(cfg);
  TrainResult out;
  out.policy.logits.assign(JudgingBandit::kNumActions, 0.0);
  out.reference_probs = out.policy.probabilities();
  out.history.reserve(static_cast<std::size_t>(cfg.iterations));

  util::Rng rng(cfg.seed);
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::vector<double> old_probs = out.policy.probabilities();
    std::vector<int> actions(static_cast<std::size_t>(cfg.group_size));
    std::vector<double> rewards(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) {
      actions[i] = sample_categorical(old_probs, rng);
      rewards[i] = bandit.sample_reward(actions[i], rng);
    }
    const std::vector<double> adv = group_advantages(rewards, cfg.std_smooth);
    std::vector<Sample> samples(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) {
      samples[i] = {actions[i], adv[i],
                    old_probs[static_cast<std::size_t>(actions[i])]};
    }
    const std::vector<double> grad =
        grpo_gradient(out.policy, out.reference_probs, samples, cfg);
    for (std::size_t j = 0; j < out.policy.logits.size(); ++j)
      out.policy.logits[j] += cfg.learning_rate * grad[j];

    TrainRecord rec;
    rec.iteration = it;
    double mr = 0.0, ma = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      mr += rewards[i];
      ma += std::abs(adv[i]);
    }
    rec.mean_reward = mr / static_cast<double>(rewards.size());
    rec.mean_advantage_abs = ma / static_cast<double>(adv.size());
    rec.kl = kl_divergence(out.policy.probabilities(), out.reference_probs);
    rec.objective = grpo_objective(out.policy, out.reference_probs, samples, cfg);
    out.history.push_back(rec);
  }
  return out;
}

}  // namespace judgekit::grpo
