// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace abstain::grpo {

struct GrpoConfig {
  double clip_epsilon = 0.2;
  double kl_beta = 0.001;
  int group_size = 5;
  double std_floor = 1e-8;

  void validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
      throw std::invalid_argument("clip_epsilon must be in (0, 1)");
    if (kl_beta < 0.0) throw std::invalid_argument("kl_beta must be >= 0");
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
    if (!(std_floor > 0.0)) throw std::invalid_argument("std_floor must be > 0");
  }
};

// Per-sequence log-probabilities for one query's sampled group under the
// current, old, and reference policies, with the scored rewards.
struct RolloutGroup {
  std::string query_id;
  std::vector<double> rewards;
  std::vector<double> logp_old;
  std::vector<double> logp_new;
  std::vector<double> logp_ref;

  std::size_t size() const { return rewards.size(); }

  void validate() const {
    if (rewards.size() < 2)
      throw std::invalid_argument("rollout group needs at least 2 members");
    if (logp_old.size() != rewards.size() || logp_new.size() != rewards.size() ||
        logp_ref.size() != rewards.size())
      throw std::invalid_argument("rollout group arrays must have equal length");
    for (double r : rewards)
      if (!std::isfinite(r)) throw std::invalid_argument("rewards must be finite");
  }
};

// Group-relative advantages: (r_i - mean) / (population std + floor).
// A constant-reward group yields exactly zero advantages.
inline std::vector<double> group_advantages(std::span<const double> rewards,
                                            double std_floor) {
  if (rewards.size() < 2)
    throw std::invalid_argument("group_advantages needs at least 2 rewards");
  for (double r : rewards)
    if (!std::isfinite(r)) throw std::invalid_argument("rewards must be finite");
  std::vector<double> adv(rewards.size(), 0.0);
  const auto [mn, mx] = std::minmax_element(rewards.begin(), rewards.end());
  if (*mn == *mx) return adv;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double denom = std::sqrt(var) + std_floor;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

inline double importance_ratio(double logp_new, double logp_old) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old))
    throw std::invalid_argument("importance_ratio requires finite log-probabilities");
  return std::exp(logp_new - logp_old);
}

// min(ratio * A, clip(ratio, 1-eps, 1+eps) * A); the pessimistic branch of
// the clipped surrogate.
inline double clipped_term(double ratio, double advantage, double clip_epsilon) {
  if (!(ratio > 0.0)) throw std::invalid_argument("ratio must be > 0");
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

// Nonnegative per-sequence KL estimator exp(d) - d - 1 with d = ref - new.
// Zero exactly when the two log-probabilities coincide.
inline double kl_term(double logp_new, double logp_ref) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_ref))
    throw std::invalid_argument("kl_term requires finite log-probabilities");
  const double d = logp_ref - logp_new;
  const double v = std::exp(d) - d - 1.0;
  return v > 0.0 ? v : 0.0;
}

// (1/G) sum_i min(r_i A_i, clip(r_i) A_i) - beta (1/G) sum_i kl_i
inline double grpo_objective(const RolloutGroup& group, const GrpoConfig& config) {
  group.validate();
  config.validate();
  const auto adv = group_advantages(group.rewards, config.std_floor);
  const double n = static_cast<double>(group.size());
  double surrogate = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const double ratio = importance_ratio(group.logp_new[i], group.logp_old[i]);
    surrogate += clipped_term(ratio, adv[i], config.clip_epsilon);
    kl += kl_term(group.logp_new[i], group.logp_ref[i]);
  }
  return surrogate / n - config.kl_beta * (kl / n);
}

// ---------------------------------------------------------------------------
// Categorical policy utilities
// ---------------------------------------------------------------------------

inline double logsumexp(std::span<const double> logits) {
  double m = logits[0];
  for (double l : logits) m = std::max(m, l);
  double s = 0.0;
  for (double l : logits) s += std::exp(l - m);
  return m + std::log(s);
}

inline double softmax_logprob(std::span<const double> logits, int action) {
  if (logits.size() < 2)
    throw std::invalid_argument("softmax_logprob needs at least 2 logits");
  if (action < 0 || static_cast<std::size_t>(action) >= logits.size())
    throw std::out_of_range("action index out of range");
  return logits[action] - logsumexp(logits);
}

inline std::vector<double> softmax_probs(std::span<const double> logits) {
  double m = logits[0];
  for (double l : logits) m = std::max(m, l);
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

using LogitsMatrix = std::vector<std::vector<double>>;

// One query's sampled group for a categorical policy over observation bins.
// logp_new is derived from the live logits; old/ref values are snapshots.
struct SampledGroup {
  int bin = 0;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;

  void validate(std::size_t bins) const {
    if (bin < 0 || static_cast<std::size_t>(bin) >= bins)
      throw std::invalid_argument("sampled group bin out of range");
    if (actions.size() < 2)
      throw std::invalid_argument("sampled group needs at least 2 members");
    if (rewards.size() != actions.size() || logp_old.size() != actions.size() ||
        logp_ref.size() != actions.size())
      throw std::invalid_argument("sampled group arrays must have equal length");
  }
};

// Mean group objective over the batch, with logp_new recomputed from logits.
inline double batch_objective(const LogitsMatrix& logits,
                              std::span<const SampledGroup> groups,
                              const GrpoConfig& config) {
  config.validate();
  if (groups.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : groups) {
    g.validate(logits.size());
    const auto& row = logits[g.bin];
    const auto adv = group_advantages(g.rewards, config.std_floor);
    const double n = static_cast<double>(g.actions.size());
    double surrogate = 0.0;
    double kl = 0.0;
    for (std::size_t i = 0; i < g.actions.size(); ++i) {
      const double lp = softmax_logprob(row, g.actions[i]);
      const double ratio = importance_ratio(lp, g.logp_old[i]);
      surrogate += clipped_term(ratio, adv[i], config.clip_epsilon);
      kl += kl_term(lp, g.logp_ref[i]);
    }
    total += surrogate / n - config.kl_beta * (kl / n);
  }
  return total / static_cast<double>(groups.size());
}

// Analytic gradient of batch_objective with respect to the logits. Summation
// order is fixed, so results are bit-stable for a given batch.
inline LogitsMatrix batch_objective_gradient(const LogitsMatrix& logits,
                                             std::span<const SampledGroup> groups,
                                             const GrpoConfig& config) {
  config.validate();
  LogitsMatrix grad(logits.size());
  for (std::size_t b = 0; b < logits.size(); ++b) grad[b].assign(logits[b].size(), 0.0);
  if (groups.empty()) return grad;
  const double batch_scale = 1.0 / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    g.validate(logits.size());
    const auto& row = logits[g.bin];
    const auto probs = softmax_probs(row);
    const auto adv = group_advantages(g.rewards, config.std_floor);
    const double n = static_cast<double>(g.actions.size());
    for (std::size_t i = 0; i < g.actions.size(); ++i) {
      const int a = g.actions[i];
      const double lp = softmax_logprob(row, a);
      const double ratio = importance_ratio(lp, g.logp_old[i]);
      const double unclipped = ratio * adv[i];
      const double clipped =
          std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * adv[i];
      // d min / d logp: the unclipped branch when it is selected, else zero.
      const double dmin_dlp = (unclipped <= clipped) ? adv[i] * ratio : 0.0;
      const double dkl_dlp = 1.0 - std::exp(g.logp_ref[i] - lp);
      const double coeff = batch_scale * (dmin_dlp - config.kl_beta * dkl_dlp) / n;
      for (std::size_t k = 0; k < row.size(); ++k) {
        const double indicator = (static_cast<int>(k) == a) ? 1.0 : 0.0;
        grad[g.bin][k] += coeff * (indicator - probs[k]);
      }
    }
  }
  return grad;
}

}  // namespace abstain::grpo
