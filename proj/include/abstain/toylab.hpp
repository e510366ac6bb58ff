// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "abstain/grpo.hpp"
#include "abstain/metrics.hpp"
#include "abstain/parse.hpp"
#include "abstain/reward.hpp"
#include "abstain/types.hpp"
#include "abstain/util.hpp"
#include "abstain/verifier.hpp"

namespace abstain::toylab {

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

// The four actions span every branch of the composite reward: a boxed answer
// attempt, an abstention with an on-target clarification, an abstention with
// an off-target clarification, and a structurally invalid response.
enum class ToyAction : int {
  AttemptAnswer = 0,
  AbstainGoodClar = 1,
  AbstainBadClar = 2,
  Malformed = 3,
};

inline constexpr int kNumActions = 4;
inline constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "AttemptAnswer", "AbstainGoodClar", "AbstainBadClar", "Malformed"};

inline std::string_view to_string(ToyAction a) {
  return kActionNames[static_cast<int>(a)];
}

inline std::optional<ToyAction> action_from_string(std::string_view name) {
  for (int i = 0; i < kNumActions; ++i)
    if (kActionNames[i] == name) return static_cast<ToyAction>(i);
  return std::nullopt;
}

// One observation context. The policy sees the bin; the query's true class is
// drawn per query as Bernoulli(p_answerable), which is what makes
// over/under-abstention a real trade-off.
struct ObservationBin {
  std::string id;
  double p_answerable = 0.5;      // rho
  double p_attempt_correct = 0.7; // q: answer attempts succeed at this rate
  double p_clar_correct = 0.9;    // kappa: good clarifications pass the stub judge

  void validate() const {
    const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(p_answerable) || !in_unit(p_attempt_correct) || !in_unit(p_clar_correct))
      throw std::invalid_argument("bin " + id + " probabilities must lie in [0, 1]");
    if (id.empty()) throw std::invalid_argument("bin id must be non-empty");
  }
};

struct WorldSpec {
  std::vector<ObservationBin> bins;
  // Marginal tilt toward unanswerable-leaning bins when sampling queries.
  double unanswerable_mix = 0.3;
  std::uint64_t seed = 7;

  void validate() const {
    if (bins.empty()) throw std::invalid_argument("world needs at least one bin");
    if (unanswerable_mix < 0.0 || unanswerable_mix > 1.0)
      throw std::invalid_argument("unanswerable_mix must lie in [0, 1]");
    for (const auto& b : bins) b.validate();
    double total = 0.0;
    for (const auto& b : bins)
      total += unanswerable_mix * (1.0 - b.p_answerable) +
               (1.0 - unanswerable_mix) * b.p_answerable;
    if (!(total > 0.0))
      throw std::invalid_argument("no bin has positive sampling weight");
  }

  // Bin sampling weight: mix * (1 - rho) + (1 - mix) * rho. The class inside
  // a bin stays Bernoulli(rho), so per-bin expected rewards depend only on
  // the bin parameters.
  std::vector<double> bin_weights() const {
    std::vector<double> w(bins.size());
    for (std::size_t i = 0; i < bins.size(); ++i)
      w[i] = unanswerable_mix * (1.0 - bins[i].p_answerable) +
             (1.0 - unanswerable_mix) * bins[i].p_answerable;
    return w;
  }
};

// Five bins spanning the over/under-abstention threshold for all penalty
// settings of interest.
inline WorldSpec default_world(std::uint64_t seed = 7) {
  WorldSpec world;
  world.seed = seed;
  const std::array<double, 5> rhos = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    ObservationBin bin;
    bin.id = "bin" + std::to_string(i);
    bin.p_answerable = rhos[i];
    bin.p_attempt_correct = 0.7;
    bin.p_clar_correct = 0.9;
    world.bins.push_back(bin);
  }
  return world;
}

// ---------------------------------------------------------------------------
// Query synthesis and response rendering
// ---------------------------------------------------------------------------

inline QueryRecord make_toy_query(const ObservationBin& bin, AnswerabilityClass cls,
                                  std::uint64_t serial) {
  QueryRecord q;
  q.id = bin.id + "-q" + std::to_string(serial);
  q.question = "what is the value recorded for case " + q.id + "?";
  q.cls = cls;
  q.domain = "toy";
  if (cls == AnswerabilityClass::Answerable) {
    q.gold_answer = std::to_string(100 + fnv1a64(q.id) % 900);
  } else {
    q.reference_clarification =
        "the quantity item-" + q.id + " is never specified in the problem statement";
  }
  return q;
}

// Stochastic outcomes of one rollout, drawn by the caller so rendering stays
// a pure function.
struct RenderDraw {
  const QueryRecord* query = nullptr;
  bool attempt_correct = false;  // applies to AttemptAnswer on answerable draws
  bool clar_passes = false;      // applies to AbstainGoodClar on unanswerable draws
};

// Renders the canonical response text for an action. Rewards flow exclusively
// through parse() + total_reward() on this text; there is no shortcut path.
inline std::string render_action(const ObservationBin& bin, ToyAction action,
                                 const RenderDraw& draw,
                                 const TemplateSpec& tpl = default_template()) {
  if (draw.query == nullptr) throw std::invalid_argument("render draw needs a query");
  const QueryRecord& q = *draw.query;
  const std::string thinking = "case " + q.id + ": weighing the available evidence";
  switch (action) {
    case ToyAction::AttemptAnswer: {
      std::string boxed;
      if (q.cls == AnswerabilityClass::Answerable) {
        boxed = draw.attempt_correct
                    ? *q.gold_answer
                    : std::to_string(std::stol(*q.gold_answer) + 1);
      } else {
        boxed = "0";  // a confident guess with nothing to back it
      }
      return render_response(thinking, boxed, {}, tpl);
    }
    case ToyAction::AbstainGoodClar: {
      std::string clar;
      if (q.cls == AnswerabilityClass::Unanswerable) {
        clar = draw.clar_passes
                   ? *q.reference_clarification
                   : "some aspect seems unclear without further reading";
      } else {
        clar = "What additional numeric information is available for this case?";
      }
      return render_response(thinking + "; the constraints look incomplete",
                             "I don't know.", clar, tpl);
    }
    case ToyAction::AbstainBadClar:
      return render_response(thinking + "; the constraints look incomplete",
                             "I don't know.",
                             "the weather outside is pleasant today and unrelated",
                             tpl);
    case ToyAction::Malformed:
      return tpl.thinking_open + thinking + tpl.thinking_close + tpl.answer_open +
             "final value pending" + tpl.answer_close;
  }
  throw std::invalid_argument("unknown action");
}

// ---------------------------------------------------------------------------
// Closed-form oracle
// ---------------------------------------------------------------------------

// Exact per-bin expected reward of each action under the composite reward and
// the stub judge, used as the brute-force optimum the trainer must reach.
inline double expected_reward(const ObservationBin& bin, ToyAction action,
                              const RewardConfig& cfg) {
  const double rho = bin.p_answerable;
  const double fmt = cfg.format_weight;
  switch (action) {
    case ToyAction::AttemptAnswer:
      return fmt + rho * bin.p_attempt_correct * cfg.answer_correct;
    case ToyAction::AbstainGoodClar:
      return fmt + rho * cfg.false_refusal_penalty +
             (1.0 - rho) * (cfg.abstain_base +
                            cfg.clarification_bonus * bin.p_clar_correct);
    case ToyAction::AbstainBadClar:
      return fmt + rho * cfg.false_refusal_penalty + (1.0 - rho) * cfg.abstain_base;
    case ToyAction::Malformed:
      return 0.0;
  }
  throw std::invalid_argument("unknown action");
}

// Argmax with ties broken by the fixed action order.
inline ToyAction optimal_action(const ObservationBin& bin, const RewardConfig& cfg) {
  ToyAction best = ToyAction::AttemptAnswer;
  double best_value = expected_reward(bin, best, cfg);
  for (int a = 1; a < kNumActions; ++a) {
    const double v = expected_reward(bin, static_cast<ToyAction>(a), cfg);
    if (v > best_value) {
      best = static_cast<ToyAction>(a);
      best_value = v;
    }
  }
  return best;
}

// All actions within tie tolerance of the best expected reward. With the
// clarification bonus at zero the two abstain actions tie exactly.
inline std::vector<ToyAction> optimal_action_set(const ObservationBin& bin,
                                                 const RewardConfig& cfg,
                                                 double tie_tolerance = 1e-12) {
  double best = expected_reward(bin, ToyAction::AttemptAnswer, cfg);
  for (int a = 1; a < kNumActions; ++a)
    best = std::max(best, expected_reward(bin, static_cast<ToyAction>(a), cfg));
  std::vector<ToyAction> out;
  for (int a = 0; a < kNumActions; ++a)
    if (expected_reward(bin, static_cast<ToyAction>(a), cfg) >= best - tie_tolerance)
      out.push_back(static_cast<ToyAction>(a));
  return out;
}

inline std::vector<ToyAction> optimal_policy(const WorldSpec& world,
                                             const RewardConfig& cfg) {
  std::vector<ToyAction> actions;
  actions.reserve(world.bins.size());
  for (const auto& bin : world.bins) actions.push_back(optimal_action(bin, cfg));
  return actions;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct ToyPolicy {
  grpo::LogitsMatrix logits;  // [bins x actions]
  double learning_rate = 0.1;

  std::vector<double> probs(int bin) const { return grpo::softmax_probs(logits[bin]); }
};

struct ToyTrainConfig {
  int queries_per_step = 16;
  int inner_updates = 1;
  double learning_rate = 0.1;
};

struct TrainStats {
  int step = 0;
  double abstention_rate = 0.0;       // over unanswerable draws
  double clar_ok_rate = 0.0;          // Correct clarifications over unanswerable draws
  double answer_acc = 0.0;            // over answerable draws
  double mean_reward = 0.0;           // over all rollouts
  double mean_rendered_length = 0.0;  // over all rollouts
};

// Funnel for all toy reward computation; its counters let tests assert that
// no reward reached the trainer without passing through parse + total_reward.
struct ScoringPipeline {
  std::uint64_t parse_calls = 0;
  std::uint64_t score_calls = 0;

  ParsedOutput parse_text(const std::string& raw, const TemplateSpec& tpl) {
    ++parse_calls;
    return parse(raw, tpl);
  }

  RewardBreakdown score(const QueryRecord& query, const ParsedOutput& parsed,
                        std::optional<Verdict> verdict, const RewardConfig& cfg) {
    ++score_calls;
    return total_reward(query, parsed, verdict, cfg);
  }
};

struct TrainResult {
  std::vector<TrainStats> stats;
  ToyPolicy policy;
  grpo::LogitsMatrix ref_logits;
  std::uint64_t rollouts = 0;
  std::uint64_t parse_calls = 0;
  std::uint64_t score_calls = 0;
};

namespace detail {

inline std::size_t sample_weighted(std::mt19937_64& rng, std::span<const double> weights,
                                   double total) {
  const double u = uniform_unit(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

inline int sample_categorical(std::mt19937_64& rng, std::span<const double> probs) {
  const double u = uniform_unit(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace detail

// Fully on-policy GRPO loop: every step snapshots the policy, samples G
// rollouts per query from the snapshot, renders and scores them through the
// real parser/reward/stub-judge stack, and ascends the clipped objective.
// The reference policy is the initial one. Identical seeds give bitwise
// identical trajectories.
inline TrainResult train(const WorldSpec& world, const grpo::GrpoConfig& grpo_cfg,
                         const RewardConfig& reward_cfg, int steps,
                         const ToyTrainConfig& tc = {},
                         const TemplateSpec& tpl = default_template()) {
  world.validate();
  grpo_cfg.validate();
  reward_cfg.validate();
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (tc.queries_per_step < 1) throw std::invalid_argument("queries_per_step must be >= 1");
  if (tc.inner_updates < 1) throw std::invalid_argument("inner_updates must be >= 1");

  const std::size_t n_bins = world.bins.size();
  const int group = grpo_cfg.group_size;
  std::mt19937_64 rng(world.seed);

  TrainResult result;
  result.policy.learning_rate = tc.learning_rate;
  result.policy.logits.assign(n_bins, std::vector<double>(kNumActions, 0.0));
  result.ref_logits = result.policy.logits;

  const std::vector<double> weights = world.bin_weights();
  double weight_total = 0.0;
  for (double w : weights) weight_total += w;

  ScoringPipeline pipeline;
  std::uint64_t serial = 0;

  for (int step = 1; step <= steps; ++step) {
    const grpo::LogitsMatrix old_logits = result.policy.logits;
    std::vector<std::vector<double>> old_probs(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b)
      old_probs[b] = grpo::softmax_probs(old_logits[b]);

    std::vector<grpo::SampledGroup> groups;
    groups.reserve(tc.queries_per_step);

    long n_ans = 0, n_unans = 0, n_correct = 0, n_abstain = 0, n_clar_ok = 0;
    double reward_sum = 0.0, length_sum = 0.0;
    long n_rollouts = 0;

    for (int qi = 0; qi < tc.queries_per_step; ++qi) {
      const std::size_t b = detail::sample_weighted(rng, weights, weight_total);
      const ObservationBin& bin = world.bins[b];
      const AnswerabilityClass cls = bernoulli(rng, bin.p_answerable)
                                         ? AnswerabilityClass::Answerable
                                         : AnswerabilityClass::Unanswerable;
      const QueryRecord query = make_toy_query(bin, cls, serial++);

      grpo::SampledGroup g;
      g.bin = static_cast<int>(b);
      for (int i = 0; i < group; ++i) {
        const int action_idx = detail::sample_categorical(rng, old_probs[b]);
        const auto action = static_cast<ToyAction>(action_idx);

        RenderDraw draw{&query, false, false};
        if (action == ToyAction::AttemptAnswer && cls == AnswerabilityClass::Answerable)
          draw.attempt_correct = bernoulli(rng, bin.p_attempt_correct);
        if (action == ToyAction::AbstainGoodClar &&
            cls == AnswerabilityClass::Unanswerable)
          draw.clar_passes = bernoulli(rng, bin.p_clar_correct);

        const std::string raw = render_action(bin, action, draw, tpl);
        const ParsedOutput parsed = pipeline.parse_text(raw, tpl);
        std::optional<Verdict> verdict;
        if (cls == AnswerabilityClass::Unanswerable && parsed.is_abstention &&
            parsed.clarification)
          verdict = stub_verdict(*parsed.clarification, *query.reference_clarification,
                                 query.key_phrase);
        const RewardBreakdown breakdown =
            pipeline.score(query, parsed, verdict, reward_cfg);

        g.actions.push_back(action_idx);
        g.rewards.push_back(breakdown.total);
        g.logp_old.push_back(grpo::softmax_logprob(old_logits[b], action_idx));
        g.logp_ref.push_back(grpo::softmax_logprob(result.ref_logits[b], action_idx));

        ++n_rollouts;
        reward_sum += breakdown.total;
        length_sum += static_cast<double>(raw.size());
        if (cls == AnswerabilityClass::Unanswerable) {
          ++n_unans;
          if (parsed.is_abstention) ++n_abstain;
          if (verdict == Verdict::Correct) ++n_clar_ok;
        } else {
          ++n_ans;
          if (!parsed.is_abstention && parsed.boxed &&
              answer_match(*parsed.boxed, *query.gold_answer) == MatchResult::Match)
            ++n_correct;
        }
      }
      groups.push_back(std::move(g));
    }

    for (int u = 0; u < tc.inner_updates; ++u) {
      const auto grad =
          grpo::batch_objective_gradient(result.policy.logits, groups, grpo_cfg);
      for (std::size_t b = 0; b < n_bins; ++b)
        for (int k = 0; k < kNumActions; ++k)
          result.policy.logits[b][k] += tc.learning_rate * grad[b][k];
    }
    for (std::size_t b = 0; b < n_bins; ++b)
      for (double l : result.policy.logits[b])
        if (!std::isfinite(l))
          throw std::runtime_error("policy diverged at step " + std::to_string(step) +
                                   " in bin " + world.bins[b].id);

    TrainStats s;
    s.step = step;
    s.abstention_rate = n_unans ? static_cast<double>(n_abstain) / n_unans : 0.0;
    s.clar_ok_rate = n_unans ? static_cast<double>(n_clar_ok) / n_unans : 0.0;
    s.answer_acc = n_ans ? static_cast<double>(n_correct) / n_ans : 0.0;
    s.mean_reward = reward_sum / static_cast<double>(n_rollouts);
    s.mean_rendered_length = length_sum / static_cast<double>(n_rollouts);
    result.stats.push_back(s);
    result.rollouts += static_cast<std::uint64_t>(n_rollouts);
  }

  result.parse_calls = pipeline.parse_calls;
  result.score_calls = pipeline.score_calls;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation rollouts and sweeps
// ---------------------------------------------------------------------------

// Samples one response per query from the given policy and packages the
// results for compute_metrics; verdicts come from the matcher and stub judge.
inline std::vector<PredictionRecord> rollout_predictions(
    const WorldSpec& world, const grpo::LogitsMatrix& logits, int n_queries,
    std::uint64_t seed, const TemplateSpec& tpl = default_template()) {
  world.validate();
  std::mt19937_64 rng(seed);
  const std::vector<double> weights = world.bin_weights();
  double weight_total = 0.0;
  for (double w : weights) weight_total += w;

  std::vector<PredictionRecord> out;
  out.reserve(n_queries);
  for (int i = 0; i < n_queries; ++i) {
    const std::size_t b = detail::sample_weighted(rng, weights, weight_total);
    const ObservationBin& bin = world.bins[b];
    const AnswerabilityClass cls = bernoulli(rng, bin.p_answerable)
                                       ? AnswerabilityClass::Answerable
                                       : AnswerabilityClass::Unanswerable;
    const QueryRecord query = make_toy_query(bin, cls, static_cast<std::uint64_t>(i));
    const auto probs = grpo::softmax_probs(logits[b]);
    const auto action = static_cast<ToyAction>(detail::sample_categorical(rng, probs));

    RenderDraw draw{&query, false, false};
    if (action == ToyAction::AttemptAnswer && cls == AnswerabilityClass::Answerable)
      draw.attempt_correct = bernoulli(rng, bin.p_attempt_correct);
    if (action == ToyAction::AbstainGoodClar && cls == AnswerabilityClass::Unanswerable)
      draw.clar_passes = bernoulli(rng, bin.p_clar_correct);

    PredictionRecord record;
    record.query = query;
    record.parsed = parse(render_action(bin, action, draw, tpl), tpl);
    if (cls == AnswerabilityClass::Answerable) {
      if (!record.parsed.is_abstention && record.parsed.boxed)
        record.answer_verdict =
            answer_match(*record.parsed.boxed, *query.gold_answer) == MatchResult::Match
                ? Verdict::Correct
                : Verdict::Incorrect;
    } else if (record.parsed.is_abstention && record.parsed.clarification) {
      record.clar_verdict = stub_verdict(*record.parsed.clarification,
                                         *query.reference_clarification, query.key_phrase);
    }
    out.push_back(std::move(record));
  }
  return out;
}

// Probability mass the policy places on the oracle action set, minimized
// over bins; the convergence criterion for trained policies.
inline double min_optimal_mass(const WorldSpec& world, const grpo::LogitsMatrix& logits,
                               const RewardConfig& cfg) {
  double worst = 1.0;
  for (std::size_t b = 0; b < world.bins.size(); ++b) {
    const auto probs = grpo::softmax_probs(logits[b]);
    double mass = 0.0;
    for (ToyAction a : optimal_action_set(world.bins[b], cfg))
      mass += probs[static_cast<int>(a)];
    worst = std::min(worst, mass);
  }
  return worst;
}

struct SweepRow {
  std::string label;
  RewardConfig reward;
  double min_optimal_mass = 0.0;
  bool converged = false;
  // analogs computed by the metrics module on rendered evaluation rollouts
  std::optional<double> a_acc, a_fu, u_ref, u_clar;
  double mean_abstain_good_mass = 0.0;  // over bins whose optimum abstains
  double mean_abstain_bad_mass = 0.0;
};

inline SweepRow summarize_run(const std::string& label, const WorldSpec& world,
                              const RewardConfig& reward_cfg, const TrainResult& run,
                              int eval_queries, std::uint64_t eval_seed,
                              double mass_threshold) {
  SweepRow row;
  row.label = label;
  row.reward = reward_cfg;
  row.min_optimal_mass = min_optimal_mass(world, run.policy.logits, reward_cfg);
  row.converged = row.min_optimal_mass >= mass_threshold;
  const auto predictions =
      rollout_predictions(world, run.policy.logits, eval_queries, eval_seed);
  const auto report = compute_metrics(predictions);
  row.a_acc = report.a_acc;
  row.a_fu = report.a_fu;
  row.u_ref = report.u_ref;
  row.u_clar = report.u_clar;
  int abstain_bins = 0;
  for (std::size_t b = 0; b < world.bins.size(); ++b) {
    const auto optimal = optimal_action_set(world.bins[b], reward_cfg);
    const bool abstains = std::find(optimal.begin(), optimal.end(),
                                    ToyAction::AbstainGoodClar) != optimal.end() ||
                          std::find(optimal.begin(), optimal.end(),
                                    ToyAction::AbstainBadClar) != optimal.end();
    if (!abstains) continue;
    const auto probs = grpo::softmax_probs(run.policy.logits[b]);
    row.mean_abstain_good_mass += probs[static_cast<int>(ToyAction::AbstainGoodClar)];
    row.mean_abstain_bad_mass += probs[static_cast<int>(ToyAction::AbstainBadClar)];
    ++abstain_bins;
  }
  if (abstain_bins > 0) {
    row.mean_abstain_good_mass /= abstain_bins;
    row.mean_abstain_bad_mass /= abstain_bins;
  }
  return row;
}

// Trains once per reward config and summarizes each run. Evaluation rollouts
// use a seed derived from the world seed, fixed across configs.
inline std::vector<SweepRow> sweep(const WorldSpec& world,
                                   std::span<const RewardConfig> configs,
                                   const grpo::GrpoConfig& grpo_cfg, int steps,
                                   const ToyTrainConfig& tc = {}, int eval_queries = 2000,
                                   double mass_threshold = 0.95) {
  std::vector<SweepRow> rows;
  rows.reserve(configs.size());
  for (const auto& cfg : configs) {
    const TrainResult run = train(world, grpo_cfg, cfg, steps, tc);
    const std::string label = "p=" + format_double(cfg.false_refusal_penalty) +
                              ",c=" + format_double(cfg.clarification_bonus);
    rows.push_back(summarize_run(label, world, cfg, run, eval_queries,
                                 world.seed ^ 0x5eedULL, mass_threshold));
  }
  return rows;
}

}  // namespace abstain::toylab
