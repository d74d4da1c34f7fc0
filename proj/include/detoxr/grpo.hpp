#ifndef DETOXR_GRPO_HPP
#define DETOXR_GRPO_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "detoxr/errors.hpp"
#include "detoxr/fusion.hpp"
#include "detoxr/reward.hpp"

namespace detoxr {

// ---------------------------------------------------------------------------
// Objective arithmetic. Free functions over Eigen expressions, templated on
// the scalar type.
// ---------------------------------------------------------------------------

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Group-standardised rewards, A_i = (r_i - mean) / (std + eps) with the
// population standard deviation. A group whose spread is below eps carries
// no signal and gets all-zero advantages.
template <typename Derived>
Vector<typename Derived::Scalar> group_advantages(const Eigen::MatrixBase<Derived>& rewards,
                                                  typename Derived::Scalar eps = 1e-8) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = rewards.size();
  if (n < 2) throw GroupSizeError("group advantages need at least 2 completions");
  const Scalar mean = rewards.mean();
  Vector<Scalar> centered = rewards.derived().array() - mean;
  const Scalar stddev = std::sqrt(centered.squaredNorm() / static_cast<Scalar>(n));
  if (stddev < eps) return Vector<Scalar>::Zero(n);
  return centered / (stddev + eps);
}

// Counts ratios that hit the clamp bounds of sequence_ratio.
struct RatioClampCounter {
  std::atomic<long> clamped{0};
};

inline constexpr double kMinSequenceRatio = 1e-30;
inline constexpr double kMaxSequenceRatio = 1e30;

// Length-normalised sequence-level importance ratio
// exp((log pi_new(y) - log pi_old(y)) / |y|), clamped to [1e-30, 1e30].
template <typename Scalar>
Scalar sequence_ratio(Scalar logp_new_sum, Scalar logp_old_sum, Eigen::Index length,
                      RatioClampCounter* counter = nullptr) {
  if (length < 1) throw EmptyGroupError("sequence ratio needs at least one token");
  const Scalar log_ratio = (logp_new_sum - logp_old_sum) / static_cast<Scalar>(length);
  const Scalar lo = std::log(static_cast<Scalar>(kMinSequenceRatio));
  const Scalar hi = std::log(static_cast<Scalar>(kMaxSequenceRatio));
  if (std::isnan(log_ratio) || log_ratio < lo) {
    if (counter) ++counter->clamped;
    return static_cast<Scalar>(kMinSequenceRatio);
  }
  if (log_ratio > hi) {
    if (counter) ++counter->clamped;
    return static_cast<Scalar>(kMaxSequenceRatio);
  }
  return std::exp(log_ratio);
}

// Surrogate contribution min(r A, clip(r, 1 - eps_low, 1 + eps_high) A).
template <typename Scalar>
Scalar clipped_term(Scalar ratio, Scalar advantage, Scalar eps_low, Scalar eps_high) {
  const Scalar clipped = std::clamp(ratio, Scalar(1) - eps_low, Scalar(1) + eps_high);
  return std::min(ratio * advantage, clipped * advantage);
}

// d clipped_term / d ratio: the advantage where the unclipped branch is
// active, zero where the clip bound is selected.
template <typename Scalar>
Scalar clipped_term_slope(Scalar ratio, Scalar advantage, Scalar eps_low, Scalar eps_high) {
  const Scalar clipped = std::clamp(ratio, Scalar(1) - eps_low, Scalar(1) + eps_high);
  return ratio * advantage <= clipped * advantage ? advantage : Scalar(0);
}

// Token-level aggregation: sum of every per-token term in the group divided
// by the group's total token count.
template <typename Scalar>
Scalar dapo_aggregate(const std::vector<Vector<Scalar>>& per_token_terms) {
  Scalar sum = 0;
  Eigen::Index tokens = 0;
  for (const auto& terms : per_token_terms) {
    sum += terms.sum();
    tokens += terms.size();
  }
  if (tokens == 0) throw EmptyGroupError("no tokens to aggregate");
  return sum / static_cast<Scalar>(tokens);
}

// Per-sequence mean, then mean over sequences. Reference for comparison only.
template <typename Scalar>
Scalar sequence_mean_aggregate(const std::vector<Vector<Scalar>>& per_token_terms) {
  Scalar sum = 0;
  Eigen::Index used = 0;
  for (const auto& terms : per_token_terms) {
    if (terms.size() == 0) continue;
    sum += terms.mean();
    ++used;
  }
  if (used == 0) throw EmptyGroupError("no tokens to aggregate");
  return sum / static_cast<Scalar>(used);
}

// ---------------------------------------------------------------------------
// Policy abstraction.
// ---------------------------------------------------------------------------

struct Completion {
  std::vector<int> tokens;

  bool operator==(const Completion&) const = default;
};

struct SampledCompletion {
  Completion completion;
  Eigen::VectorXd token_logps;  // recorded at sampling time
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::vector<SampledCompletion> sample_group(const RenderedPrompt& prompt, int group_size,
                                                      std::uint64_t seed) const = 0;
  virtual Eigen::VectorXd log_prob(const RenderedPrompt& prompt, const Completion& completion) const = 0;
  // Gradient of the summed token log-probabilities w.r.t. parameters().
  virtual Eigen::VectorXd sequence_log_prob_gradient(const RenderedPrompt& prompt,
                                                     const Completion& completion) const = 0;
  virtual std::string render_completion(const Completion& completion) const = 0;
  virtual std::string greedy_completion(const RenderedPrompt& prompt) const = 0;

  virtual Eigen::VectorXd parameters() const = 0;
  virtual void set_parameters(const Eigen::VectorXd& parameters) = 0;
  // Gradient ascent: theta += learning_rate * gradient.
  virtual void apply_gradient(const Eigen::VectorXd& gradient, double learning_rate) = 0;
};

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct GrpoConfig {
  int group_size = 3;
  int batch_size = 16;
  int inner_epochs = 1;
  double learning_rate = 2e-5;
  double clip_eps_low = 0.2;
  double clip_eps_high = 0.28;
  long max_steps = 10000;
  long eval_every = 500;
  std::uint64_t seed = 0;
  RewardKind reward_kind = RewardKind::f1;
  // KL penalty against a reference policy. Only 0 is supported.
  double kl_coef = 0.0;
  // Probability that a rendered completion is corrupted before scoring.
  double format_corruption_rate = 0.0;
  // Applies to gateway-sampled completions only.
  int max_completion_tokens = 2304;
  int workers = 1;

  void validate() const;
};

struct PromptRollout {
  const RenderedPrompt* prompt = nullptr;
  std::vector<SampledCompletion> samples;
  std::vector<std::string> texts;
  std::vector<RewardBreakdown> rewards;
  Eigen::VectorXd advantages;
};

struct SurrogateEvaluation {
  double objective = 0.0;
  Eigen::VectorXd gradient;
  long tokens = 0;
  double clip_fraction = 0.0;
};

SurrogateEvaluation evaluate_surrogate(const Policy& policy, const std::vector<PromptRollout>& rollouts,
                                       const GrpoConfig& config, bool with_gradient = true,
                                       RatioClampCounter* counter = nullptr);

struct TrainingExample {
  std::string case_id;
  RenderedPrompt prompt;
  LabelVector truth;
};

// Samples, renders and scores one group per prompt and fills advantages.
std::vector<PromptRollout> collect_rollouts(const Policy& policy, std::span<const TrainingExample* const> batch,
                                            const GrpoConfig& config, std::uint64_t step_seed);

// Applies a corruption chosen by `mode` (0: drop reasoning tags, 1: break the
// JSON object, 2: drop one prediction key).
std::string corrupt_completion(std::string_view text, int mode);

struct StepReport {
  double mean_reward = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
};

StepReport train_step(Policy& policy, std::span<const TrainingExample* const> batch, const GrpoConfig& config,
                      std::uint64_t step_seed);

struct HistoryRecord {
  long step = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::optional<double> val_micro_f1;
};

struct TrainResult {
  std::vector<HistoryRecord> history;
  std::optional<long> best_step;
  double best_val_micro_f1 = 0.0;
  Eigen::VectorXd best_parameters;

  long validation_count() const;
};

// Validation metric of the current policy (micro-F1 on the validation split).
using PolicyEvaluator = std::function<double(const Policy&)>;

// Runs up to max_steps GRPO steps, validates every eval_every steps and
// leaves the policy at the checkpoint with the highest validation score.
TrainResult train_loop(Policy& policy, const std::vector<TrainingExample>& train, const PolicyEvaluator& evaluate,
                       const GrpoConfig& config);

std::vector<TrainingExample> make_examples(std::span<const Case* const> cases,
                                           const PromptTemplate& tmpl = PromptTemplate::builtin(),
                                           std::size_t budget = kDefaultPromptBudget);

// Micro-F1 of greedy completions on `examples`; unparseable outputs count as
// all-negative.
double greedy_micro_f1(const Policy& policy, const std::vector<TrainingExample>& examples);

// Mean sample-level F1 of greedy completions.
double greedy_mean_sample_f1(const Policy& policy, const std::vector<TrainingExample>& examples);

// Overload matching the dataset/split workflow: trains on the train split
// and validates on the val split.
TrainResult train_loop(Policy& policy, const DatasetManifest& dataset, const GrpoConfig& config,
                       const PromptTemplate& tmpl = PromptTemplate::builtin());

}  // namespace detoxr

#endif  // DETOXR_GRPO_HPP
