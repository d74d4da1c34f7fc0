#include "detoxr/grpo.hpp"

#include <numeric>
#include <random>
#include <thread>

#include "detoxr/metrics.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

void GrpoConfig::validate() const {
  if (group_size < 2) throw GroupSizeError("group_size must be at least 2 for training");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (inner_epochs < 1) throw ConfigError("inner_epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(clip_eps_low > 0.0 && clip_eps_low <= clip_eps_high && clip_eps_high < 1.0)) {
    throw ConfigError("clip bounds must satisfy 0 < clip_eps_low <= clip_eps_high < 1");
  }
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
  if (kl_coef != 0.0) throw ConfigError("kl_coef must be 0: no reference policy is kept");
  if (!(format_corruption_rate >= 0.0 && format_corruption_rate <= 1.0)) {
    throw ConfigError("format_corruption_rate must lie in [0, 1]");
  }
  if (max_completion_tokens <= 0) throw ConfigError("max_completion_tokens must be positive");
  if (workers < 1) throw ConfigError("workers must be positive");
}

std::string corrupt_completion(std::string_view text, int mode) {
  std::string out(text);
  switch (mode % 3) {
    case 0: {
      for (std::string_view tag : {"<reasoning>", "</reasoning>"}) {
        auto pos = out.find(tag);
        if (pos != std::string::npos) out.erase(pos, tag.size());
      }
      break;
    }
    case 1: {
      auto pos = out.rfind('}');
      if (pos != std::string::npos) out.erase(pos, 1);
      break;
    }
    default: {
      // Remove the last "key": value pair.
      auto close = out.rfind('}');
      auto comma = out.rfind(',', close);
      if (close != std::string::npos && comma != std::string::npos) out.erase(comma, close - comma);
      break;
    }
  }
  return out;
}

namespace {

PromptRollout rollout_one(const Policy& policy, const TrainingExample& ex, const GrpoConfig& config,
                          std::uint64_t seed) {
  PromptRollout r;
  r.prompt = &ex.prompt;
  r.samples = policy.sample_group(ex.prompt, config.group_size, seed);
  std::mt19937_64 rng(derive_seed(seed, 0xC0FFEE));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd totals(static_cast<Eigen::Index>(r.samples.size()));
  for (std::size_t s = 0; s < r.samples.size(); ++s) {
    std::string text = policy.render_completion(r.samples[s].completion);
    if (config.format_corruption_rate > 0.0 && unit(rng) < config.format_corruption_rate) {
      text = corrupt_completion(text, static_cast<int>(rng() % 3));
    }
    auto reward = score_completion(text, ex.truth, config.reward_kind);
    totals[static_cast<Eigen::Index>(s)] = reward.total;
    r.texts.push_back(std::move(text));
    r.rewards.push_back(reward);
  }
  r.advantages = group_advantages(totals);
  return r;
}

}  // namespace

std::vector<PromptRollout> collect_rollouts(const Policy& policy, std::span<const TrainingExample* const> batch,
                                            const GrpoConfig& config, std::uint64_t step_seed) {
  std::vector<PromptRollout> out(batch.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < batch.size(); i += stride) {
      out[i] = rollout_one(policy, *batch[i], config, derive_seed(step_seed, i));
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, config.workers));
  if (workers == 1 || batch.size() < 2) {
    work(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work, w, workers);
    for (auto& t : threads) t.join();
  }
  return out;
}

SurrogateEvaluation evaluate_surrogate(const Policy& policy, const std::vector<PromptRollout>& rollouts,
                                       const GrpoConfig& config, bool with_gradient, RatioClampCounter* counter) {
  SurrogateEvaluation ev;
  std::vector<Eigen::VectorXd> terms;
  long clipped = 0;
  long sequences = 0;
  if (with_gradient) ev.gradient = Eigen::VectorXd::Zero(policy.parameters().size());

  for (const auto& r : rollouts) {
    for (std::size_t s = 0; s < r.samples.size(); ++s) {
      const auto& sample = r.samples[s];
      Eigen::VectorXd logp = policy.log_prob(*r.prompt, sample.completion);
      const Eigen::Index length = logp.size();
      const double ratio = sequence_ratio(logp.sum(), sample.token_logps.sum(), length, counter);
      const double adv = r.advantages[static_cast<Eigen::Index>(s)];
      const double term = clipped_term(ratio, adv, config.clip_eps_low, config.clip_eps_high);
      // Every token of a sequence shares the sequence-level term.
      terms.push_back(Eigen::VectorXd::Constant(length, term));
      ev.tokens += length;
      ++sequences;

      const double slope = clipped_term_slope(ratio, adv, config.clip_eps_low, config.clip_eps_high);
      if (slope == 0.0 && adv != 0.0) ++clipped;
      // d/dtheta of length * term = slope * ratio * grad(sum log p).
      if (with_gradient && slope != 0.0) {
        ev.gradient += slope * ratio * policy.sequence_log_prob_gradient(*r.prompt, sample.completion);
      }
    }
  }
  ev.objective = dapo_aggregate(terms);
  if (with_gradient) ev.gradient /= static_cast<double>(ev.tokens);
  ev.clip_fraction = sequences ? static_cast<double>(clipped) / sequences : 0.0;
  return ev;
}

StepReport train_step(Policy& policy, std::span<const TrainingExample* const> batch, const GrpoConfig& config,
                      std::uint64_t step_seed) {
  if (batch.empty()) throw EmptyInputError("training batch is empty");
  auto rollouts = collect_rollouts(policy, batch, config, step_seed);

  StepReport report;
  long n = 0;
  for (const auto& r : rollouts) {
    for (const auto& reward : r.rewards) {
      report.mean_reward += reward.total;
      ++n;
    }
  }
  report.mean_reward /= static_cast<double>(n);

  for (int epoch = 0; epoch < config.inner_epochs; ++epoch) {
    auto ev = evaluate_surrogate(policy, rollouts, config);
    if (epoch == 0) {
      report.loss = -ev.objective;
      report.grad_norm = ev.gradient.norm();
      report.clip_fraction = ev.clip_fraction;
    }
    policy.apply_gradient(ev.gradient, config.learning_rate);
  }
  return report;
}

long TrainResult::validation_count() const {
  return std::count_if(history.begin(), history.end(), [](const auto& h) { return h.val_micro_f1.has_value(); });
}

TrainResult train_loop(Policy& policy, const std::vector<TrainingExample>& train, const PolicyEvaluator& evaluate,
                       const GrpoConfig& config) {
  config.validate();
  TrainResult result;
  if (config.max_steps == 0) return result;
  if (train.empty()) throw EmptyInputError("training set is empty");

  std::mt19937_64 rng(derive_seed(config.seed, 0xBA7C4));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  std::vector<const TrainingExample*> batch;
  for (long step = 1; step <= config.max_steps; ++step) {
    batch.clear();
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&train[order[cursor++]]);
    }
    auto report = train_step(policy, batch, config, derive_seed(config.seed, static_cast<std::uint64_t>(step)));
    HistoryRecord rec{step, report.mean_reward, report.loss, report.grad_norm, std::nullopt};
    if (config.eval_every > 0 && step % config.eval_every == 0) {
      double score = evaluate(policy);
      rec.val_micro_f1 = score;
      if (!result.best_step || score > result.best_val_micro_f1) {
        result.best_step = step;
        result.best_val_micro_f1 = score;
        result.best_parameters = policy.parameters();
      }
    }
    result.history.push_back(rec);
  }
  if (result.best_step) policy.set_parameters(result.best_parameters);
  return result;
}

std::vector<TrainingExample> make_examples(std::span<const Case* const> cases, const PromptTemplate& tmpl,
                                           std::size_t budget) {
  std::vector<TrainingExample> out;
  out.reserve(cases.size());
  for (const Case* c : cases) {
    if (!c->labels) throw MissingLabelsError(c->case_id);
    out.push_back({c->case_id, prepare_prompt(*c, tmpl, budget), *c->labels});
  }
  return out;
}

double greedy_micro_f1(const Policy& policy, const std::vector<TrainingExample>& examples) {
  PredictionMatrix m;
  for (const auto& ex : examples) {
    auto parsed = parse_completion(policy.greedy_completion(ex.prompt));
    m.rows.push_back({ex.case_id, parsed.parsed.predicted_labels(), ex.truth});
  }
  return compute_metrics(m).micro.f1;
}

double greedy_mean_sample_f1(const Policy& policy, const std::vector<TrainingExample>& examples) {
  if (examples.empty()) throw EmptyInputError("no examples");
  double sum = 0.0;
  for (const auto& ex : examples) {
    auto parsed = parse_completion(policy.greedy_completion(ex.prompt));
    sum += reward_f1(parsed.parsed, ex.truth).r_task;
  }
  return sum / static_cast<double>(examples.size());
}

TrainResult train_loop(Policy& policy, const DatasetManifest& dataset, const GrpoConfig& config,
                       const PromptTemplate& tmpl) {
  if (!dataset.split_assignment) throw ConfigError("training needs a split assignment");
  auto train_cases = dataset.cases_in(Split::train);
  auto val_cases = dataset.cases_in(Split::val);
  auto train = make_examples(train_cases, tmpl);
  auto val = make_examples(val_cases, tmpl);
  PolicyEvaluator evaluate = [&val](const Policy& p) { return val.empty() ? 0.0 : greedy_micro_f1(p, val); };
  return train_loop(policy, train, evaluate, config);
}

}  // namespace detoxr
