#ifndef DETOXR_TOY_POLICY_HPP
#define DETOXR_TOY_POLICY_HPP

#include <filesystem>

#include "detoxr/baselines.hpp"
#include "detoxr/grpo.hpp"

namespace detoxr {

// Deterministic prompt -> feature map. Reads the structured sections back
// from "Label: value" lines, resolves history bullets through the alias
// lexicon and hashes free-text words into a fixed number of buckets.
class PromptFeatureExtractor {
 public:
  static constexpr std::size_t kHashBuckets = 512;

  explicit PromptFeatureExtractor(const AliasLexicon& lexicon = AliasLexicon::builtin());

  std::size_t dimension() const noexcept;
  Eigen::VectorXd extract(const RenderedPrompt& prompt) const;

 private:
  const AliasLexicon* lexicon_;
};

// One Bernoulli decision token per toxin class in canonical order;
// P(token_k = 1) = sigmoid(w_k . phi(prompt)).
class ToyPolicy final : public Policy {
 public:
  explicit ToyPolicy(PromptFeatureExtractor extractor = PromptFeatureExtractor());
  ToyPolicy(PromptFeatureExtractor extractor, Eigen::MatrixXd weights);

  static ToyPolicy random_init(double scale, std::uint64_t seed,
                               PromptFeatureExtractor extractor = PromptFeatureExtractor());

  std::vector<SampledCompletion> sample_group(const RenderedPrompt& prompt, int group_size,
                                              std::uint64_t seed) const override;
  Eigen::VectorXd log_prob(const RenderedPrompt& prompt, const Completion& completion) const override;
  Eigen::VectorXd sequence_log_prob_gradient(const RenderedPrompt& prompt,
                                             const Completion& completion) const override;
  std::string render_completion(const Completion& completion) const override;
  std::string greedy_completion(const RenderedPrompt& prompt) const override;

  Eigen::VectorXd parameters() const override;
  void set_parameters(const Eigen::VectorXd& parameters) override;
  void apply_gradient(const Eigen::VectorXd& gradient, double learning_rate) override;

  Eigen::VectorXd probabilities(const RenderedPrompt& prompt) const;
  LabelVector predict(const RenderedPrompt& prompt) const;

  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  const PromptFeatureExtractor& extractor() const noexcept { return extractor_; }

  // JSON weight dump with a versioned header.
  void save(const std::filesystem::path& path) const;
  static ToyPolicy load(const std::filesystem::path& path);

 private:
  Eigen::VectorXd token_logps(const Eigen::VectorXd& logits, const Completion& completion) const;

  PromptFeatureExtractor extractor_;
  Eigen::MatrixXd weights_;  // kNumToxins x dimension
};

}  // namespace detoxr

#endif  // DETOXR_TOY_POLICY_HPP
