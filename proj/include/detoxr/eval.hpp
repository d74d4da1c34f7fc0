#ifndef DETOXR_EVAL_HPP
#define DETOXR_EVAL_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "detoxr/baselines.hpp"
#include "detoxr/fusion.hpp"
#include "detoxr/gateway.hpp"
#include "detoxr/metrics.hpp"
#include "detoxr/mlp.hpp"
#include "detoxr/reward.hpp"
#include "detoxr/toy_policy.hpp"

namespace detoxr {

// Every predictor answers with completion text. Structured predictors emit
// the bare 14-key JSON object, so their format reward is 0.75.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string kind() const = 0;
  virtual std::string model_name() const { return kind(); }
  // LLM-style predictors consume the rendered prompt; the others read the case.
  virtual bool needs_prompt() const { return false; }
  virtual std::string complete(const Case& c, const RenderedPrompt* prompt) const = 0;
};

class HistoryPredictor final : public Predictor {
 public:
  explicit HistoryPredictor(const AliasLexicon& lexicon = AliasLexicon::builtin()) : lexicon_(&lexicon) {}
  std::string kind() const override { return "history"; }
  std::string complete(const Case& c, const RenderedPrompt* prompt) const override;

 private:
  const AliasLexicon* lexicon_;
};

class MlpPredictor final : public Predictor {
 public:
  explicit MlpPredictor(MlpModel model) : model_(std::move(model)) {}
  std::string kind() const override { return "mlp"; }
  std::string complete(const Case& c, const RenderedPrompt* prompt) const override;

 private:
  MlpModel model_;
};

class ToyPredictor final : public Predictor {
 public:
  explicit ToyPredictor(ToyPolicy policy) : policy_(std::move(policy)) {}
  std::string kind() const override { return "toy"; }
  bool needs_prompt() const override { return true; }
  std::string complete(const Case& c, const RenderedPrompt* prompt) const override;

 private:
  ToyPolicy policy_;
};

class LlmPredictor final : public Predictor {
 public:
  explicit LlmPredictor(GatewayConfig config) : gateway_(std::move(config)) {}
  std::string kind() const override { return "llm"; }
  std::string model_name() const override { return gateway_.config().model_name; }
  bool needs_prompt() const override { return true; }
  std::string complete(const Case& c, const RenderedPrompt* prompt) const override;
  const LlmGateway& gateway() const noexcept { return gateway_; }

 private:
  LlmGateway gateway_;
};

struct EvalOptions {
  // Evaluated split; ignored when the dataset carries no split assignment,
  // in which case every case is evaluated.
  Split split = Split::test;
  RewardKind reward_kind = RewardKind::f1;
  std::uint64_t seed = 0;
  int workers = 1;
  const PromptTemplate* prompt_template = nullptr;  // builtin when null
  std::size_t prompt_budget = kDefaultPromptBudget;
};

struct EvalCaseRow {
  std::string case_id;
  LabelVector predicted;  // all-negative when unparseable
  LabelVector truth;
  bool parseable = true;
  FormatComponents format;
  RewardBreakdown reward;
  std::string raw_completion;
};

struct FailedCase {
  std::string case_id;
  std::string error;
};

struct EvalMetadata {
  std::string predictor;
  std::string model_name;
  std::string template_hash;
  std::string split;
  std::string reward_kind;
  std::uint64_t seed = 0;
  std::string timestamp;
};

struct EvalReport {
  EvalMetadata metadata;
  MetricsReport metrics;
  std::vector<EvalCaseRow> rows;  // dataset order, failed cases excluded
  std::vector<FailedCase> failed;
  int unparseable_count = 0;
  double mean_reward = 0.0;

  std::size_t case_count() const noexcept { return rows.size() + failed.size(); }
  PredictionMatrix prediction_matrix() const;
};

// Evaluates every case of the chosen split. Throws MissingLabelsError for the
// first case without labels; transport failures are recorded per case.
EvalReport run_eval(const DatasetManifest& dataset, const Predictor& predictor, const EvalOptions& options);

nlohmann::json metrics_to_json(const MetricsReport& m);
nlohmann::json report_to_json(const EvalReport& report, bool include_raw = true);
EvalReport report_from_json(const nlohmann::json& doc);

// True when the stored metrics equal a recomputation from the stored rows.
bool report_is_consistent(const EvalReport& report);

// JSON lines: {"case_id", "predicted", "truth"}.
void write_predictions(const std::filesystem::path& path, const PredictionMatrix& matrix);
PredictionMatrix read_predictions(const std::filesystem::path& path);

using TruthTable = std::map<std::string, LabelVector>;
TruthTable truth_table(const DatasetManifest& dataset);

struct ExpertComparisonReport {
  std::vector<std::string> sampled_case_ids;
  MetricsReport metrics_a;
  MetricsReport metrics_b;
  CaseComparison comparison;
  std::string label_a = "a";
  std::string label_b = "b";

  // "0.644 vs 0.473"
  std::string micro_f1_pair() const;
};

// Samples `sample_size` case ids among the labelled cases covered by both
// prediction files and compares both sides against those truths.
// CoverageError when fewer than `sample_size` such cases exist.
ExpertComparisonReport expert_comparison(const PredictionMatrix& a, const PredictionMatrix& b,
                                         const TruthTable& truths, std::size_t sample_size = 25,
                                         std::uint64_t seed = 0);

nlohmann::json comparison_to_json(const ExpertComparisonReport& report);
// case_id,toxin,outcome rows of the per-case grid.
std::string comparison_grid_csv(const ExpertComparisonReport& report);

}  // namespace detoxr

#endif  // DETOXR_EVAL_HPP
