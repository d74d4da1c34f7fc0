#ifndef DETOXR_REWARD_HPP
#define DETOXR_REWARD_HPP

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "detoxr/toxins.hpp"

namespace detoxr {

struct ParsedCompletion {
  std::optional<std::string> reasoning;
  // Only canonical keys with a valid boolean value; absent when no JSON
  // object could be recovered from the completion.
  std::optional<std::map<Toxin, bool>> predictions;
  std::string raw;

  // Positive predictions; missing keys count as negative.
  LabelVector predicted_labels() const;

  bool operator==(const ParsedCompletion&) const = default;
};

struct FormatComponents {
  bool has_reasoning_block = false;
  bool has_valid_json = false;
  bool has_all_keys = false;

  // The all-keys credit presupposes a valid JSON object.
  double score() const noexcept {
    return 0.25 * has_reasoning_block + 0.25 * has_valid_json + 0.5 * (has_valid_json && has_all_keys);
  }

  bool operator==(const FormatComponents&) const = default;
};

struct CompletionParse {
  ParsedCompletion parsed;
  FormatComponents components;
};

enum class RewardKind { f1, iou };

std::string_view reward_kind_name(RewardKind k) noexcept;
std::optional<RewardKind> reward_kind_from_name(std::string_view name) noexcept;

struct RewardBreakdown {
  double r_task = 0.0;
  double r_format = 0.0;
  double total = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

// Never throws: parse failures are reported through FormatComponents.
CompletionParse parse_completion(std::string_view raw);

// Sample-level F1 between predicted and true positive sets; 1 when both are
// empty, 0 when the completion carried no JSON object at all.
RewardBreakdown reward_f1(const ParsedCompletion& parsed, const LabelVector& truth);

// |P n G| / |P u G|; 1 when both are empty, 0 for unparseable completions.
RewardBreakdown reward_iou(const ParsedCompletion& parsed, const LabelVector& truth);

RewardBreakdown composite_reward(const ParsedCompletion& parsed, const FormatComponents& components,
                                 const LabelVector& truth, RewardKind kind);

// parse_completion + composite_reward.
RewardBreakdown score_completion(std::string_view raw, const LabelVector& truth, RewardKind kind);

// Canonical completion text for a label vector: optional reasoning block
// followed by a 14-key JSON object.
std::string render_completion(const LabelVector& predicted, const std::optional<std::string>& reasoning);

}  // namespace detoxr

#endif  // DETOXR_REWARD_HPP
