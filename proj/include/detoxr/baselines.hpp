#ifndef DETOXR_BASELINES_HPP
#define DETOXR_BASELINES_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "detoxr/case.hpp"

namespace detoxr {

// Lowercase substance alias -> class. Canonical class keys always resolve
// to themselves.
class AliasLexicon {
 public:
  AliasLexicon();

  // "alias = class_key" per line; '#' starts a comment.
  static AliasLexicon parse(std::string_view text);
  static AliasLexicon load(const std::filesystem::path& path);
  static const AliasLexicon& builtin();

  void add(std::string_view alias, Toxin toxin);
  std::optional<Toxin> resolve(std::string_view substance) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, Toxin, std::less<>> entries_;
};

struct HistoryPrediction {
  LabelVector labels;
  int unresolved = 0;
};

// The reported substance history taken as the prediction.
HistoryPrediction history_baseline(const Case& c, const AliasLexicon& lexicon = AliasLexicon::builtin());

// Multi-hot resolved history plus unresolved-entry count.
HistoryPrediction resolve_history(const std::vector<std::string>& history, const AliasLexicon& lexicon);

}  // namespace detoxr

#endif  // DETOXR_BASELINES_HPP
