#ifndef DETOXR_FUSION_HPP
#define DETOXR_FUSION_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "detoxr/case.hpp"

namespace detoxr {

enum class Section {
  demographics,
  vitals,
  indicators,
  symptoms,
  substance_history,
  history_text,
  physical_exam,
  ecg_findings,
  output_schema,
};

std::string_view section_name(Section s) noexcept;
std::optional<Section> section_from_name(std::string_view name) noexcept;
bool is_free_text(Section s) noexcept;

// A prompt template is a text asset with a "### system" block (the
// preamble sent as the system message) and a "### user" block containing
// {{section}} placeholders. Placeholder order defines the section order.
class PromptTemplate {
 public:
  struct Piece {
    std::optional<Section> section;  // nullopt: literal text
    std::string literal;
  };

  static PromptTemplate parse(std::string_view source);
  static PromptTemplate load(const std::filesystem::path& path);
  static const PromptTemplate& builtin();

  const std::string& system_preamble() const noexcept { return system_; }
  const std::vector<Section>& section_order() const noexcept { return order_; }
  const std::vector<Piece>& pieces() const noexcept { return pieces_; }
  const std::string& source() const noexcept { return source_; }
  // Stable content hash, recorded in reports and audit records.
  std::string hash() const;

 private:
  std::string source_;
  std::string system_;
  std::vector<Section> order_;
  std::vector<Piece> pieces_;
};

struct PromptSegment {
  std::optional<Section> section;
  std::string content;
};

struct RenderedPrompt {
  std::string system;
  std::string text;  // concatenation of segment contents
  std::size_t token_estimate = 0;
  bool truncated = false;
  std::vector<PromptSegment> segments;

  // Content of a rendered section, or nullptr if the template lacks it.
  const std::string* section(Section s) const;
};

inline constexpr std::size_t kDefaultPromptBudget = 2304;
inline constexpr std::string_view kTruncationMarker = "[truncated]";
inline constexpr std::string_view kMissingValue = "N/A";

// chars/4 heuristic, rounded up.
std::size_t estimate_tokens(std::string_view text) noexcept;

std::string render_section(const Case& c, Section s);

RenderedPrompt render_prompt(const Case& c, const PromptTemplate& tmpl = PromptTemplate::builtin());

// Shortens free-text sections until the estimate (system + user text) fits.
// Structured sections are never touched; BudgetError if they alone overflow.
RenderedPrompt truncate_to_budget(const RenderedPrompt& prompt, std::size_t budget);

inline RenderedPrompt prepare_prompt(const Case& c,
                                     const PromptTemplate& tmpl = PromptTemplate::builtin(),
                                     std::size_t budget = kDefaultPromptBudget) {
  return truncate_to_budget(render_prompt(c, tmpl), budget);
}

}  // namespace detoxr

#endif  // DETOXR_FUSION_HPP
