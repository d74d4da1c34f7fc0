#include "doctest.h"

#include "detoxr/errors.hpp"
#include "detoxr/fusion.hpp"
#include "detoxr/util.hpp"
#include "fixtures.hpp"

using namespace detoxr;

namespace {

bool contains_line(const std::string& text, const std::string& line) {
  return ("\n" + text + "\n").find("\n" + line + "\n") != std::string::npos;
}

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("golden prompt for the sample case") {
  auto golden = read_text_file(std::string(DETOXR_TEST_DATA_DIR) + "/golden/sample_case_prompt.md");
  RenderedPrompt p = render_prompt(fixtures::sample_case());
  CHECK(p.text == golden);
  CHECK(p.system == PromptTemplate::builtin().system_preamble());
  CHECK_FALSE(p.truncated);
}

TEST_CASE("builtin template matches the shipped asset") {
  auto asset = read_text_file(std::string(DETOXR_ASSET_DIR) + "/prompt_template.txt");
  CHECK(PromptTemplate::parse(asset).hash() == PromptTemplate::builtin().hash());
  const auto& order = PromptTemplate::builtin().section_order();
  REQUIRE(order.size() == 9);
  CHECK(order.front() == Section::demographics);
  CHECK(order[7] == Section::ecg_findings);
  CHECK(order.back() == Section::output_schema);
}

TEST_CASE("rendering rules") {
  Case c = fixtures::sample_case();

  SUBCASE("absent numeric renders as N/A") {
    c.structured.vital(Vital::heart_rate).reset();
    auto text = render_prompt(c).text;
    CHECK(contains_line(text, "Heart rate: N/A"));
    CHECK(occurrences(text, "Heart rate:") == 1);
  }
  SUBCASE("boolean indicators") {
    c.structured.indicator(Indicator::coma_on_admission) = true;
    CHECK(contains_line(render_prompt(c).text, "Coma on admission: true"));
  }
  SUBCASE("history as bullets") {
    c.substance_history = {"heroin", "pregabalin"};
    auto text = render_prompt(c).text;
    CHECK(contains_line(text, "- heroin"));
    CHECK(contains_line(text, "- pregabalin"));
  }
  SUBCASE("free text is verbatim") {
    c.texts.history_text = "Line one.\nLine two with <tags> & {braces}.";
    CHECK(render_prompt(c).text.find(*c.texts.history_text) != std::string::npos);
  }
  SUBCASE("deterministic") {
    CHECK(render_prompt(c).text == render_prompt(c).text);
  }
  SUBCASE("output schema lists every key") {
    auto text = render_prompt(c).text;
    for (const auto& t : kToxinClasses) CHECK(text.find(std::string(t.key)) != std::string::npos);
    CHECK(text.find("<reasoning>") != std::string::npos);
  }
}

TEST_CASE("every present structured field appears exactly once") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    Case c = fixtures::random_case(rng, "r" + std::to_string(i));
    auto text = render_prompt(c).text;
    for (const auto& f : kVitalFields) CHECK(occurrences(text, "\n" + std::string(f.label) + ": ") == 1);
    for (const auto& f : kSymptomFields) CHECK(occurrences(text, "\n" + std::string(f.label) + ": ") == 1);
    for (const auto& f : kIndicatorFields) CHECK(occurrences(text, "\n" + std::string(f.label) + ": ") == 1);
  }
}

TEST_CASE("template errors") {
  CHECK_THROWS_AS(PromptTemplate::parse("### system\nx\n### user\n{{vitals}} {{bogus}}\n"), TemplateError);
  CHECK_THROWS_AS(PromptTemplate::parse("### system\nx\n### user\n{{vitals}} {{vitals}}\n"), TemplateError);
}

TEST_CASE("token estimate is chars over four, rounded up") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("abcd") == 1);
  CHECK(estimate_tokens("abcde") == 2);
}

TEST_CASE("truncation") {
  Case c = fixtures::sample_case();

  SUBCASE("under budget is unchanged") {
    auto p = render_prompt(c);
    auto t = truncate_to_budget(p, kDefaultPromptBudget);
    CHECK(t.text == p.text);
    CHECK_FALSE(t.truncated);
  }
  SUBCASE("oversized physical exam is cut with a marker") {
    std::string big;
    while (big.size() < 40000) big += "pupils reactive, skin warm. ";
    c.texts.physical_exam = big;
    auto t = prepare_prompt(c);
    CHECK(t.truncated);
    CHECK(t.token_estimate <= kDefaultPromptBudget);
    CHECK(t.token_estimate == estimate_tokens(t.system + t.text));
    const std::string* exam = t.section(Section::physical_exam);
    REQUIRE(exam != nullptr);
    CHECK(exam->size() >= kTruncationMarker.size());
    CHECK(exam->substr(exam->size() - kTruncationMarker.size()) == kTruncationMarker);
    CHECK(*t.section(Section::history_text) == *c.texts.history_text);
  }
  SUBCASE("history text is cut last") {
    std::string big(30000, 'h');
    c.texts.history_text = big;
    c.texts.physical_exam = std::string(30000, 'p');
    auto t = prepare_prompt(c);
    CHECK(t.token_estimate <= kDefaultPromptBudget);
    const std::string* exam = t.section(Section::physical_exam);
    CHECK(exam->find('p') == std::string::npos);
  }
  SUBCASE("multi-byte text is cut on a character boundary") {
    std::string big;
    while (big.size() < 40000) big += "Überdosis ";
    c.texts.physical_exam = big;
    auto t = prepare_prompt(c);
    const std::string* exam = t.section(Section::physical_exam);
    std::string body = exam->substr(0, exam->size() - kTruncationMarker.size());
    CHECK(utf8_prefix_length(body, body.size()) == body.size());
  }
  SUBCASE("structured overflow") {
    CHECK_THROWS_AS(truncate_to_budget(render_prompt(c), 1), BudgetError);
  }
}
