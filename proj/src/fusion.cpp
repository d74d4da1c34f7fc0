#include "detoxr/fusion.hpp"

#include <algorithm>
#include <array>

#include "detoxr/builtin_assets.hpp"
#include "detoxr/errors.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

namespace {

constexpr std::array<std::string_view, 9> kSectionNames{
    "demographics",  "vitals",        "indicators",   "symptoms",     "substance_history",
    "history_text",  "physical_exam", "ecg_findings", "output_schema"};

constexpr std::string_view kSystemMarker = "### system";
constexpr std::string_view kUserMarker = "### user";

std::string numeric_line(const NumericField& f, const std::optional<double>& v) {
  std::string line(f.label);
  line += ": ";
  if (!v) return line + std::string(kMissingValue);
  line += format_number(*v);
  if (!f.unit.empty()) {
    line += ' ';
    line += f.unit;
  }
  return line;
}

template <std::size_t N>
std::string flag_lines(const std::array<FlagField, N>& fields,
                       const std::array<std::optional<bool>, N>& values) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += '\n';
    out += fields[i].label;
    out += ": ";
    out += values[i] ? (*values[i] ? "true" : "false") : std::string(kMissingValue);
  }
  return out;
}

std::string output_schema_block() {
  std::string out =
      "First write your diagnostic reasoning enclosed in <reasoning> and </reasoning> tags.\n"
      "Then output one JSON object that maps each of the following 14 keys to true (substance "
      "present) or false (substance absent):\n";
  for (std::size_t i = 0; i < kNumToxins; ++i) {
    if (i) out += ", ";
    out += kToxinClasses[i].key;
  }
  return out;
}

const std::string& free_text(const Case& c, Section s, std::string& scratch) {
  const std::optional<std::string>* field = nullptr;
  switch (s) {
    case Section::history_text: field = &c.texts.history_text; break;
    case Section::physical_exam: field = &c.texts.physical_exam; break;
    case Section::ecg_findings: field = &c.texts.ecg_findings; break;
    default: break;
  }
  if (field && *field && !(*field)->empty()) return **field;
  scratch = std::string(kMissingValue);
  return scratch;
}

std::size_t total_bytes(const RenderedPrompt& p) {
  std::size_t n = p.system.size();
  for (const auto& seg : p.segments) n += seg.content.size();
  return n;
}

void rebuild_text(RenderedPrompt& p) {
  p.text.clear();
  for (const auto& seg : p.segments) p.text += seg.content;
  p.token_estimate = (p.system.size() + p.text.size() + 3) / 4;
}

}  // namespace

std::string_view section_name(Section s) noexcept { return kSectionNames[static_cast<std::size_t>(s)]; }

std::optional<Section> section_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kSectionNames.size(); ++i) {
    if (kSectionNames[i] == name) return static_cast<Section>(i);
  }
  return std::nullopt;
}

bool is_free_text(Section s) noexcept {
  return s == Section::history_text || s == Section::physical_exam || s == Section::ecg_findings;
}

PromptTemplate PromptTemplate::parse(std::string_view source) {
  PromptTemplate t;
  t.source_ = std::string(source);

  auto sys = source.find(kSystemMarker);
  auto usr = source.find(kUserMarker);
  if (sys == std::string_view::npos || usr == std::string_view::npos || usr < sys) {
    throw TemplateError("template needs a '### system' block followed by a '### user' block");
  }
  auto sys_body = source.substr(sys + kSystemMarker.size(), usr - sys - kSystemMarker.size());
  t.system_ = std::string(trim(sys_body));

  std::string_view body = source.substr(usr + kUserMarker.size());
  if (!body.empty() && body.front() == '\n') body.remove_prefix(1);
  while (!body.empty() && (body.back() == '\n' || body.back() == ' ' || body.back() == '\r')) {
    body.remove_suffix(1);
  }

  std::size_t pos = 0;
  while (pos < body.size()) {
    auto open = body.find("{{", pos);
    if (open == std::string_view::npos) {
      t.pieces_.push_back({std::nullopt, std::string(body.substr(pos))});
      break;
    }
    if (open > pos) t.pieces_.push_back({std::nullopt, std::string(body.substr(pos, open - pos))});
    auto close = body.find("}}", open + 2);
    if (close == std::string_view::npos) throw TemplateError("unterminated placeholder in template");
    auto name = trim(body.substr(open + 2, close - open - 2));
    auto section = section_from_name(name);
    if (!section) throw TemplateError("unknown section '" + std::string(name) + "'");
    if (std::find(t.order_.begin(), t.order_.end(), *section) != t.order_.end()) {
      throw TemplateError("section '" + std::string(name) + "' appears twice");
    }
    t.order_.push_back(*section);
    t.pieces_.push_back({*section, {}});
    pos = close + 2;
  }
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

const PromptTemplate& PromptTemplate::builtin() {
  static const PromptTemplate t = parse(assets::kPromptTemplate);
  return t;
}

std::string PromptTemplate::hash() const { return hex64(fnv1a64(source_)); }

const std::string* RenderedPrompt::section(Section s) const {
  for (const auto& seg : segments) {
    if (seg.section == s) return &seg.content;
  }
  return nullptr;
}

std::size_t estimate_tokens(std::string_view text) noexcept { return (text.size() + 3) / 4; }

std::string render_section(const Case& c, Section s) {
  const auto& st = c.structured;
  switch (s) {
    case Section::demographics: {
      std::string out = numeric_line(kAgeField, st.age);
      out += "\nSex: ";
      out += st.sex ? std::string(sex_name(*st.sex)) : std::string(kMissingValue);
      return out;
    }
    case Section::vitals: {
      std::string out;
      for (std::size_t i = 0; i < kVitalFields.size(); ++i) {
        if (i) out += '\n';
        out += numeric_line(kVitalFields[i], st.vitals[i]);
      }
      return out;
    }
    case Section::indicators: return flag_lines(kIndicatorFields, st.indicators);
    case Section::symptoms: return flag_lines(kSymptomFields, st.symptoms);
    case Section::substance_history: {
      if (c.substance_history.empty()) return "None reported";
      std::string out;
      for (std::size_t i = 0; i < c.substance_history.size(); ++i) {
        if (i) out += '\n';
        out += "- " + c.substance_history[i];
      }
      return out;
    }
    case Section::history_text:
    case Section::physical_exam:
    case Section::ecg_findings: {
      std::string scratch;
      return free_text(c, s, scratch);
    }
    case Section::output_schema: return output_schema_block();
  }
  throw TemplateError("unknown section");
}

RenderedPrompt render_prompt(const Case& c, const PromptTemplate& tmpl) {
  RenderedPrompt p;
  p.system = tmpl.system_preamble();
  for (const auto& piece : tmpl.pieces()) {
    if (piece.section) {
      p.segments.push_back({piece.section, render_section(c, *piece.section)});
    } else {
      p.segments.push_back({std::nullopt, piece.literal});
    }
  }
  rebuild_text(p);
  return p;
}

RenderedPrompt truncate_to_budget(const RenderedPrompt& prompt, std::size_t budget) {
  if (budget == 0) throw BudgetError("budget must be positive");
  RenderedPrompt out = prompt;
  rebuild_text(out);
  if (out.token_estimate <= budget) return out;

  const std::size_t marker_len = kTruncationMarker.size();
  const std::size_t allowed_bytes = budget * 4;

  // Truncation candidates: the longer of physical_exam/ecg_findings first,
  // history_text last.
  std::vector<std::size_t> order;
  std::size_t history_idx = out.segments.size();
  for (std::size_t i = 0; i < out.segments.size(); ++i) {
    const auto& seg = out.segments[i];
    if (!seg.section || !is_free_text(*seg.section)) continue;
    if (seg.content.size() <= marker_len + 1) continue;
    if (*seg.section == Section::history_text) {
      history_idx = i;
    } else {
      order.push_back(i);
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.segments[a].content.size() > out.segments[b].content.size();
  });
  if (history_idx < out.segments.size()) order.push_back(history_idx);

  std::size_t floor_bytes = total_bytes(out);
  for (auto i : order) floor_bytes -= out.segments[i].content.size() - marker_len;
  if (floor_bytes > allowed_bytes) {
    throw BudgetError("structured sections need ~" + std::to_string((floor_bytes + 3) / 4) +
                      " tokens, budget is " + std::to_string(budget));
  }

  for (auto i : order) {
    std::size_t bytes = total_bytes(out);
    if (bytes <= allowed_bytes) break;
    std::string& content = out.segments[i].content;
    std::size_t excess = bytes - allowed_bytes;
    if (content.size() <= excess + marker_len + 1) {
      content = std::string(kTruncationMarker);
    } else {
      std::size_t keep = utf8_prefix_length(content, content.size() - excess - marker_len - 1);
      std::string head(trim(std::string_view(content).substr(0, keep)));
      content = head.empty() ? std::string(kTruncationMarker) : head + " " + std::string(kTruncationMarker);
    }
  }
  rebuild_text(out);
  out.truncated = true;
  return out;
}

}  // namespace detoxr
