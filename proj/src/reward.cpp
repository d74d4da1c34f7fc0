#include "detoxr/reward.hpp"

#include "json.hpp"

namespace detoxr {

using json = nlohmann::json;

namespace {

constexpr std::string_view kOpenTag = "<reasoning>";
constexpr std::string_view kCloseTag = "</reasoning>";

// End (one past the closing brace) of the balanced {...} starting at `open`,
// honouring JSON string escapes; npos if unbalanced.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<json> first_json_object(std::string_view s) {
  for (std::size_t open = s.find('{'); open != std::string_view::npos; open = s.find('{', open + 1)) {
    auto end = matching_brace(s, open);
    if (end == std::string_view::npos) continue;
    auto candidate = s.substr(open, end - open);
    json doc = json::parse(candidate.begin(), candidate.end(), nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) return doc;
  }
  return std::nullopt;
}

std::optional<bool> as_boolean(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) {
    auto x = v.get<long long>();
    if (x == 0 || x == 1) return x == 1;
  }
  return std::nullopt;
}

struct Counts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

Counts count(const LabelVector& predicted, const LabelVector& truth) {
  auto p = predicted.bits();
  auto g = truth.bits();
  return {static_cast<int>((p & g).count()), static_cast<int>((p & ~g).count()),
          static_cast<int>((~p & g).count())};
}

}  // namespace

LabelVector ParsedCompletion::predicted_labels() const {
  LabelVector out;
  if (!predictions) return out;
  for (const auto& [toxin, value] : *predictions) out.set(toxin, value);
  return out;
}

std::string_view reward_kind_name(RewardKind k) noexcept { return k == RewardKind::f1 ? "f1" : "iou"; }

std::optional<RewardKind> reward_kind_from_name(std::string_view name) noexcept {
  if (name == "f1") return RewardKind::f1;
  if (name == "iou") return RewardKind::iou;
  return std::nullopt;
}

CompletionParse parse_completion(std::string_view raw) {
  CompletionParse out;
  out.parsed.raw = std::string(raw);

  std::size_t search_from = 0;
  auto open = raw.find(kOpenTag);
  if (open != std::string_view::npos) {
    auto body_start = open + kOpenTag.size();
    auto close = raw.find(kCloseTag, body_start);
    if (close != std::string_view::npos) {
      out.parsed.reasoning = std::string(raw.substr(body_start, close - body_start));
      out.components.has_reasoning_block = true;
      search_from = close + kCloseTag.size();
    }
  }

  auto doc = first_json_object(raw.substr(search_from));
  if (!doc) return out;
  out.components.has_valid_json = true;

  std::map<Toxin, bool> predictions;
  for (const auto& [key, value] : doc->items()) {
    auto toxin = toxin_from_key(key);
    if (!toxin) continue;  // extra keys are tolerated
    if (auto b = as_boolean(value)) predictions[*toxin] = *b;
  }
  out.components.has_all_keys = predictions.size() == kNumToxins;
  out.parsed.predictions = std::move(predictions);
  return out;
}

RewardBreakdown reward_f1(const ParsedCompletion& parsed, const LabelVector& truth) {
  RewardBreakdown r;
  if (!parsed.predictions) {
    r.fn = static_cast<int>(truth.count());
    return r;
  }
  auto c = count(parsed.predicted_labels(), truth);
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  int denom = 2 * c.tp + c.fp + c.fn;
  r.r_task = (c.tp + c.fp + c.fn) > 0 ? 2.0 * c.tp / denom : 1.0;
  r.total = r.r_task;
  return r;
}

RewardBreakdown reward_iou(const ParsedCompletion& parsed, const LabelVector& truth) {
  RewardBreakdown r;
  if (!parsed.predictions) {
    r.fn = static_cast<int>(truth.count());
    return r;
  }
  auto c = count(parsed.predicted_labels(), truth);
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  int union_size = c.tp + c.fp + c.fn;
  r.r_task = union_size == 0 ? 1.0 : static_cast<double>(c.tp) / union_size;
  r.total = r.r_task;
  return r;
}

RewardBreakdown composite_reward(const ParsedCompletion& parsed, const FormatComponents& components,
                                 const LabelVector& truth, RewardKind kind) {
  RewardBreakdown r = kind == RewardKind::f1 ? reward_f1(parsed, truth) : reward_iou(parsed, truth);
  r.r_format = components.score();
  r.total = r.r_task + r.r_format;
  return r;
}

RewardBreakdown score_completion(std::string_view raw, const LabelVector& truth, RewardKind kind) {
  auto p = parse_completion(raw);
  return composite_reward(p.parsed, p.components, truth, kind);
}

std::string render_completion(const LabelVector& predicted, const std::optional<std::string>& reasoning) {
  std::string out;
  if (reasoning) {
    out += kOpenTag;
    out += *reasoning;
    out += kCloseTag;
    out += '\n';
  }
  out += '{';
  for (std::size_t i = 0; i < kNumToxins; ++i) {
    if (i) out += ", ";
    out += '"';
    out += kToxinClasses[i].key;
    out += "\": ";
    out += predicted.test(i) ? "true" : "false";
  }
  out += '}';
  return out;
}

}  // namespace detoxr
