#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "detoxr/errors.hpp"
#include "detoxr/record.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

std::string_view sex_name(Sex s) noexcept {
  switch (s) {
    case Sex::male: return "male";
    case Sex::female: return "female";
    case Sex::other: return "other";
  }
  return "other";
}

std::optional<Sex> sex_from_name(std::string_view name) noexcept {
  if (name == "male") return Sex::male;
  if (name == "female") return Sex::female;
  if (name == "other") return Sex::other;
  return std::nullopt;
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::optional<Split> split_from_name(std::string_view name) noexcept {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  return std::nullopt;
}

std::vector<const Case*> DatasetManifest::cases_in(Split split) const {
  std::vector<const Case*> out;
  if (!split_assignment) return out;
  for (const auto& c : cases) {
    auto it = split_assignment->find(c.case_id);
    if (it != split_assignment->end() && it->second == split) out.push_back(&c);
  }
  return out;
}

void validate_manifest(const DatasetManifest& manifest) {
  std::set<std::string_view> seen;
  for (const auto& c : manifest.cases) {
    if (!seen.insert(c.case_id).second) {
      throw SchemaError("case_id", "duplicate case_id '" + c.case_id + "'");
    }
  }
  if (!manifest.split_assignment) return;
  for (const auto& c : manifest.cases) {
    if (!manifest.split_assignment->contains(c.case_id)) {
      throw SchemaError("split", "case '" + c.case_id + "' has no split assignment");
    }
  }
  for (const auto& [id, split] : *manifest.split_assignment) {
    if (!seen.contains(id)) throw SchemaError("split", "assignment names unknown case '" + id + "'");
  }
}

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& path) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError(path.empty() ? key : path + "." + key, "unknown field");
  }
}

const json* member(const json& obj, std::string_view key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

void require_object(const json& value, const std::string& path) {
  if (!value.is_object()) throw SchemaError(path, "expected an object");
}

std::optional<double> read_numeric(const json& obj, const NumericField& field,
                                   const std::string& path) {
  const json* v = member(obj, field.key);
  if (!v) return std::nullopt;
  if (!v->is_number()) throw SchemaError(path, "expected a number");
  double x = v->get<double>();
  if (!std::isfinite(x) || x < field.min || x > field.max) {
    throw RangeError(path, "value " + format_number(x) + " outside [" + format_number(field.min) +
                               ", " + format_number(field.max) + "]");
  }
  return x;
}

template <std::size_t N>
void read_flags(const json& obj, const std::array<FlagField, N>& fields,
                std::array<std::optional<bool>, N>& out, const std::string& path) {
  require_object(obj, path);
  for (const auto& [key, value] : obj.items()) {
    std::size_t i = 0;
    while (i < N && fields[i].key != key) ++i;
    if (i == N) throw SchemaError(path + "." + key, "unknown field");
    if (value.is_null()) continue;
    if (!value.is_boolean()) throw SchemaError(path + "." + key, "expected a boolean");
    out[i] = value.template get<bool>();
  }
}

StructuredVariables parse_structured(const json& obj) {
  require_object(obj, "structured");
  reject_unknown_keys(obj, {"age", "sex", "vitals", "indicators", "symptoms"}, "structured");
  StructuredVariables s;
  s.age = read_numeric(obj, kAgeField, "structured.age");
  if (const json* sex = member(obj, "sex")) {
    if (!sex->is_string()) throw SchemaError("structured.sex", "expected a string");
    s.sex = sex_from_name(sex->get<std::string>());
    if (!s.sex) throw SchemaError("structured.sex", "expected one of male, female, other");
  }
  if (const json* vitals = member(obj, "vitals")) {
    require_object(*vitals, "structured.vitals");
    for (const auto& [key, _] : vitals->items()) {
      bool known = false;
      for (const auto& f : kVitalFields) known = known || f.key == key;
      if (!known) throw SchemaError("structured.vitals." + key, "unknown field");
    }
    for (std::size_t i = 0; i < kVitalFields.size(); ++i) {
      s.vitals[i] = read_numeric(*vitals, kVitalFields[i],
                                 "structured.vitals." + std::string(kVitalFields[i].key));
    }
  }
  if (const json* ind = member(obj, "indicators")) {
    read_flags(*ind, kIndicatorFields, s.indicators, "structured.indicators");
  }
  if (const json* sym = member(obj, "symptoms")) {
    read_flags(*sym, kSymptomFields, s.symptoms, "structured.symptoms");
  }
  return s;
}

std::optional<std::string> read_text(const json& obj, std::string_view key) {
  const json* v = member(obj, key);
  if (!v) return std::nullopt;
  if (!v->is_string()) throw SchemaError("texts." + std::string(key), "expected a string");
  return std::string(trim(v->get<std::string>()));
}

json numeric_json(double x) {
  if (std::floor(x) == x && std::abs(x) < 1e15) return static_cast<long long>(x);
  return x;
}

}  // namespace

LabelVector label_vector_from_json(const json& value, const std::string& field) {
  if (!value.is_array()) throw LabelError(field, "expected an array of 14 0/1 values");
  if (value.size() != kNumToxins) {
    throw LabelError(field, "expected " + std::to_string(kNumToxins) + " entries, got " +
                                std::to_string(value.size()));
  }
  LabelVector labels;
  for (std::size_t i = 0; i < kNumToxins; ++i) {
    const json& bit = value[i];
    if (bit.is_number_integer() && (bit.get<long long>() == 0 || bit.get<long long>() == 1)) {
      labels.set(i, bit.get<long long>() == 1);
    } else if (bit.is_boolean()) {
      labels.set(i, bit.get<bool>());
    } else {
      throw LabelError(field + "[" + std::to_string(i) + "]", "expected 0 or 1");
    }
  }
  return labels;
}

json label_vector_to_json(const LabelVector& labels) {
  json arr = json::array();
  for (std::size_t i = 0; i < kNumToxins; ++i) arr.push_back(labels.test(i) ? 1 : 0);
  return arr;
}

Case parse_case_json(const json& record) {
  if (!record.is_object()) throw SchemaError("", "case record must be a JSON object");
  reject_unknown_keys(record, {"case_id", "structured", "texts", "substance_history", "labels"}, "");

  Case c;
  const json* id = member(record, "case_id");
  if (!id) throw SchemaError("case_id", "missing required field");
  if (!id->is_string() || id->get<std::string>().empty()) {
    throw SchemaError("case_id", "expected a non-empty string");
  }
  c.case_id = id->get<std::string>();

  if (const json* s = member(record, "structured")) c.structured = parse_structured(*s);

  if (const json* t = member(record, "texts")) {
    require_object(*t, "texts");
    reject_unknown_keys(*t, {"history_text", "physical_exam", "ecg_findings"}, "texts");
    c.texts.history_text = read_text(*t, "history_text");
    c.texts.physical_exam = read_text(*t, "physical_exam");
    c.texts.ecg_findings = read_text(*t, "ecg_findings");
  }

  if (const json* h = member(record, "substance_history")) {
    if (!h->is_array()) throw SchemaError("substance_history", "expected an array of strings");
    for (std::size_t i = 0; i < h->size(); ++i) {
      const json& entry = (*h)[i];
      std::string path = "substance_history[" + std::to_string(i) + "]";
      if (!entry.is_string()) throw SchemaError(path, "expected a string");
      std::string value(trim(entry.get<std::string>()));
      if (value.empty()) throw SchemaError(path, "empty entry");
      c.substance_history.push_back(std::move(value));
    }
  }

  if (const json* l = member(record, "labels")) c.labels = label_vector_from_json(*l);
  return c;
}

Case parse_case_record(std::string_view line) {
  json record = json::parse(line.begin(), line.end(), nullptr, false);
  if (record.is_discarded()) throw SchemaError("", "line is not valid JSON");
  return parse_case_json(record);
}

json case_to_json(const Case& c) {
  json out;
  out["case_id"] = c.case_id;

  json s = json::object();
  if (c.structured.age) s["age"] = numeric_json(*c.structured.age);
  if (c.structured.sex) s["sex"] = std::string(sex_name(*c.structured.sex));
  json vitals = json::object();
  for (std::size_t i = 0; i < kVitalFields.size(); ++i) {
    if (c.structured.vitals[i]) vitals[std::string(kVitalFields[i].key)] = numeric_json(*c.structured.vitals[i]);
  }
  s["vitals"] = vitals;
  json ind = json::object();
  for (std::size_t i = 0; i < kIndicatorFields.size(); ++i) {
    if (c.structured.indicators[i]) ind[std::string(kIndicatorFields[i].key)] = *c.structured.indicators[i];
  }
  s["indicators"] = ind;
  json sym = json::object();
  for (std::size_t i = 0; i < kSymptomFields.size(); ++i) {
    if (c.structured.symptoms[i]) sym[std::string(kSymptomFields[i].key)] = *c.structured.symptoms[i];
  }
  s["symptoms"] = sym;
  out["structured"] = s;

  json texts = json::object();
  if (c.texts.history_text) texts["history_text"] = *c.texts.history_text;
  if (c.texts.physical_exam) texts["physical_exam"] = *c.texts.physical_exam;
  if (c.texts.ecg_findings) texts["ecg_findings"] = *c.texts.ecg_findings;
  out["texts"] = texts;

  out["substance_history"] = c.substance_history;
  if (c.labels) out["labels"] = label_vector_to_json(*c.labels);
  return out;
}

std::string serialize_case_record(const Case& c) { return case_to_json(c).dump(); }

DatasetManifest read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  DatasetManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      manifest.cases.push_back(parse_case_record(line));
    } catch (const SchemaError& e) {
      throw SchemaError(e.field(), "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const RangeError& e) {
      throw RangeError(e.field(), "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const LabelError& e) {
      throw LabelError(e.field(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_manifest(manifest);
  return manifest;
}

void write_dataset(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset '" + path.string() + "'");
  for (const auto& c : manifest.cases) out << serialize_case_record(c) << '\n';
}

SplitAssignment read_split_assignment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split file '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw SchemaError("split", "split file must be a JSON object");
  // Accept either the bare mapping or {"assignment": {...}}.
  const json& mapping = doc.contains("assignment") ? doc["assignment"] : doc;
  SplitAssignment out;
  for (const auto& [id, value] : mapping.items()) {
    auto split = value.is_string() ? split_from_name(value.get<std::string>()) : std::nullopt;
    if (!split) throw SchemaError("split." + id, "expected train, val or test");
    out.emplace(id, *split);
  }
  return out;
}

json split_assignment_to_json(const SplitAssignment& assignment) {
  json out = json::object();
  for (const auto& [id, split] : assignment) out[id] = std::string(split_name(split));
  return out;
}

}  // namespace detoxr
