#ifndef DETOXR_RECORD_HPP
#define DETOXR_RECORD_HPP

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "detoxr/case.hpp"

namespace detoxr {

using json = nlohmann::json;

// Strict JSON-lines case record codec. Unknown fields, wrong types and
// out-of-range numerics are rejected with a ValidationError subclass whose
// field() names the offending path.
Case parse_case_record(std::string_view line);
Case parse_case_json(const json& record);

json case_to_json(const Case& c);
std::string serialize_case_record(const Case& c);

json label_vector_to_json(const LabelVector& labels);
LabelVector label_vector_from_json(const json& value, const std::string& field = "labels");

// Whole-file helpers. Errors are re-thrown with the line number prepended.
DatasetManifest read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const DatasetManifest& manifest);

SplitAssignment read_split_assignment(const std::filesystem::path& path);
json split_assignment_to_json(const SplitAssignment& assignment);

}  // namespace detoxr

#endif  // DETOXR_RECORD_HPP
