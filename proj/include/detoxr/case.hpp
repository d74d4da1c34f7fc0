#ifndef DETOXR_CASE_HPP
#define DETOXR_CASE_HPP

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "detoxr/toxins.hpp"

namespace detoxr {

// Schema entry for a numeric clinical variable. Present values must lie in
// [min, max]; absent values are simply not stored.
struct NumericField {
  std::string_view key;
  std::string_view label;
  std::string_view unit;
  double min;
  double max;
};

struct FlagField {
  std::string_view key;
  std::string_view label;
};

inline constexpr NumericField kAgeField{"age", "Age", "years", 0.0, 120.0};

enum class Vital : std::size_t {
  heart_rate,
  systolic_bp,
  diastolic_bp,
  respiratory_rate,
  spo2,
  temperature,
  gcs,
};

inline constexpr std::array<NumericField, 7> kVitalFields{{
    {"heart_rate", "Heart rate", "bpm", 0.0, 350.0},
    {"systolic_bp", "Systolic blood pressure", "mmHg", 0.0, 350.0},
    {"diastolic_bp", "Diastolic blood pressure", "mmHg", 0.0, 250.0},
    {"respiratory_rate", "Respiratory rate", "/min", 0.0, 100.0},
    {"spo2", "SpO2", "%", 0.0, 100.0},
    {"temperature", "Temperature", "°C", 20.0, 45.0},
    {"gcs", "Glasgow Coma Scale", "", 3.0, 15.0},
}};

enum class Indicator : std::size_t {
  coma_on_admission,
  preclinical_intubation,
  preclinical_resuscitation,
  naloxone_administered,
  suicidal_intent,
};

inline constexpr std::array<FlagField, 5> kIndicatorFields{{
    {"coma_on_admission", "Coma on admission"},
    {"preclinical_intubation", "Preclinical intubation"},
    {"preclinical_resuscitation", "Preclinical resuscitation"},
    {"naloxone_administered", "Naloxone administered"},
    {"suicidal_intent", "Suicidal intent"},
}};

enum class Symptom : std::size_t {
  vomiting,
  seizures,
  agitation,
  hallucinations,
  miosis,
  mydriasis,
  respiratory_depression,
  tremor,
  sweating,
  drowsiness,
  chest_pain,
  nystagmus,
};

inline constexpr std::array<FlagField, 12> kSymptomFields{{
    {"vomiting", "Vomiting"},
    {"seizures", "Seizures"},
    {"agitation", "Agitation"},
    {"hallucinations", "Hallucinations"},
    {"miosis", "Miosis"},
    {"mydriasis", "Mydriasis"},
    {"respiratory_depression", "Respiratory depression"},
    {"tremor", "Tremor"},
    {"sweating", "Sweating"},
    {"drowsiness", "Drowsiness"},
    {"chest_pain", "Chest pain"},
    {"nystagmus", "Nystagmus"},
}};

enum class Sex { male, female, other };

std::string_view sex_name(Sex s) noexcept;
std::optional<Sex> sex_from_name(std::string_view name) noexcept;

struct StructuredVariables {
  std::optional<double> age;
  std::optional<Sex> sex;
  std::array<std::optional<double>, kVitalFields.size()> vitals{};
  std::array<std::optional<bool>, kIndicatorFields.size()> indicators{};
  std::array<std::optional<bool>, kSymptomFields.size()> symptoms{};

  std::optional<double>& vital(Vital v) { return vitals[static_cast<std::size_t>(v)]; }
  const std::optional<double>& vital(Vital v) const { return vitals[static_cast<std::size_t>(v)]; }
  std::optional<bool>& indicator(Indicator i) { return indicators[static_cast<std::size_t>(i)]; }
  const std::optional<bool>& indicator(Indicator i) const {
    return indicators[static_cast<std::size_t>(i)];
  }
  std::optional<bool>& symptom(Symptom s) { return symptoms[static_cast<std::size_t>(s)]; }
  const std::optional<bool>& symptom(Symptom s) const { return symptoms[static_cast<std::size_t>(s)]; }

  bool operator==(const StructuredVariables&) const = default;
};

struct FreeTextFields {
  std::optional<std::string> history_text;
  std::optional<std::string> physical_exam;
  std::optional<std::string> ecg_findings;

  bool operator==(const FreeTextFields&) const = default;
};

struct Case {
  std::string case_id;
  StructuredVariables structured;
  FreeTextFields texts;
  std::vector<std::string> substance_history;
  std::optional<LabelVector> labels;

  bool operator==(const Case&) const = default;
};

enum class Split { train, val, test };

std::string_view split_name(Split s) noexcept;
std::optional<Split> split_from_name(std::string_view name) noexcept;

using SplitAssignment = std::map<std::string, Split>;

struct DatasetManifest {
  std::vector<Case> cases;
  std::optional<SplitAssignment> split_assignment;

  // Cases assigned to `split`, in dataset order.
  std::vector<const Case*> cases_in(Split split) const;
};

// Throws SchemaError on duplicate case ids and, when a split assignment is
// present, if it does not cover every case exactly once.
void validate_manifest(const DatasetManifest& manifest);

}  // namespace detoxr

#endif  // DETOXR_CASE_HPP
