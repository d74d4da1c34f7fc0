#ifndef DETOXR_METRICS_HPP
#define DETOXR_METRICS_HPP

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "detoxr/toxins.hpp"

namespace detoxr {

struct PredictionRow {
  std::string case_id;
  LabelVector predicted;
  LabelVector truth;
};

struct PredictionMatrix {
  std::vector<PredictionRow> rows;
};

struct Averages {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassMetrics {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Micro pools TP/FP/FN over all (case, class) pairs; macro averages the
// per-class values over all 14 classes. Zero denominators yield 0.
struct MetricsReport {
  Averages micro;
  Averages macro;
  std::array<ClassMetrics, kNumToxins> per_class{};
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

MetricsReport compute_metrics(const PredictionMatrix& matrix);

enum class Outcome { both_correct, only_a_correct, only_b_correct, both_wrong };

std::string_view outcome_name(Outcome o) noexcept;

struct ComparisonCell {
  std::string case_id;
  Toxin toxin;
  Outcome outcome;
};

struct ComparisonSummary {
  int cases = 0;
  int perfect_a = 0;
  int perfect_b = 0;
  // True positives one side found and the other missed.
  int found_by_a_missed_by_b = 0;
  int found_by_b_missed_by_a = 0;
  // False positives one side raised where the other correctly said absent.
  int false_alarm_a_only = 0;
  int false_alarm_b_only = 0;
  std::array<int, 4> outcome_counts{};
};

struct CaseComparison {
  std::vector<ComparisonCell> grid;  // case-major, canonical class order
  ComparisonSummary summary;
};

// Both matrices must cover the same case ids with identical truths
// (row order may differ); MismatchError otherwise.
CaseComparison case_comparison(const PredictionMatrix& a, const PredictionMatrix& b);

}  // namespace detoxr

#endif  // DETOXR_METRICS_HPP
