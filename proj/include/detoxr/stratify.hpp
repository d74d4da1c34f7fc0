#ifndef DETOXR_STRATIFY_HPP
#define DETOXR_STRATIFY_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "detoxr/case.hpp"

namespace detoxr {

struct SplitSpec {
  std::array<double, 3> ratios{0.5, 0.2, 0.3};  // train, val, test
  std::uint64_t seed = 0;
};

void validate_split_spec(const SplitSpec& spec);

// Integer split capacities by the largest-remainder rule; remainder ties go
// to the larger ratio, then to the earlier split.
std::array<long, 3> split_capacities(std::size_t n, const std::array<double, 3>& ratios);

// First-order iterative stratification (rarest label first). Splits whose
// total capacity is exhausted are not eligible, so split sizes equal
// split_capacities() exactly.
SplitAssignment iterative_stratify(const DatasetManifest& dataset, const SplitSpec& spec);

struct StratificationReport {
  std::array<long, 3> sizes{};
  std::array<long, 3> target_sizes{};
  // positives[class][split]
  std::array<std::array<long, 3>, kNumToxins> positives{};
  // Largest |fraction - ratio| over splits, per class (0 for classes without positives).
  std::array<double, kNumToxins> max_fraction_deviation{};
  // Largest deviation over label pairs with at least `min_pair_count` co-occurrences.
  double max_pair_fraction_deviation = 0.0;
  long pairs_considered = 0;
};

StratificationReport stratification_report(const DatasetManifest& dataset, const SplitAssignment& assignment,
                                           const SplitSpec& spec, long min_pair_count = 20);

}  // namespace detoxr

#endif  // DETOXR_STRATIFY_HPP
