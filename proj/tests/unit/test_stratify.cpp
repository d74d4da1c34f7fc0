#include "doctest.h"

#include <cmath>

#include "detoxr/errors.hpp"
#include "detoxr/stratify.hpp"
#include "detoxr/synth.hpp"

using namespace detoxr;

TEST_CASE("split capacities follow the largest remainder rule") {
  CHECK(split_capacities(870, {0.5, 0.2, 0.3}) == std::array<long, 3>{435, 174, 261});
  CHECK(split_capacities(10, {0.5, 0.2, 0.3}) == std::array<long, 3>{5, 2, 3});
  CHECK(split_capacities(7, {0.5, 0.2, 0.3}) == std::array<long, 3>{4, 1, 2});
  CHECK(split_capacities(1, {0.5, 0.2, 0.3}) == std::array<long, 3>{1, 0, 0});
  for (std::size_t n = 0; n < 200; ++n) {
    auto c = split_capacities(n, {0.5, 0.2, 0.3});
    CHECK(c[0] + c[1] + c[2] == static_cast<long>(n));
  }
}

TEST_CASE("invalid split ratios") {
  CHECK_THROWS_AS(validate_split_spec(SplitSpec{{0.5, 0.5, 0.0}, 0}), ConfigError);
  CHECK_THROWS_AS(validate_split_spec(SplitSpec{{0.5, 0.2, 0.2}, 0}), ConfigError);
  CHECK_NOTHROW(validate_split_spec(SplitSpec{}));
}

TEST_CASE("stratified split of the synthetic cohort") {
  SynthConfig sc;
  sc.seed = 7;
  auto ds = generate_synthetic(sc);
  SplitSpec spec{{0.5, 0.2, 0.3}, 13};
  auto assignment = iterative_stratify(ds, spec);
  CHECK(assignment.size() == ds.cases.size());

  auto report = stratification_report(ds, assignment, spec);
  CHECK(report.sizes == std::array<long, 3>{435, 174, 261});
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    long positives = report.positives[k][0] + report.positives[k][1] + report.positives[k][2];
    if (positives >= 20) CHECK(report.max_fraction_deviation[k] <= 0.05);
  }

  CHECK(iterative_stratify(ds, spec) == assignment);
  SplitSpec other = spec;
  other.seed = 14;
  CHECK(iterative_stratify(ds, other) != assignment);
}

TEST_CASE("stratification needs labels") {
  SynthConfig sc;
  sc.n_cases = 20;
  auto ds = generate_synthetic(sc);
  ds.cases[4].labels.reset();
  CHECK_THROWS(iterative_stratify(ds, SplitSpec{}));
}
