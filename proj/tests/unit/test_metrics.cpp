#include "doctest.h"

#include <random>

#include "detoxr/errors.hpp"
#include "detoxr/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace detoxr;

namespace {

std::vector<std::vector<int>> to_ints(const std::vector<LabelVector>& rows) {
  std::vector<std::vector<int>> out;
  for (const auto& r : rows) {
    std::vector<int> v;
    for (std::size_t k = 0; k < kNumToxins; ++k) v.push_back(r.test(k) ? 1 : 0);
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("metrics match the naive oracle") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    PredictionMatrix m;
    std::vector<LabelVector> pred, truth;
    for (int i = 0; i < 60; ++i) {
      pred.push_back(fixtures::random_labels(rng, 0.25));
      truth.push_back(fixtures::random_labels(rng, 0.25));
      m.rows.push_back({"c" + std::to_string(i), pred.back(), truth.back()});
    }
    auto r = compute_metrics(m);
    auto micro = oracle::naive_micro(to_ints(pred), to_ints(truth));
    auto macro = oracle::naive_macro(to_ints(pred), to_ints(truth), kNumToxins);
    CHECK(r.micro.precision == doctest::Approx(micro.precision).epsilon(1e-12));
    CHECK(r.micro.recall == doctest::Approx(micro.recall).epsilon(1e-12));
    CHECK(r.micro.f1 == doctest::Approx(micro.f1).epsilon(1e-12));
    CHECK(r.macro.precision == doctest::Approx(macro.precision).epsilon(1e-12));
    CHECK(r.macro.recall == doctest::Approx(macro.recall).epsilon(1e-12));
    CHECK(r.macro.f1 == doctest::Approx(macro.f1).epsilon(1e-12));
  }
}

TEST_CASE("perfect prediction over all classes") {
  PredictionMatrix m;
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    LabelVector v;
    v.set(k);
    m.rows.push_back({"c" + std::to_string(k), v, v});
  }
  auto r = compute_metrics(m);
  CHECK(r.micro.f1 == 1.0);
  CHECK(r.macro.f1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.macro.precision == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("all-negative predictions give zero recall") {
  std::mt19937_64 rng(1);
  PredictionMatrix m;
  for (int i = 0; i < 30; ++i) m.rows.push_back({"c" + std::to_string(i), LabelVector{}, fixtures::random_labels(rng)});
  auto r = compute_metrics(m);
  CHECK(r.micro.recall == 0.0);
  CHECK(r.micro.precision == 0.0);
  CHECK(r.micro.f1 == 0.0);
}

TEST_CASE("classes without positives or predictions count as zero in the macro average") {
  PredictionMatrix m;
  auto v = LabelVector::from_set({Toxin::opiates});
  m.rows.push_back({"a", v, v});
  auto r = compute_metrics(m);
  CHECK(r.micro.f1 == 1.0);
  CHECK(r.macro.f1 == doctest::Approx(1.0 / 14.0));
}

TEST_CASE("metric input errors") {
  CHECK_THROWS_AS(compute_metrics(PredictionMatrix{}), EmptyInputError);
  PredictionMatrix dup;
  dup.rows.push_back({"a", LabelVector{}, LabelVector{}});
  dup.rows.push_back({"a", LabelVector{}, LabelVector{}});
  CHECK_THROWS_AS(compute_metrics(dup), MismatchError);
}

TEST_CASE("case comparison grid") {
  auto truth = LabelVector::from_set({Toxin::opiates, Toxin::thc});
  PredictionMatrix a, b;
  a.rows.push_back({"x", truth, truth});
  b.rows.push_back({"x", LabelVector::from_set({Toxin::opiates, Toxin::cocaine}), truth});
  auto c = case_comparison(a, b);
  CHECK(c.grid.size() == kNumToxins);
  CHECK(c.summary.cases == 1);
  CHECK(c.summary.perfect_a == 1);
  CHECK(c.summary.perfect_b == 0);
  CHECK(c.summary.found_by_a_missed_by_b == 1);
  CHECK(c.summary.found_by_b_missed_by_a == 0);
  CHECK(c.summary.false_alarm_b_only == 1);
  CHECK(c.summary.outcome_counts[static_cast<int>(Outcome::only_a_correct)] == 2);
  CHECK(c.summary.outcome_counts[static_cast<int>(Outcome::both_correct)] == 12);

  PredictionMatrix other;
  other.rows.push_back({"y", truth, truth});
  CHECK_THROWS_AS(case_comparison(a, other), MismatchError);
  PredictionMatrix wrong_truth;
  wrong_truth.rows.push_back({"x", truth, LabelVector{}});
  CHECK_THROWS_AS(case_comparison(a, wrong_truth), MismatchError);
}
