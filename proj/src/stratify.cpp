#include "detoxr/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "detoxr/errors.hpp"

namespace detoxr {

namespace {

constexpr double kTieTolerance = 1e-9;

// Index of the maximal key among eligible splits; exact ties broken by the
// secondary key, then uniformly at random.
template <typename Primary, typename Secondary>
int pick_split(const std::array<long, 3>& capacity, Primary primary, Secondary secondary,
               std::mt19937_64& rng) {
  std::array<int, 3> best{};
  int n_best = 0;
  for (int j = 0; j < 3; ++j) {
    if (capacity[j] <= 0) continue;
    if (n_best == 0) {
      best[n_best++] = j;
      continue;
    }
    int b = best[0];
    double dp = primary(j) - primary(b);
    if (dp > kTieTolerance) {
      n_best = 0;
      best[n_best++] = j;
    } else if (dp >= -kTieTolerance) {
      double ds = secondary(j) - secondary(b);
      if (ds > kTieTolerance) {
        n_best = 0;
        best[n_best++] = j;
      } else if (ds >= -kTieTolerance) {
        best[n_best++] = j;
      }
    }
  }
  if (n_best == 0) throw Error("no split has remaining capacity");
  if (n_best == 1) return best[0];
  std::uniform_int_distribution<int> pick(0, n_best - 1);
  return best[pick(rng)];
}

}  // namespace

void validate_split_spec(const SplitSpec& spec) {
  double sum = 0.0;
  for (double r : spec.ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

std::array<long, 3> split_capacities(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<long, 3> cap{};
  std::array<double, 3> rem{};
  long assigned = 0;
  for (int j = 0; j < 3; ++j) {
    double exact = static_cast<double>(n) * ratios[j];
    // Guard against 4.999999 style representation error.
    double fl = std::floor(exact + 1e-9);
    cap[j] = static_cast<long>(fl);
    rem[j] = std::max(0.0, exact - fl);
    assigned += cap[j];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (std::abs(rem[a] - rem[b]) > 1e-12) return rem[a] > rem[b];
    return ratios[a] > ratios[b];
  });
  for (long left = static_cast<long>(n) - assigned, i = 0; left > 0; --left, ++i) ++cap[order[i % 3]];
  return cap;
}

SplitAssignment iterative_stratify(const DatasetManifest& dataset, const SplitSpec& spec) {
  validate_split_spec(spec);
  const auto& cases = dataset.cases;
  if (cases.empty()) throw EmptyInputError("dataset is empty");
  for (const auto& c : cases) {
    if (!c.labels) throw MissingLabelsError(c.case_id);
  }

  const std::size_t n = cases.size();
  std::array<long, 3> capacity = split_capacities(n, spec.ratios);

  std::array<long, kNumToxins> remaining{};
  for (const auto& c : cases) {
    for (std::size_t k = 0; k < kNumToxins; ++k) remaining[k] += c.labels->test(k);
  }
  std::array<std::array<double, 3>, kNumToxins> desired{};
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    for (int j = 0; j < 3; ++j) desired[k][j] = static_cast<double>(remaining[k]) * spec.ratios[j];
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> split_of(n, -1);
  auto assign = [&](std::size_t i, int j) {
    split_of[i] = j;
    --capacity[j];
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      if (cases[i].labels->test(k)) {
        desired[k][j] -= 1.0;
        --remaining[k];
      }
    }
  };

  while (true) {
    std::size_t label = kNumToxins;
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      if (remaining[k] > 0 && (label == kNumToxins || remaining[k] < remaining[label])) label = k;
    }
    if (label == kNumToxins) break;
    for (std::size_t i : order) {
      if (split_of[i] >= 0 || !cases[i].labels->test(label)) continue;
      int j = pick_split(
          capacity, [&](int s) { return desired[label][s]; },
          [&](int s) { return static_cast<double>(capacity[s]); }, rng);
      assign(i, j);
    }
  }

  for (std::size_t i : order) {
    if (split_of[i] >= 0) continue;
    int j = pick_split(
        capacity, [&](int s) { return static_cast<double>(capacity[s]); }, [](int) { return 0.0; }, rng);
    assign(i, j);
  }

  SplitAssignment out;
  for (std::size_t i = 0; i < n; ++i) out.emplace(cases[i].case_id, static_cast<Split>(split_of[i]));
  return out;
}

StratificationReport stratification_report(const DatasetManifest& dataset, const SplitAssignment& assignment,
                                           const SplitSpec& spec, long min_pair_count) {
  StratificationReport r;
  r.target_sizes = split_capacities(dataset.cases.size(), spec.ratios);
  std::array<std::array<std::array<long, 3>, kNumToxins>, kNumToxins> pairs{};
  for (const auto& c : dataset.cases) {
    auto it = assignment.find(c.case_id);
    if (it == assignment.end()) throw CoverageError("case '" + c.case_id + "' is not assigned");
    int j = static_cast<int>(it->second);
    ++r.sizes[j];
    if (!c.labels) continue;
    for (std::size_t a = 0; a < kNumToxins; ++a) {
      if (!c.labels->test(a)) continue;
      ++r.positives[a][j];
      for (std::size_t b = a + 1; b < kNumToxins; ++b) {
        if (c.labels->test(b)) ++pairs[a][b][j];
      }
    }
  }
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    long total = r.positives[k][0] + r.positives[k][1] + r.positives[k][2];
    if (total == 0) continue;
    for (int j = 0; j < 3; ++j) {
      double dev = std::abs(static_cast<double>(r.positives[k][j]) / total - spec.ratios[j]);
      r.max_fraction_deviation[k] = std::max(r.max_fraction_deviation[k], dev);
    }
  }
  for (std::size_t a = 0; a < kNumToxins; ++a) {
    for (std::size_t b = a + 1; b < kNumToxins; ++b) {
      long total = pairs[a][b][0] + pairs[a][b][1] + pairs[a][b][2];
      if (total < min_pair_count) continue;
      ++r.pairs_considered;
      for (int j = 0; j < 3; ++j) {
        double dev = std::abs(static_cast<double>(pairs[a][b][j]) / total - spec.ratios[j]);
        r.max_pair_fraction_deviation = std::max(r.max_pair_fraction_deviation, dev);
      }
    }
  }
  return r;
}

}  // namespace detoxr
