#include "detoxr/metrics.hpp"

#include <map>
#include <set>

#include "detoxr/errors.hpp"

namespace detoxr {

namespace {

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / den : 0.0; }

}  // namespace

MetricsReport compute_metrics(const PredictionMatrix& matrix) {
  if (matrix.rows.empty()) throw EmptyInputError("prediction matrix is empty");
  std::set<std::string_view> ids;
  MetricsReport r;
  for (const auto& row : matrix.rows) {
    if (!ids.insert(row.case_id).second) {
      throw MismatchError("duplicate case_id '" + row.case_id + "' in prediction matrix");
    }
    auto p = row.predicted.bits();
    auto g = row.truth.bits();
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      auto& c = r.per_class[k];
      c.tp += p[k] && g[k];
      c.fp += p[k] && !g[k];
      c.fn += !p[k] && g[k];
    }
  }

  for (auto& c : r.per_class) {
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.recall = ratio(c.tp, c.tp + c.fn);
    c.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    r.tp += c.tp;
    r.fp += c.fp;
    r.fn += c.fn;
    r.macro.precision += c.precision / kNumToxins;
    r.macro.recall += c.recall / kNumToxins;
    r.macro.f1 += c.f1 / kNumToxins;
  }
  r.micro.precision = ratio(r.tp, r.tp + r.fp);
  r.micro.recall = ratio(r.tp, r.tp + r.fn);
  r.micro.f1 = ratio(2 * r.tp, 2 * r.tp + r.fp + r.fn);
  return r;
}

std::string_view outcome_name(Outcome o) noexcept {
  switch (o) {
    case Outcome::both_correct: return "both_correct";
    case Outcome::only_a_correct: return "only_a_correct";
    case Outcome::only_b_correct: return "only_b_correct";
    case Outcome::both_wrong: return "both_wrong";
  }
  return "both_wrong";
}

CaseComparison case_comparison(const PredictionMatrix& a, const PredictionMatrix& b) {
  std::map<std::string_view, const PredictionRow*> by_id;
  for (const auto& row : b.rows) by_id.emplace(row.case_id, &row);
  if (by_id.size() != b.rows.size() || a.rows.size() != b.rows.size()) {
    throw MismatchError("case sets differ between the two prediction matrices");
  }

  CaseComparison out;
  for (const auto& ra : a.rows) {
    auto it = by_id.find(ra.case_id);
    if (it == by_id.end()) throw MismatchError("case '" + ra.case_id + "' missing from second matrix");
    const PredictionRow& rb = *it->second;
    if (!(ra.truth == rb.truth)) throw MismatchError("truths differ for case '" + ra.case_id + "'");

    auto& s = out.summary;
    ++s.cases;
    s.perfect_a += ra.predicted == ra.truth;
    s.perfect_b += rb.predicted == rb.truth;
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      bool truth = ra.truth.test(k);
      bool pa = ra.predicted.test(k);
      bool pb = rb.predicted.test(k);
      bool ca = pa == truth;
      bool cb = pb == truth;
      Outcome o = ca ? (cb ? Outcome::both_correct : Outcome::only_a_correct)
                     : (cb ? Outcome::only_b_correct : Outcome::both_wrong);
      ++s.outcome_counts[static_cast<std::size_t>(o)];
      if (truth) {
        s.found_by_a_missed_by_b += pa && !pb;
        s.found_by_b_missed_by_a += pb && !pa;
      } else {
        s.false_alarm_a_only += pa && !pb;
        s.false_alarm_b_only += pb && !pa;
      }
      out.grid.push_back({ra.case_id, toxin_at(k), o});
    }
  }
  return out;
}

}  // namespace detoxr
