#include "detoxr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "detoxr/errors.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

using json = nlohmann::json;

namespace {

using S = Symptom;
using T = Toxin;

// Additive shifts applied to the vitals of a positive case, in schema order:
// heart rate, systolic, diastolic, respiratory rate, SpO2, temperature, GCS.
constexpr std::array<std::array<double, 7>, kNumToxins> kVitalShift{{
    {-12, -10, -6, -6, -6, -0.3, -4},   // opiates
    {-8, -8, -4, -4, -4, -0.2, -3},     // methadone
    {-6, -6, -3, -3, -3, -0.1, -2},     // buprenorphine
    {-10, -10, -5, -5, -5, -0.2, -3},   // fentanyl / tramadol
    {-4, -8, -5, -3, -2, -0.2, -3},     // benzodiazepines
    {-15, -10, -6, -4, -4, -0.5, -6},   // GBL / GHB
    {12, 4, 2, 1, 0, 0.0, 0},           // THC
    {28, 28, 14, 4, 0, 0.7, 0},         // cocaine
    {24, 20, 10, 4, 0, 0.8, 0},         // NPS / cathinones
    {18, 10, 5, 2, 0, 0.3, -1},         // synthetic cannabinoids
    {14, 14, 8, 0, 0, 0.0, -1},         // ketamine
    {2, -4, -2, -1, -1, 0.0, -2},       // pregabalin
    {26, 22, 12, 4, 0, 1.0, 0},         // amphetamines / MDMA
    {14, 10, 5, 2, 0, 0.4, 0},          // LSD
}};

constexpr std::array<double, 7> kVitalBase{80, 128, 78, 16, 97, 36.8, 15};
constexpr std::array<double, 7> kVitalJitter{10, 12, 8, 2, 1.5, 0.3, 0.5};

std::array<std::string_view, 8> kFiller{
    "Brought in by ambulance after a bystander called emergency services.",
    "Found at home by a relative.",
    "Presented to the emergency department accompanied by friends.",
    "Picked up by police in a public place.",
    "Self-presented with a friend.",
    "Known to local services.",
    "No reliable third-party account available.",
    "Arrived in the early hours of the morning.",
};

struct SymptomPhrase {
  std::string_view present;
  std::string_view absent;
};

constexpr std::array<SymptomPhrase, kSymptomFields.size()> kSymptomPhrases{{
    {"Vomited twice in the department.", "No vomiting."},
    {"Witnessed generalised seizure.", "No seizure activity."},
    {"Marked psychomotor agitation.", ""},
    {"Responding to visual hallucinations.", ""},
    {"Pupils miotic.", ""},
    {"Pupils dilated.", ""},
    {"Shallow breathing, bradypnoea.", ""},
    {"Fine tremor of the hands.", ""},
    {"Diaphoretic.", ""},
    {"Drowsy but rousable.", "Alert."},
    {"Complains of chest pain.", ""},
    {"Horizontal nystagmus.", ""},
}};

bool is_opioid(std::size_t k) {
  return k == index_of(T::opiates) || k == index_of(T::methadone) || k == index_of(T::buprenorphine) ||
         k == index_of(T::fentanyl_tramadol);
}

double round_to(double x, double step) { return std::round(x / step) * step; }

Eigen::MatrixXd correlation_matrix(const SynthConfig& config) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(kNumToxins, kNumToxins);
  for (const auto& b : config.co_occurrence) {
    auto i = static_cast<Eigen::Index>(index_of(b.a));
    auto j = static_cast<Eigen::Index>(index_of(b.b));
    c(i, j) = b.correlation;
    c(j, i) = b.correlation;
  }
  return c;
}

// Exact quota labels: class k is positive for the round(p_k * n) cases with
// the highest latent score.
std::vector<LabelVector> sample_labels(const SynthConfig& config) {
  const std::size_t n = config.n_cases;
  Eigen::LLT<Eigen::MatrixXd> llt(correlation_matrix(config));
  if (llt.info() != Eigen::Success) throw ConfigError("co_occurrence correlations are not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();

  std::mt19937_64 rng(derive_seed(config.seed, 0x1abe1));
  std::normal_distribution<double> normal;
  Eigen::MatrixXd latent(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kNumToxins));
  for (Eigen::Index i = 0; i < latent.rows(); ++i) {
    Eigen::VectorXd e(static_cast<Eigen::Index>(kNumToxins));
    for (auto& v : e) v = normal(rng);
    latent.row(i) = (lower * e).transpose();
  }

  std::vector<LabelVector> labels(n);
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    auto quota = static_cast<std::size_t>(std::llround(config.prevalences[k] * static_cast<double>(n)));
    std::iota(order.begin(), order.end(), 0);
    auto col = static_cast<Eigen::Index>(k);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return latent(static_cast<Eigen::Index>(a), col) > latent(static_cast<Eigen::Index>(b), col);
    });
    for (std::size_t r = 0; r < quota && r < n; ++r) labels[order[r]].set(toxin_at(k), true);
  }
  return labels;
}

std::string join_sentences(const std::vector<std::string_view>& parts) {
  std::string out;
  for (auto p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

Case render_case(std::size_t index, const LabelVector& labels, const SynthConfig& config) {
  std::mt19937_64 rng(derive_seed(config.seed, 0xca5e, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  auto chance = [&](double p) { return p > 0.0 && unit(rng) < p; };
  const auto& signatures = toxin_signatures();

  Case c;
  char id[32];
  std::snprintf(id, sizeof id, "case-%05zu", index + 1);
  c.case_id = id;
  c.labels = labels;

  auto& s = c.structured;
  double age = std::clamp(std::round(18.0 + 50.0 * unit(rng)), 14.0, 95.0);
  if (!chance(config.missing_rate)) s.age = age;
  double sex_draw = unit(rng);
  s.sex = sex_draw < 0.62 ? Sex::male : sex_draw < 0.98 ? Sex::female : Sex::other;

  std::array<double, 7> vit = kVitalBase;
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    if (!labels[toxin_at(k)]) continue;
    for (std::size_t v = 0; v < vit.size(); ++v) vit[v] += kVitalShift[k][v];
  }
  for (std::size_t v = 0; v < vit.size(); ++v) {
    double value = vit[v] + kVitalJitter[v] * normal(rng);
    value = std::clamp(value, kVitalFields[v].min, kVitalFields[v].max);
    if (v == static_cast<std::size_t>(Vital::respiratory_rate)) value = std::max(value, 4.0);
    if (v == static_cast<std::size_t>(Vital::spo2)) value = std::min(value, 100.0);
    value = v == static_cast<std::size_t>(Vital::temperature) ? round_to(value, 0.1) : std::round(value);
    if (!chance(config.missing_rate)) s.vitals[v] = value;
  }
  double gcs = std::clamp(std::round(vit[static_cast<std::size_t>(Vital::gcs)]), 3.0, 15.0);

  std::array<bool, kSymptomFields.size()> symptoms{};
  bool any_opioid = false;
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    if (!labels[toxin_at(k)]) continue;
    any_opioid = any_opioid || is_opioid(k);
    for (Symptom sym : signatures[k].symptoms) {
      if (!chance(config.noise_rate)) symptoms[static_cast<std::size_t>(sym)] = true;
    }
  }
  for (auto& present : symptoms) {
    if (chance(0.1 * config.noise_rate)) present = true;
  }
  for (std::size_t i = 0; i < symptoms.size(); ++i) s.symptoms[i] = symptoms[i];

  bool suicidal_class = labels[T::benzodiazepines_z_substances] || labels[T::pregabalin];
  s.indicator(Indicator::coma_on_admission) = gcs <= 8.0;
  s.indicator(Indicator::preclinical_intubation) = gcs <= 6.0 && chance(0.5);
  s.indicator(Indicator::preclinical_resuscitation) = chance(0.02);
  s.indicator(Indicator::naloxone_administered) = any_opioid && gcs <= 12.0 && chance(0.6);
  s.indicator(Indicator::suicidal_intent) = chance(suicidal_class ? 0.3 : 0.05);

  // History narrative: filler plus one clue per positive class.
  std::vector<std::string_view> history{kFiller[static_cast<std::size_t>(unit(rng) * kFiller.size())]};
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    if (labels[toxin_at(k)] && !chance(config.noise_rate)) history.push_back(signatures[k].clue);
  }
  if (chance(0.1 * config.noise_rate)) {
    auto k = static_cast<std::size_t>(unit(rng) * kNumToxins);
    if (!labels[toxin_at(k)]) history.push_back(signatures[k].clue);
  }
  if (chance(0.5)) history.push_back(kFiller[static_cast<std::size_t>(unit(rng) * kFiller.size())]);
  c.texts.history_text = join_sentences(history);

  std::vector<std::string_view> exam;
  for (std::size_t i = 0; i < symptoms.size(); ++i) {
    exam.push_back(symptoms[i] ? kSymptomPhrases[i].present : kSymptomPhrases[i].absent);
  }
  std::string gcs_sentence = "GCS " + format_number(gcs) + " on assessment.";
  exam.push_back(gcs_sentence);
  c.texts.physical_exam = join_sentences(exam);

  double hr = vit[static_cast<std::size_t>(Vital::heart_rate)];
  std::string ecg = hr > 100.0 ? "Sinus tachycardia." : hr < 60.0 ? "Sinus bradycardia." : "Normal sinus rhythm.";
  if (labels[T::methadone] && !chance(config.noise_rate)) ecg += " QTc prolonged.";
  if (!chance(config.missing_rate)) c.texts.ecg_findings = ecg;

  // Reported history: true classes minus omissions, plus rare spurious ones.
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    if (labels[toxin_at(k)] && !chance(config.history_omission_rate)) {
      c.substance_history.emplace_back(key_of(toxin_at(k)));
    }
  }
  if (chance(config.history_commission_rate)) {
    std::vector<std::size_t> negatives;
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      if (!labels[toxin_at(k)]) negatives.push_back(k);
    }
    if (!negatives.empty()) {
      auto k = negatives[static_cast<std::size_t>(unit(rng) * negatives.size()) % negatives.size()];
      c.substance_history.emplace_back(key_of(toxin_at(k)));
    }
  }
  return c;
}

}  // namespace

std::vector<CoOccurrenceBoost> default_co_occurrence() {
  return {
      {T::opiates, T::methadone, 0.35},
      {T::opiates, T::buprenorphine, 0.15},
      {T::opiates, T::benzodiazepines_z_substances, 0.25},
      {T::opiates, T::pregabalin, 0.2},
      {T::methadone, T::benzodiazepines_z_substances, 0.25},
      {T::benzodiazepines_z_substances, T::pregabalin, 0.25},
      {T::cocaine, T::amphetamines_mdma, 0.2},
      {T::thc, T::amphetamines_mdma, 0.2},
      {T::nps_cathinones, T::amphetamines_mdma, 0.15},
      {T::thc, T::synthetic_cannabinoids, 0.1},
  };
}

std::array<double, kNumToxins> default_prevalences() {
  std::array<double, kNumToxins> p{};
  const auto& counts = class_prevalences();
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    p[k] = static_cast<double>(counts[k]) / static_cast<double>(kPublishedCaseCount);
  }
  return p;
}

const std::array<ToxinSignature, kNumToxins>& toxin_signatures() {
  static const std::array<ToxinSignature, kNumToxins> table{{
      {{S::miosis, S::respiratory_depression, S::drowsiness}, "Injection paraphernalia found, fresh track marks on the forearms."},
      {{S::miosis, S::drowsiness}, "Currently enrolled in an opioid substitution programme."},
      {{S::miosis}, "Sublingual film wrappers found in a jacket pocket."},
      {{S::miosis, S::respiratory_depression}, "Transdermal patch found stuck to the shoulder."},
      {{S::drowsiness}, "Empty blister packs of sleeping tablets beside the bed."},
      {{S::drowsiness, S::vomiting}, "Sudden collapse at a party after drinking clear liquid from a small vial."},
      {{S::tremor}, "Strong smell of cannabis smoke on clothing, reddened conjunctivae."},
      {{S::chest_pain, S::agitation, S::mydriasis}, "White powder residue around the nostrils."},
      {{S::agitation, S::sweating}, "Ordered research chemicals online from a vendor."},
      {{S::agitation, S::seizures}, "Smoked a herbal blend bought in a headshop."},
      {{S::nystagmus}, "Described feeling detached from the body, dissociative episode."},
      {{S::drowsiness}, "Took neuropathic pain capsules well above the prescribed dose."},
      {{S::mydriasis, S::sweating, S::agitation}, "Swallowed pills at a rave, bruxism and jaw clenching."},
      {{S::hallucinations, S::mydriasis}, "Licked blotter tabs, reports vivid visual distortions."},
  }};
  return table;
}

void SynthConfig::validate() const {
  if (n_cases == 0) throw ConfigError("n_cases must be positive");
  auto check_rate = [](double r, const char* name) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  check_rate(history_omission_rate, "history_omission_rate");
  check_rate(history_commission_rate, "history_commission_rate");
  check_rate(noise_rate, "noise_rate");
  check_rate(missing_rate, "missing_rate");
  for (double p : prevalences) check_rate(p, "prevalence");
  for (const auto& b : co_occurrence) {
    if (!(b.correlation > -1.0 && b.correlation < 1.0)) throw ConfigError("co_occurrence correlation must lie in (-1, 1)");
    if (b.a == b.b) throw ConfigError("co_occurrence pair must name two different classes");
  }
}

json SynthConfig::to_json() const {
  json prev = json::object();
  for (std::size_t k = 0; k < kNumToxins; ++k) prev[std::string(key_of(toxin_at(k)))] = prevalences[k];
  json pairs = json::array();
  for (const auto& b : co_occurrence) {
    pairs.push_back({{"a", key_of(b.a)}, {"b", key_of(b.b)}, {"correlation", b.correlation}});
  }
  return {{"n_cases", n_cases},
          {"seed", seed},
          {"prevalences", prev},
          {"co_occurrence", pairs},
          {"history_omission_rate", history_omission_rate},
          {"history_commission_rate", history_commission_rate},
          {"noise_rate", noise_rate},
          {"missing_rate", missing_rate}};
}

DatasetManifest generate_synthetic(const SynthConfig& config) {
  config.validate();
  auto labels = sample_labels(config);
  DatasetManifest manifest;
  manifest.cases.reserve(config.n_cases);
  for (std::size_t i = 0; i < config.n_cases; ++i) manifest.cases.push_back(render_case(i, labels[i], config));
  return manifest;
}

}  // namespace detoxr
