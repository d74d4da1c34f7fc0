#include "fixtures.hpp"

#include <atomic>

#include "detoxr/toxins.hpp"

namespace fixtures {

using namespace detoxr;

Case sample_case() {
  Case c;
  c.case_id = "case-sample";
  auto& s = c.structured;
  s.age = 34;
  s.sex = Sex::female;
  s.vital(Vital::heart_rate) = 58;
  s.vital(Vital::systolic_bp) = 102;
  s.vital(Vital::diastolic_bp) = 64;
  s.vital(Vital::respiratory_rate) = 7;
  s.vital(Vital::spo2) = 88;
  s.vital(Vital::temperature) = 36.2;
  s.vital(Vital::gcs) = 9;
  for (auto& f : s.indicators) f = false;
  s.indicator(Indicator::naloxone_administered) = true;
  for (auto& f : s.symptoms) f = false;
  s.symptom(Symptom::miosis) = true;
  s.symptom(Symptom::respiratory_depression) = true;
  s.symptom(Symptom::drowsiness) = true;
  c.texts.history_text = "Found unresponsive at a friend's flat. Injection paraphernalia nearby.";
  c.texts.physical_exam = "Pinpoint pupils, shallow breathing, responds to pain only.";
  c.texts.ecg_findings = "Sinus bradycardia.";
  c.substance_history = {"heroin", "diazepam"};
  c.labels = LabelVector::from_set({Toxin::opiates, Toxin::benzodiazepines_z_substances, Toxin::pregabalin});
  return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::current_path() / "scratch" / (name + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

LabelVector random_labels(std::mt19937_64& rng, double p) {
  std::bernoulli_distribution coin(p);
  LabelVector v;
  for (std::size_t k = 0; k < kNumToxins; ++k) v.set(k, coin(rng));
  return v;
}

Case random_case(std::mt19937_64& rng, const std::string& id) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto maybe = [&](double p) { return unit(rng) < p; };
  Case c;
  c.case_id = id;
  auto& s = c.structured;
  if (maybe(0.9)) s.age = std::round(unit(rng) * 100.0);
  if (maybe(0.9)) s.sex = static_cast<Sex>(static_cast<int>(unit(rng) * 3.0) % 3);
  for (std::size_t v = 0; v < kVitalFields.size(); ++v) {
    if (!maybe(0.8)) continue;
    const auto& f = kVitalFields[v];
    double x = f.min + unit(rng) * (f.max - f.min);
    s.vitals[v] = v == static_cast<std::size_t>(Vital::temperature) ? std::round(x * 10.0) / 10.0 : std::round(x);
  }
  for (auto& flag : s.indicators) {
    if (maybe(0.8)) flag = maybe(0.3);
  }
  for (auto& flag : s.symptoms) {
    if (maybe(0.8)) flag = maybe(0.3);
  }
  static const char* words[] = {"patient", "found", "collapsed", "pupils", "tachycardic", "agitated",
                                "vomiting", "party", "ambulance", "naloxone", "überdosis", "ß"};
  auto sentence = [&] {
    std::string out;
    int n = 1 + static_cast<int>(unit(rng) * 30);
    for (int i = 0; i < n; ++i) {
      if (i) out += ' ';
      out += words[static_cast<std::size_t>(unit(rng) * 12) % 12];
    }
    return out;
  };
  if (maybe(0.8)) c.texts.history_text = sentence();
  if (maybe(0.8)) c.texts.physical_exam = sentence();
  if (maybe(0.5)) c.texts.ecg_findings = sentence();
  static const char* substances[] = {"heroin", "cocaine", "lyrica", "unknown pills", "speed", "ghb", "thc"};
  int h = static_cast<int>(unit(rng) * 4);
  for (int i = 0; i < h; ++i) c.substance_history.emplace_back(substances[static_cast<std::size_t>(unit(rng) * 7) % 7]);
  return c;
}

}  // namespace fixtures
