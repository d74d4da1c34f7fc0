#ifndef DETOXR_SYNTH_HPP
#define DETOXR_SYNTH_HPP

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "detoxr/case.hpp"

namespace detoxr {

struct CoOccurrenceBoost {
  Toxin a;
  Toxin b;
  double correlation;  // latent Gaussian correlation, in (-1, 1)
};

// Default pairs: opioid substitution overlaps, sedative stacking and
// stimulant mixing.
std::vector<CoOccurrenceBoost> default_co_occurrence();

// Published class counts divided by the published case count.
std::array<double, kNumToxins> default_prevalences();

struct SynthConfig {
  std::size_t n_cases = 870;
  std::uint64_t seed = 0;
  std::array<double, kNumToxins> prevalences = default_prevalences();
  std::vector<CoOccurrenceBoost> co_occurrence = default_co_occurrence();
  double history_omission_rate = 0.3;
  double history_commission_rate = 0.05;
  // Probability that a signature symptom or text clue of a positive class
  // is dropped, and (scaled down) that a decoy clue shows up. At 0 every
  // label is a deterministic function of the rendered case.
  double noise_rate = 0.15;
  // Probability that an individual vital sign or the age is not recorded.
  double missing_rate = 0.05;

  void validate() const;
  nlohmann::json to_json() const;
};

// Signature used by the generator. The clue phrase of every class contains
// at least one word that no other class's clue phrase uses.
struct ToxinSignature {
  std::vector<Symptom> symptoms;
  std::string_view clue;
};
const std::array<ToxinSignature, kNumToxins>& toxin_signatures();

// Samples labels with exact per-class quotas (round(p * n) positives, the
// positives being the cases with the highest latent Gaussian scores), then
// renders structured variables, free texts and a noisy substance history
// made of canonical class keys.
DatasetManifest generate_synthetic(const SynthConfig& config);

}  // namespace detoxr

#endif  // DETOXR_SYNTH_HPP
