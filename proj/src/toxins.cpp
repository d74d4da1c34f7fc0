#include "detoxr/toxins.hpp"

namespace detoxr {

std::optional<Toxin> toxin_from_key(std::string_view key) noexcept {
  for (std::size_t i = 0; i < kNumToxins; ++i) {
    if (kToxinClasses[i].key == key) return toxin_at(i);
  }
  return std::nullopt;
}

const std::array<int, kNumToxins>& class_prevalences() noexcept { return kPublishedPrevalences; }

LabelVector LabelVector::from_set(std::span<const Toxin> positives) {
  LabelVector v;
  for (Toxin t : positives) v.set(t);
  return v;
}

std::vector<Toxin> LabelVector::to_set() const {
  std::vector<Toxin> out;
  for (std::size_t i = 0; i < kNumToxins; ++i) {
    if (bits_[i]) out.push_back(toxin_at(i));
  }
  return out;
}

}  // namespace detoxr
