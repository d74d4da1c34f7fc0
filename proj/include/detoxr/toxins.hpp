#ifndef DETOXR_TOXINS_HPP
#define DETOXR_TOXINS_HPP

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace detoxr {

inline constexpr std::size_t kNumToxins = 14;

// Canonical label order. Indices are part of the dataset format.
enum class Toxin : std::uint8_t {
  opiates,
  methadone,
  buprenorphine,
  fentanyl_tramadol,
  benzodiazepines_z_substances,
  gbl_ghb,
  thc,
  cocaine,
  nps_cathinones,
  synthetic_cannabinoids,
  ketamine,
  pregabalin,
  amphetamines_mdma,
  lsd,
};

struct ToxinClass {
  std::string_view key;
  std::string_view display_name;
};

inline constexpr std::array<ToxinClass, kNumToxins> kToxinClasses{{
    {"opiates", "Opiates"},
    {"methadone", "Methadone"},
    {"buprenorphine", "Buprenorphine"},
    {"fentanyl_tramadol", "Fentanyl/Tramadol"},
    {"benzodiazepines_z_substances", "Benzodiazepines/Z-substances"},
    {"gbl_ghb", "GBL/GHB"},
    {"thc", "THC"},
    {"cocaine", "Cocaine"},
    {"nps_cathinones", "NPS/Cathinones"},
    {"synthetic_cannabinoids", "Synthetic cannabinoids"},
    {"ketamine", "Ketamine"},
    {"pregabalin", "Pregabalin"},
    {"amphetamines_mdma", "Amphetamines/MDMA"},
    {"lsd", "LSD"},
}};

constexpr std::size_t index_of(Toxin t) noexcept { return static_cast<std::size_t>(t); }
constexpr Toxin toxin_at(std::size_t i) noexcept { return static_cast<Toxin>(i); }
constexpr std::string_view key_of(Toxin t) noexcept { return kToxinClasses[index_of(t)].key; }
constexpr std::string_view display_name_of(Toxin t) noexcept {
  return kToxinClasses[index_of(t)].display_name;
}

std::optional<Toxin> toxin_from_key(std::string_view key) noexcept;

// Published per-class positive counts of the 870-case cohort, canonical order.
inline constexpr std::size_t kPublishedCaseCount = 870;
inline constexpr std::array<int, kNumToxins> kPublishedPrevalences{
    251, 193, 157, 67, 465, 32, 329, 146, 70, 53, 4, 384, 187, 9};

const std::array<int, kNumToxins>& class_prevalences() noexcept;

// Binary target vector over the 14 classes.
class LabelVector {
 public:
  LabelVector() = default;
  explicit LabelVector(std::bitset<kNumToxins> bits) : bits_(bits) {}

  static LabelVector from_set(std::span<const Toxin> positives);
  static LabelVector from_set(std::initializer_list<Toxin> positives) {
    return from_set(std::span<const Toxin>(positives.begin(), positives.size()));
  }

  std::vector<Toxin> to_set() const;

  bool operator[](Toxin t) const { return bits_[index_of(t)]; }
  bool test(std::size_t i) const { return bits_[i]; }
  void set(Toxin t, bool value = true) { bits_[index_of(t)] = value; }
  void set(std::size_t i, bool value = true) { bits_[i] = value; }

  std::size_t count() const { return bits_.count(); }
  bool none() const { return bits_.none(); }
  std::bitset<kNumToxins> bits() const { return bits_; }

  bool operator==(const LabelVector&) const = default;

 private:
  std::bitset<kNumToxins> bits_;
};

inline LabelVector label_vector_from_set(std::span<const Toxin> positives) {
  return LabelVector::from_set(positives);
}

}  // namespace detoxr

#endif  // DETOXR_TOXINS_HPP
