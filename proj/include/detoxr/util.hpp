#ifndef DETOXR_UTIL_HPP
#define DETOXR_UTIL_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace detoxr {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);

// Shortest round-trippable-ish rendering: integers without a decimal point,
// everything else with up to 6 significant digits.
std::string format_number(double x);

std::uint64_t fnv1a64(std::string_view data) noexcept;
std::string hex64(std::uint64_t value);

// SplitMix64 step; used to derive independent per-item seeds from a run seed.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept;

// Lowercase alphanumeric word tokens.
std::vector<std::string> word_tokens(std::string_view text);

// Largest prefix length <= max_bytes that does not split a UTF-8 sequence.
std::size_t utf8_prefix_length(std::string_view s, std::size_t max_bytes) noexcept;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

std::string utc_timestamp();

}  // namespace detoxr

#endif  // DETOXR_UTIL_HPP
