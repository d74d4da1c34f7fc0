#ifndef DETOXR_TEST_FIXTURES_HPP
#define DETOXR_TEST_FIXTURES_HPP

#include <filesystem>
#include <random>
#include <string>

#include "detoxr/case.hpp"

namespace fixtures {

// A fully populated, labelled case.
detoxr::Case sample_case();

// Fresh empty directory under the test working directory.
std::filesystem::path scratch_dir(const std::string& name);

detoxr::LabelVector random_labels(std::mt19937_64& rng, double p = 0.3);

// Random valid case (labels absent) for fuzzing.
detoxr::Case random_case(std::mt19937_64& rng, const std::string& id);

}  // namespace fixtures

#endif  // DETOXR_TEST_FIXTURES_HPP
