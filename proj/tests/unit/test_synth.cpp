#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "detoxr/baselines.hpp"
#include "detoxr/errors.hpp"
#include "detoxr/record.hpp"
#include "detoxr/synth.hpp"

using namespace detoxr;

namespace {

std::set<std::string> words(std::string_view text) {
  std::set<std::string> out;
  std::string w;
  for (char ch : text) {
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      w += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!w.empty()) {
      out.insert(w);
      w.clear();
    }
  }
  if (!w.empty()) out.insert(w);
  return out;
}

}  // namespace

TEST_CASE("generated prevalences match the configuration") {
  SynthConfig sc;
  sc.seed = 1;
  auto ds = generate_synthetic(sc);
  REQUIRE(ds.cases.size() == 870);
  CHECK_NOTHROW(validate_manifest(ds));
  const auto& published = class_prevalences();
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    long positives = 0;
    for (const auto& c : ds.cases) positives += c.labels->test(k) ? 1 : 0;
    CHECK(std::abs(static_cast<double>(positives) / 870.0 - sc.prevalences[k]) <= 0.03);
    CHECK(std::abs(positives - static_cast<long>(published[k])) <= 1);
  }
}

TEST_CASE("generation is deterministic per seed") {
  SynthConfig sc;
  sc.n_cases = 50;
  sc.seed = 3;
  auto a = generate_synthetic(sc);
  auto b = generate_synthetic(sc);
  CHECK(a.cases == b.cases);
  sc.seed = 4;
  CHECK(generate_synthetic(sc).cases != a.cases);
}

TEST_CASE("history omission extremes") {
  SynthConfig sc;
  sc.n_cases = 300;
  sc.history_commission_rate = 0.0;

  sc.history_omission_rate = 0.0;
  for (const auto& c : generate_synthetic(sc).cases) CHECK(history_baseline(c).labels == *c.labels);

  sc.history_omission_rate = 1.0;
  for (const auto& c : generate_synthetic(sc).cases) CHECK(c.substance_history.empty());
}

TEST_CASE("every clue phrase has an exclusive word") {
  const auto& sigs = toxin_signatures();
  for (std::size_t k = 0; k < kNumToxins; ++k) {
    std::set<std::string> others;
    for (std::size_t j = 0; j < kNumToxins; ++j) {
      if (j == k) continue;
      auto w = words(sigs[j].clue);
      others.insert(w.begin(), w.end());
    }
    bool exclusive = false;
    for (const auto& w : words(sigs[k].clue)) exclusive = exclusive || others.count(w) == 0;
    CHECK_MESSAGE(exclusive, kToxinClasses[k].key);
  }
}

TEST_CASE("noiseless cases carry every clue of their classes") {
  SynthConfig sc;
  sc.n_cases = 100;
  sc.noise_rate = 0.0;
  for (const auto& c : generate_synthetic(sc).cases) {
    std::string all = c.texts.history_text.value_or("") + " " + c.texts.physical_exam.value_or("");
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      bool present = all.find(std::string(toxin_signatures()[k].clue)) != std::string::npos;
      CHECK(present == c.labels->test(k));
    }
  }
}

TEST_CASE("invalid generator settings") {
  SynthConfig sc;
  sc.history_omission_rate = 1.5;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = SynthConfig{};
  sc.prevalences[0] = -0.1;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
}
