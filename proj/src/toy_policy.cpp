#include "detoxr/toy_policy.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

#include "detoxr/util.hpp"

namespace detoxr {

using json = nlohmann::json;

namespace {

constexpr std::string_view kToyFormat = "detoxr-toy-policy";
constexpr int kToyFormatVersion = 1;

// (center, scale) for age followed by the vitals in schema order.
constexpr std::array<std::array<double, 2>, 1 + kVitalFields.size()> kNumericNorms{{
    {40.0, 18.0}, {85.0, 25.0}, {125.0, 25.0}, {75.0, 15.0}, {16.0, 6.0}, {95.0, 5.0}, {36.8, 1.0}, {12.0, 4.0}}};

constexpr Eigen::Index kBias = 0;
constexpr Eigen::Index kNumericBase = 1;  // (value, missing) pairs
constexpr Eigen::Index kSexBase = kNumericBase + 2 * static_cast<Eigen::Index>(kNumericNorms.size());
constexpr Eigen::Index kIndicatorBase = kSexBase + 3;
constexpr Eigen::Index kSymptomBase = kIndicatorBase + static_cast<Eigen::Index>(kIndicatorFields.size());
constexpr Eigen::Index kHistoryBase = kSymptomBase + static_cast<Eigen::Index>(kSymptomFields.size());
constexpr Eigen::Index kUnresolved = kHistoryBase + static_cast<Eigen::Index>(kNumToxins);
constexpr Eigen::Index kBowBase = kUnresolved + 1;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Splits "Label: value ..." into (label, first value word).
bool split_line(std::string_view line, std::string_view& label, std::string_view& value) {
  auto colon = line.find(": ");
  if (colon == std::string_view::npos) return false;
  label = line.substr(0, colon);
  value = trim(line.substr(colon + 2));
  auto space = value.find(' ');
  if (space != std::string_view::npos) value = value.substr(0, space);
  return true;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn fn) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    fn(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
}

void set_numeric(Eigen::VectorXd& x, std::size_t slot, std::string_view value) {
  Eigen::Index o = kNumericBase + 2 * static_cast<Eigen::Index>(slot);
  if (value == kMissingValue) {
    x[o + 1] = 1.0;
    return;
  }
  double v = std::strtod(std::string(value).c_str(), nullptr);
  x[o] = std::clamp((v - kNumericNorms[slot][0]) / kNumericNorms[slot][1], -5.0, 5.0);
}

template <std::size_t N>
void set_flags(Eigen::VectorXd& x, Eigen::Index base, const std::array<FlagField, N>& fields,
               std::string_view text) {
  for_each_line(text, [&](std::string_view line) {
    std::string_view label, value;
    if (!split_line(line, label, value)) return;
    for (std::size_t i = 0; i < N; ++i) {
      if (fields[i].label == label) x[base + static_cast<Eigen::Index>(i)] = value == "true" ? 1.0 : 0.0;
    }
  });
}

}  // namespace

PromptFeatureExtractor::PromptFeatureExtractor(const AliasLexicon& lexicon) : lexicon_(&lexicon) {}

std::size_t PromptFeatureExtractor::dimension() const noexcept {
  return static_cast<std::size_t>(kBowBase) + kHashBuckets;
}

Eigen::VectorXd PromptFeatureExtractor::extract(const RenderedPrompt& prompt) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension()));
  x[kBias] = 1.0;
  for (const auto& seg : prompt.segments) {
    if (!seg.section) continue;
    switch (*seg.section) {
      case Section::demographics:
        for_each_line(seg.content, [&](std::string_view line) {
          std::string_view label, value;
          if (!split_line(line, label, value)) return;
          if (label == kAgeField.label) set_numeric(x, 0, value);
          if (label == "Sex") {
            if (auto s = sex_from_name(value)) x[kSexBase + static_cast<Eigen::Index>(*s)] = 1.0;
          }
        });
        break;
      case Section::vitals:
        for_each_line(seg.content, [&](std::string_view line) {
          std::string_view label, value;
          if (!split_line(line, label, value)) return;
          for (std::size_t i = 0; i < kVitalFields.size(); ++i) {
            if (kVitalFields[i].label == label) set_numeric(x, i + 1, value);
          }
        });
        break;
      case Section::indicators: set_flags(x, kIndicatorBase, kIndicatorFields, seg.content); break;
      case Section::symptoms: set_flags(x, kSymptomBase, kSymptomFields, seg.content); break;
      case Section::substance_history: {
        int unresolved = 0;
        for_each_line(seg.content, [&](std::string_view line) {
          if (line.substr(0, 2) != "- ") return;
          if (auto t = lexicon_->resolve(line.substr(2))) {
            x[kHistoryBase + static_cast<Eigen::Index>(index_of(*t))] = 1.0;
          } else {
            ++unresolved;
          }
        });
        x[kUnresolved] = std::min(unresolved, 3) / 3.0;
        break;
      }
      case Section::history_text:
      case Section::physical_exam:
      case Section::ecg_findings: {
        std::string salt(section_name(*seg.section));
        salt += ':';
        for (const auto& tok : word_tokens(seg.content)) {
          auto bucket = fnv1a64(salt + tok) % kHashBuckets;
          x[kBowBase + static_cast<Eigen::Index>(bucket)] = 1.0;
        }
        break;
      }
      case Section::output_schema: break;
    }
  }
  return x;
}

ToyPolicy::ToyPolicy(PromptFeatureExtractor extractor)
    : extractor_(extractor),
      weights_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumToxins),
                                     static_cast<Eigen::Index>(extractor.dimension()))) {}

ToyPolicy::ToyPolicy(PromptFeatureExtractor extractor, Eigen::MatrixXd weights)
    : extractor_(extractor), weights_(std::move(weights)) {
  if (weights_.rows() != static_cast<Eigen::Index>(kNumToxins) ||
      weights_.cols() != static_cast<Eigen::Index>(extractor_.dimension())) {
    throw ConfigError("toy policy weights must be 14 x " + std::to_string(extractor_.dimension()));
  }
}

ToyPolicy ToyPolicy::random_init(double scale, std::uint64_t seed, PromptFeatureExtractor extractor) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(kNumToxins), static_cast<Eigen::Index>(extractor.dimension()));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
  }
  return ToyPolicy(extractor, std::move(w));
}

Eigen::VectorXd ToyPolicy::token_logps(const Eigen::VectorXd& logits, const Completion& completion) const {
  if (completion.tokens.size() != kNumToxins) throw ContractError("toy completions have exactly 14 tokens");
  Eigen::VectorXd out(logits.size());
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    // log sigmoid(z) = -softplus(-z); log(1 - sigmoid(z)) = -softplus(z)
    out[k] = completion.tokens[static_cast<std::size_t>(k)] ? -softplus(-logits[k]) : -softplus(logits[k]);
  }
  return out;
}

std::vector<SampledCompletion> ToyPolicy::sample_group(const RenderedPrompt& prompt, int group_size,
                                                       std::uint64_t seed) const {
  const Eigen::VectorXd logits = weights_ * extractor_.extract(prompt);
  std::vector<SampledCompletion> out;
  for (int s = 0; s < group_size; ++s) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SampledCompletion sample;
    sample.completion.tokens.resize(kNumToxins);
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      sample.completion.tokens[k] = unit(rng) < sigmoid(logits[static_cast<Eigen::Index>(k)]) ? 1 : 0;
    }
    sample.token_logps = token_logps(logits, sample.completion);
    out.push_back(std::move(sample));
  }
  return out;
}

Eigen::VectorXd ToyPolicy::log_prob(const RenderedPrompt& prompt, const Completion& completion) const {
  return token_logps(weights_ * extractor_.extract(prompt), completion);
}

Eigen::VectorXd ToyPolicy::sequence_log_prob_gradient(const RenderedPrompt& prompt,
                                                      const Completion& completion) const {
  if (completion.tokens.size() != kNumToxins) throw ContractError("toy completions have exactly 14 tokens");
  const Eigen::VectorXd phi = extractor_.extract(prompt);
  const Eigen::VectorXd logits = weights_ * phi;
  Eigen::VectorXd residual(logits.size());
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    residual[k] = completion.tokens[static_cast<std::size_t>(k)] - sigmoid(logits[k]);
  }
  Eigen::MatrixXd grad = residual * phi.transpose();
  return Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size());
}

std::string ToyPolicy::render_completion(const Completion& completion) const {
  LabelVector labels;
  for (std::size_t k = 0; k < kNumToxins && k < completion.tokens.size(); ++k) labels.set(k, completion.tokens[k] != 0);
  std::string reasoning = "Decision tokens from the toy policy: ";
  if (labels.none()) {
    reasoning += "no substance class is positive.";
  } else {
    reasoning += "positive for ";
    bool first = true;
    for (Toxin t : labels.to_set()) {
      if (!first) reasoning += ", ";
      reasoning += display_name_of(t);
      first = false;
    }
    reasoning += '.';
  }
  return detoxr::render_completion(labels, reasoning);
}

std::string ToyPolicy::greedy_completion(const RenderedPrompt& prompt) const {
  Completion c;
  auto labels = predict(prompt);
  for (std::size_t k = 0; k < kNumToxins; ++k) c.tokens.push_back(labels.test(k) ? 1 : 0);
  return render_completion(c);
}

Eigen::VectorXd ToyPolicy::probabilities(const RenderedPrompt& prompt) const {
  return (weights_ * extractor_.extract(prompt)).unaryExpr([](double z) { return sigmoid(z); });
}

LabelVector ToyPolicy::predict(const RenderedPrompt& prompt) const {
  const Eigen::VectorXd logits = weights_ * extractor_.extract(prompt);
  LabelVector out;
  for (std::size_t k = 0; k < kNumToxins; ++k) out.set(k, logits[static_cast<Eigen::Index>(k)] > 0.0);
  return out;
}

Eigen::VectorXd ToyPolicy::parameters() const {
  return Eigen::Map<const Eigen::VectorXd>(weights_.data(), weights_.size());
}

void ToyPolicy::set_parameters(const Eigen::VectorXd& parameters) {
  if (parameters.size() != weights_.size()) throw ConfigError("parameter vector has the wrong size");
  weights_ = Eigen::Map<const Eigen::MatrixXd>(parameters.data(), weights_.rows(), weights_.cols());
}

void ToyPolicy::apply_gradient(const Eigen::VectorXd& gradient, double learning_rate) {
  if (gradient.size() != weights_.size()) throw ConfigError("gradient has the wrong size");
  weights_ += learning_rate * Eigen::Map<const Eigen::MatrixXd>(gradient.data(), weights_.rows(), weights_.cols());
}

void ToyPolicy::save(const std::filesystem::path& path) const {
  json doc;
  doc["format"] = kToyFormat;
  doc["version"] = kToyFormatVersion;
  doc["rows"] = weights_.rows();
  doc["cols"] = weights_.cols();
  doc["hash_buckets"] = PromptFeatureExtractor::kHashBuckets;
  doc["weights"] = std::vector<double>(weights_.data(), weights_.data() + weights_.size());  // column-major
  write_text_file(path, doc.dump());
}

ToyPolicy ToyPolicy::load(const std::filesystem::path& path) {
  json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded() || doc.value("format", "") != kToyFormat) {
    throw SchemaError("format", "not a toy policy checkpoint");
  }
  if (doc.value("version", 0) != kToyFormatVersion) throw SchemaError("version", "unsupported checkpoint version");
  PromptFeatureExtractor fx;
  auto rows = doc.at("rows").get<Eigen::Index>();
  auto cols = doc.at("cols").get<Eigen::Index>();
  auto values = doc.at("weights").get<std::vector<double>>();
  if (rows != static_cast<Eigen::Index>(kNumToxins) || cols != static_cast<Eigen::Index>(fx.dimension()) ||
      static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw SchemaError("weights", "checkpoint shape does not match the feature layout");
  }
  return ToyPolicy(fx, Eigen::Map<Eigen::MatrixXd>(values.data(), rows, cols));
}

}  // namespace detoxr
