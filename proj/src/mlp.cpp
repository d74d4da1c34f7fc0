#include "detoxr/mlp.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "detoxr/metrics.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

using json = nlohmann::json;

namespace {

constexpr std::string_view kMlpFormat = "detoxr-mlp";
constexpr int kMlpFormatVersion = 1;

std::optional<double> numeric_value(const Case& c, std::size_t i) {
  return i == 0 ? c.structured.age : c.structured.vitals[i - 1];
}

double micro_f1(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets, double threshold) {
  long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    for (Eigen::Index k = 0; k < probs.rows(); ++k) {
      bool p = probs(k, j) > threshold;
      bool g = targets(k, j) > 0.5;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
  }
  long denom = 2 * tp + fp + fn;
  return denom ? 2.0 * tp / denom : 0.0;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, int n_rows, int n_cols) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != n_rows) throw SchemaError("weights", "row count mismatch");
  Eigen::MatrixXd m(n_rows, n_cols);
  for (int i = 0; i < n_rows; ++i) {
    if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != n_cols) {
      throw SchemaError("weights", "column count mismatch");
    }
    for (int j = 0; j < n_cols; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

}  // namespace

void MlpFeaturizer::fit(std::span<const Case* const> train) {
  for (std::size_t i = 0; i < kNumericCount; ++i) {
    double sum = 0.0, sq = 0.0;
    long n = 0;
    for (const Case* c : train) {
      if (auto v = numeric_value(*c, i)) {
        sum += *v;
        sq += *v * *v;
        ++n;
      }
    }
    means[i] = n ? sum / n : 0.0;
    double var = n ? sq / n - means[i] * means[i] : 0.0;
    stddevs[i] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
}

std::size_t MlpFeaturizer::dimension() const noexcept {
  return 2 * kNumericCount + 3 + kIndicatorFields.size() + kSymptomFields.size() +
         (include_history_ ? kNumToxins : 0);
}

Eigen::VectorXd MlpFeaturizer::transform(const Case& c, const AliasLexicon& lexicon) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension()));
  Eigen::Index o = 0;
  for (std::size_t i = 0; i < kNumericCount; ++i) {
    if (auto v = numeric_value(c, i)) {
      x[o] = (*v - means[i]) / stddevs[i];
    } else {
      x[o + 1] = 1.0;
    }
    o += 2;
  }
  if (c.structured.sex) x[o + static_cast<Eigen::Index>(*c.structured.sex)] = 1.0;
  o += 3;
  for (const auto& flag : c.structured.indicators) x[o++] = flag.value_or(false) ? 1.0 : 0.0;
  for (const auto& flag : c.structured.symptoms) x[o++] = flag.value_or(false) ? 1.0 : 0.0;
  if (include_history_) {
    auto hist = resolve_history(c.substance_history, lexicon).labels;
    for (std::size_t k = 0; k < kNumToxins; ++k) x[o++] = hist.test(k) ? 1.0 : 0.0;
  }
  return x;
}

Eigen::MatrixXd MlpFeaturizer::transform(std::span<const Case* const> cases, const AliasLexicon& lexicon) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(dimension()), static_cast<Eigen::Index>(cases.size()));
  for (std::size_t j = 0; j < cases.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = transform(*cases[j], lexicon);
  return x;
}

Eigen::VectorXd mlp_features(const MlpFeaturizer& featurizer, const Case& c) { return featurizer.transform(c); }

Eigen::MatrixXd label_matrix(std::span<const Case* const> cases) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(kNumToxins), static_cast<Eigen::Index>(cases.size()));
  for (std::size_t j = 0; j < cases.size(); ++j) {
    if (!cases[j]->labels) throw MissingLabelsError(cases[j]->case_id);
    for (std::size_t k = 0; k < kNumToxins; ++k) {
      y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = cases[j]->labels->test(k) ? 1.0 : 0.0;
    }
  }
  return y;
}

MlpModel mlp_init(std::span<const Case* const> train, const MlpHyperparams& hp) {
  MlpModel model;
  model.featurizer = MlpFeaturizer(hp.include_history);
  model.featurizer.fit(train);
  model.network = Mlp<double>({static_cast<int>(model.featurizer.dimension()), kMlpHidden[0], kMlpHidden[1],
                               kMlpHidden[2], static_cast<int>(kNumToxins)},
                              hp.seed);
  model.threshold = hp.threshold;
  return model;
}

MlpTrainResult mlp_train(std::span<const Case* const> train, std::span<const Case* const> val,
                         const MlpHyperparams& hp) {
  if (train.empty()) throw EmptyInputError("MLP training split is empty");
  if (hp.max_epochs < 0 || hp.batch_size < 0 || !(hp.learning_rate > 0.0)) {
    throw ConfigError("invalid MLP hyperparameters");
  }
  MlpTrainResult result;
  result.model = mlp_init(train, hp);
  auto& net = result.model.network;

  const Eigen::MatrixXd x_train = result.model.featurizer.transform(train);
  const Eigen::MatrixXd y_train = label_matrix(train);
  const Eigen::MatrixXd x_val = val.empty() ? Eigen::MatrixXd() : result.model.featurizer.transform(val);
  const Eigen::MatrixXd y_val = val.empty() ? Eigen::MatrixXd() : label_matrix(val);

  const Eigen::Index n = x_train.cols();
  const Eigen::Index batch = hp.batch_size == 0 ? n : std::min<Eigen::Index>(hp.batch_size, n);
  std::vector<Mlp<double>::Layer> grads;
  std::vector<Mlp<double>::Layer> velocity;
  for (const auto& l : net.layers()) {
    velocity.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }

  std::mt19937_64 rng(derive_seed(hp.seed, 0x3170));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  double best_score = -1.0;
  Eigen::VectorXd best_params = net.flat_parameters();
  int since_best = 0;

  for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += batch) {
      Eigen::Index len = std::min(batch, n - start);
      Eigen::MatrixXd xb(x_train.rows(), len), yb(y_train.rows(), len);
      for (Eigen::Index j = 0; j < len; ++j) {
        xb.col(j) = x_train.col(order[static_cast<std::size_t>(start + j)]);
        yb.col(j) = y_train.col(order[static_cast<std::size_t>(start + j)]);
      }
      net.loss_and_gradient(xb, yb, grads);
      auto& layers = net.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        velocity[l].weights = hp.momentum * velocity[l].weights - hp.learning_rate * grads[l].weights;
        velocity[l].bias = hp.momentum * velocity[l].bias - hp.learning_rate * grads[l].bias;
        layers[l].weights += velocity[l].weights;
        layers[l].bias += velocity[l].bias;
      }
    }

    double train_loss = net.loss(x_train, y_train);
    if (!std::isfinite(train_loss)) throw DivergenceError("MLP loss became non-finite at epoch " + std::to_string(epoch));
    double score = val.empty() ? micro_f1(net.probabilities(x_train), y_train, hp.threshold)
                               : micro_f1(net.probabilities(x_val), y_val, hp.threshold);
    result.history.push_back({epoch, train_loss, score});
    if (score > best_score) {
      best_score = score;
      best_params = net.flat_parameters();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (hp.patience > 0 && ++since_best >= hp.patience) {
      break;
    }
  }
  if (result.best_epoch > 0) net.set_flat_parameters(best_params);
  return result;
}

MlpTrainResult mlp_train(const DatasetManifest& dataset, const MlpHyperparams& hp) {
  if (!dataset.split_assignment) throw ConfigError("MLP training needs a split assignment");
  auto train = dataset.cases_in(Split::train);
  auto val = dataset.cases_in(Split::val);
  return mlp_train(train, val, hp);
}

LabelVector mlp_predict(const MlpModel& model, const Case& c, double threshold) {
  Eigen::MatrixXd probs = model.network.probabilities(model.featurizer.transform(c));
  LabelVector out;
  for (std::size_t k = 0; k < kNumToxins; ++k) out.set(k, probs(static_cast<Eigen::Index>(k), 0) > threshold);
  return out;
}

void save_mlp(const MlpModel& model, const std::filesystem::path& path) {
  json doc;
  doc["format"] = kMlpFormat;
  doc["version"] = kMlpFormatVersion;
  doc["layer_sizes"] = model.network.sizes();
  doc["threshold"] = model.threshold;
  doc["include_history"] = model.featurizer.include_history();
  doc["feature_means"] = model.featurizer.means;
  doc["feature_stddevs"] = model.featurizer.stddevs;
  json layers = json::array();
  for (const auto& l : model.network.layers()) {
    layers.push_back({{"weights", matrix_json(l.weights)},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  doc["layers"] = layers;
  write_text_file(path, doc.dump());
}

MlpModel load_mlp(const std::filesystem::path& path) {
  json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded() || doc.value("format", "") != kMlpFormat) {
    throw SchemaError("format", "not an MLP model file");
  }
  if (doc.value("version", 0) != kMlpFormatVersion) throw SchemaError("version", "unsupported MLP model version");
  MlpModel model;
  model.featurizer = MlpFeaturizer(doc.at("include_history").get<bool>());
  auto means = doc.at("feature_means").get<std::vector<double>>();
  auto stds = doc.at("feature_stddevs").get<std::vector<double>>();
  if (means.size() != MlpFeaturizer::kNumericCount || stds.size() != MlpFeaturizer::kNumericCount) {
    throw SchemaError("feature_means", "wrong length");
  }
  std::copy(means.begin(), means.end(), model.featurizer.means.begin());
  std::copy(stds.begin(), stds.end(), model.featurizer.stddevs.begin());
  auto sizes = doc.at("layer_sizes").get<std::vector<int>>();
  if (sizes.empty() || sizes.front() != static_cast<int>(model.featurizer.dimension()) ||
      sizes.back() != static_cast<int>(kNumToxins)) {
    throw SchemaError("layer_sizes", "incompatible with the feature layout");
  }
  model.network = Mlp<double>(sizes, 0);
  const json& layers = doc.at("layers");
  if (layers.size() + 1 != sizes.size()) throw SchemaError("layers", "layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = model.network.layers()[l];
    layer.weights = matrix_from_json(layers[l].at("weights"), sizes[l + 1], sizes[l]);
    auto bias = layers[l].at("bias").get<std::vector<double>>();
    if (static_cast<int>(bias.size()) != sizes[l + 1]) throw SchemaError("bias", "length mismatch");
    layer.bias = Eigen::Map<Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
  }
  model.threshold = doc.value("threshold", 0.5);
  return model;
}

}  // namespace detoxr
