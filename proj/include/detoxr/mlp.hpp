#ifndef DETOXR_MLP_HPP
#define DETOXR_MLP_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "detoxr/baselines.hpp"
#include "detoxr/case.hpp"
#include "detoxr/errors.hpp"

namespace detoxr {

// Fully connected network: rectifier hidden layers, logistic outputs,
// trained on mean per-label binary cross-entropy. Inputs are column-major
// batches (features x samples).
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weights;  // out x in
    Vector bias;
  };

  Mlp() = default;

  // He-normal weights, zero biases.
  Mlp(std::vector<int> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ConfigError("network needs at least an input and an output layer");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 1; l < sizes_.size(); ++l) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / sizes_[l - 1]));
      Layer layer{Matrix(sizes_[l], sizes_[l - 1]), Vector::Zero(sizes_[l])};
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
          layer.weights(i, j) = static_cast<Scalar>(normal(rng));
        }
      }
      layers_.push_back(std::move(layer));
    }
  }

  const std::vector<int>& sizes() const noexcept { return sizes_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  template <typename Derived>
  Matrix logits(const Eigen::MatrixBase<Derived>& inputs) const {
    Matrix a = inputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = (layers_[l].weights * a).colwise() + layers_[l].bias;
      a = l + 1 < layers_.size() ? Matrix(z.cwiseMax(Scalar(0))) : z;
    }
    return a;
  }

  template <typename Derived>
  Matrix probabilities(const Eigen::MatrixBase<Derived>& inputs) const {
    return logits(inputs).unaryExpr([](Scalar z) { return Scalar(1) / (Scalar(1) + std::exp(-z)); });
  }

  // Mean binary cross-entropy over all (label, sample) entries.
  template <typename DX, typename DY>
  Scalar loss(const Eigen::MatrixBase<DX>& inputs, const Eigen::MatrixBase<DY>& targets) const {
    return bce(logits(inputs), targets);
  }

  // Returns the loss; fills `grads` (same layout as layers()).
  template <typename DX, typename DY>
  Scalar loss_and_gradient(const Eigen::MatrixBase<DX>& inputs, const Eigen::MatrixBase<DY>& targets,
                           std::vector<Layer>& grads) const {
    const std::size_t n_layers = layers_.size();
    std::vector<Matrix> acts;  // acts[0] = input, acts[l] = output of layer l
    acts.reserve(n_layers + 1);
    acts.emplace_back(inputs);
    for (std::size_t l = 0; l < n_layers; ++l) {
      Matrix z = (layers_[l].weights * acts.back()).colwise() + layers_[l].bias;
      acts.push_back(l + 1 < n_layers ? Matrix(z.cwiseMax(Scalar(0))) : z);
    }
    const Matrix& out = acts.back();
    const Scalar scale = Scalar(1) / static_cast<Scalar>(out.size());
    Scalar value = bce(out, targets);

    Matrix delta = (out.unaryExpr([](Scalar z) { return Scalar(1) / (Scalar(1) + std::exp(-z)); }) -
                    targets.template cast<Scalar>()) *
                   scale;
    grads.resize(n_layers);
    for (std::size_t l = n_layers; l-- > 0;) {
      grads[l].weights = delta * acts[l].transpose();
      grads[l].bias = delta.rowwise().sum();
      if (l > 0) {
        Matrix back = layers_[l].weights.transpose() * delta;
        // Rectifier derivative from the stored activation (a > 0 <=> z > 0).
        delta = back.cwiseProduct(acts[l].unaryExpr([](Scalar a) { return a > Scalar(0) ? Scalar(1) : Scalar(0); }));
      }
    }
    return value;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  Vector flat_parameters() const { return flatten(layers_); }

  void set_flat_parameters(const Vector& flat) {
    Eigen::Index off = 0;
    for (auto& l : layers_) {
      l.weights = Eigen::Map<const Matrix>(flat.data() + off, l.weights.rows(), l.weights.cols());
      off += l.weights.size();
      l.bias = flat.segment(off, l.bias.size());
      off += l.bias.size();
    }
  }

  static Vector flatten(const std::vector<Layer>& layers) {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    Vector out(n);
    Eigen::Index off = 0;
    for (const auto& l : layers) {
      out.segment(off, l.weights.size()) = Eigen::Map<const Vector>(l.weights.data(), l.weights.size());
      off += l.weights.size();
      out.segment(off, l.bias.size()) = l.bias;
      off += l.bias.size();
    }
    return out;
  }

 private:
  template <typename DY>
  static Scalar bce(const Matrix& logits, const Eigen::MatrixBase<DY>& targets) {
    // softplus(z) - y z, computed stably.
    Matrix sp = logits.unaryExpr([](Scalar z) {
      return std::max(z, Scalar(0)) + std::log1p(std::exp(-std::abs(z)));
    });
    return (sp - targets.template cast<Scalar>().cwiseProduct(logits)).mean();
  }

  std::vector<int> sizes_;
  std::vector<Layer> layers_;
};

inline constexpr int kMlpHidden[3] = {640, 320, 64};

// Structured-only features: z-scored numerics (train statistics) with a
// missingness bit each, sex one-hot, indicator and symptom bits, and
// optionally the multi-hot resolved substance history.
class MlpFeaturizer {
 public:
  MlpFeaturizer() = default;
  explicit MlpFeaturizer(bool include_history) : include_history_(include_history) {}

  void fit(std::span<const Case* const> train);
  Eigen::VectorXd transform(const Case& c, const AliasLexicon& lexicon = AliasLexicon::builtin()) const;
  Eigen::MatrixXd transform(std::span<const Case* const> cases,
                            const AliasLexicon& lexicon = AliasLexicon::builtin()) const;

  std::size_t dimension() const noexcept;
  bool include_history() const noexcept { return include_history_; }

  // Numeric order: age, then vitals in schema order.
  static constexpr std::size_t kNumericCount = 1 + kVitalFields.size();
  std::array<double, kNumericCount> means{};
  std::array<double, kNumericCount> stddevs{};

 private:
  bool include_history_ = true;
};

struct MlpModel {
  MlpFeaturizer featurizer;
  Mlp<double> network;
  double threshold = 0.5;
};

struct MlpHyperparams {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int batch_size = 32;  // 0: full batch
  int max_epochs = 200;
  int patience = 20;  // epochs without validation improvement; 0 disables
  std::uint64_t seed = 0;
  bool include_history = true;
  double threshold = 0.5;
};

struct MlpEpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_micro_f1 = 0.0;
};

struct MlpTrainResult {
  MlpModel model;
  std::vector<MlpEpochRecord> history;
  int best_epoch = 0;
};

Eigen::VectorXd mlp_features(const MlpFeaturizer& featurizer, const Case& c);

MlpModel mlp_init(std::span<const Case* const> train, const MlpHyperparams& hp);

MlpTrainResult mlp_train(std::span<const Case* const> train, std::span<const Case* const> val,
                         const MlpHyperparams& hp);
MlpTrainResult mlp_train(const DatasetManifest& dataset, const MlpHyperparams& hp);

LabelVector mlp_predict(const MlpModel& model, const Case& c, double threshold = 0.5);

void save_mlp(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_mlp(const std::filesystem::path& path);

Eigen::MatrixXd label_matrix(std::span<const Case* const> cases);

}  // namespace detoxr

#endif  // DETOXR_MLP_HPP
