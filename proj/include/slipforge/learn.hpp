#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "slipforge/features.hpp"
#include "slipforge/nets.hpp"

namespace slipforge {

enum class ModelKind { mlp, snn };
enum class OptimizerKind { rmsprop, adam };

std::string to_string(ModelKind k);
std::string to_string(OptimizerKind k);
ModelKind model_kind_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 0;

  /// A zero learning rate is accepted (it leaves the parameters untouched).
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  std::vector<int> mlp_hidden{128, 64};
  std::vector<int> snn_hidden{128};
  SnnParams snn;
};

/// Standard RMSProp (rho 0.9) and Adam (0.9, 0.999) with eps 1e-8.
template <class S>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::size_t n)
      : kind_(kind), lr_(learning_rate), m_(kind == OptimizerKind::adam ? n : 0, S(0)), v_(n, S(0)) {}

  void step(std::vector<S>& params, const std::vector<S>& grad) {
    if (grad.size() != params.size() || params.size() != v_.size()) throw InternalError("optimizer size mismatch");
    ++t_;
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(params.size());
    const S lr = static_cast<S>(lr_);
    const S eps = static_cast<S>(1e-8);
    if (kind_ == OptimizerKind::rmsprop) {
      const S rho = static_cast<S>(0.9);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        const S g = grad[static_cast<std::size_t>(i)];
        S& v = v_[static_cast<std::size_t>(i)];
        v = rho * v + (S(1) - rho) * g * g;
        params[static_cast<std::size_t>(i)] -= lr * g / (std::sqrt(v) + eps);
      }
      return;
    }
    const S b1 = static_cast<S>(0.9), b2 = static_cast<S>(0.999);
    const S c1 = static_cast<S>(1.0 - std::pow(0.9, static_cast<double>(t_)));
    const S c2 = static_cast<S>(1.0 - std::pow(0.999, static_cast<double>(t_)));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const S g = grad[static_cast<std::size_t>(i)];
      S& m = m_[static_cast<std::size_t>(i)];
      S& v = v_[static_cast<std::size_t>(i)];
      m = b1 * m + (S(1) - b1) * g;
      v = b2 * v + (S(1) - b2) * g * g;
      params[static_cast<std::size_t>(i)] -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
    }
  }

  long steps() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<S> m_;
  std::vector<S> v_;
  long t_ = 0;
};

/// Single-precision classifier of either kind.
class Classifier {
 public:
  static Classifier create(const ModelConfig& cfg, const FeatureLayout& layout, std::uint64_t seed);

  ModelKind kind() const { return config_.kind; }
  const ModelConfig& config() const { return config_; }
  const FeatureLayout& layout() const { return layout_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<float>& params();
  const std::vector<float>& params() const;

  BatchStats loss_and_grad(std::span<const LabeledFeatures* const> batch, std::vector<float>& grad) const;
  int predict(const SparseVec& x) const;
  double loss(const LabeledFeatures& e) const;
  std::pair<int, double> predict_and_loss(const LabeledFeatures& e) const;

  /// Optional scaler fitted on the training set; stored in checkpoints so raw
  /// features can be classified later.
  FeatureScaler scaler;

 private:
  Classifier(ModelConfig cfg, FeatureLayout layout, std::uint64_t seed, std::variant<MlpNet<float>, SnnNet<float>> net)
      : config_(std::move(cfg)), layout_(layout), seed_(seed), net_(std::move(net)) {}

  ModelConfig config_;
  FeatureLayout layout_;
  std::uint64_t seed_ = 0;
  std::variant<MlpNet<float>, SnnNet<float>> net_;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_loss_median = 0.0;  // median over the epoch's batches
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct RunRecord {
  ModelConfig model;
  TrainConfig config;
  std::vector<EpochMetrics> epochs;
  double best_val_accuracy = 0.0;
  int best_epoch = 0;  // 0 = the untrained initialization
  std::optional<double> test_accuracy;
  std::optional<double> test_loss;
  std::optional<int> diverged_epoch;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;  // mean per example
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Throws EvalError on an empty set.
EvalResult evaluate(const Classifier& model, const FeatureDataset& data);

struct TrainResult {
  RunRecord record;
  Classifier best;  // parameters of the best validation epoch
};

/// Trains on already scaled features (see prepare_features). Throws
/// DivergedError when a batch or validation loss is not finite.
TrainResult train(const ModelConfig& model, const FeatureDataset& train_set, const FeatureDataset& val_set,
                  const TrainConfig& cfg);

/// Fits a scaler on `train_set` and applies it to every given set.
FeatureScaler prepare_features(FeatureDataset& train_set, std::initializer_list<FeatureDataset*> others);

struct SweepSpace {
  std::vector<double> learning_rates{1e-4, 3e-4, 1e-3};
  std::vector<int> batch_sizes{16, 32};
  std::vector<OptimizerKind> optimizers{OptimizerKind::rmsprop, OptimizerKind::adam};
  int epochs = 10;
};

struct SweepResult {
  std::vector<RunRecord> runs;
  std::size_t best = 0;  // index of the highest validation accuracy (first on ties)
};

/// n_runs independent draws (with replacement) from the space. Each record is
/// written to record_dir/run_NNN.json as soon as its run finishes. Runs that
/// diverge are kept with their diverged_epoch set.
SweepResult sweep(const ModelConfig& model, const SweepSpace& space, int n_runs, std::uint64_t seed,
                  const FeatureDataset& train_set, const FeatureDataset& val_set,
                  const FeatureDataset* test_set = nullptr, const std::filesystem::path& record_dir = {},
                  int parallelism = 1);

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  std::size_t parameter_count = 0;
};

/// Central differences (step h) on n_params random parameters of a small
/// double-precision model, compared with backpropagation. For the SNN the
/// smooth spike function is used so the loss is differentiable.
GradCheckResult finite_difference_check(ModelKind kind, const FeatureDataset& batch, std::uint64_t seed,
                                        std::vector<int> hidden = {}, int n_params = 50, double h = 1e-4,
                                        SnnParams snn = {});

/// Flat binary checkpoint: magic line, JSON header line, float32 parameters,
/// float32 scaler.
void save_checkpoint(const std::filesystem::path& path, const Classifier& model);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace slipforge
