#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cgnn/metrics.hpp"
#include "cgnn/models.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/windows.hpp"

namespace cgnn {

struct TrainConfig {
  double lr = 1e-5;
  double weight_decay = 5e-6;
  std::size_t neg_pos_ratio = 5;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  // Draw a fresh negative subsample every epoch instead of once per run.
  bool resample_each_epoch = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void Validate() const;
};

nlohmann::json ToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(const nlohmann::json& json, TrainConfig defaults = {});

// All positives of `samples` plus min(ratio * positives, negatives) negatives
// drawn without replacement. labels[k] is the label of samples[k]. The result
// is sorted ascending.
std::vector<std::size_t> Resample(std::span<const std::size_t> samples, std::span<const int> labels,
                                  std::size_t ratio, Rng& rng);

// Adam with decoupled weight decay: p <- p - lr * m_hat / (sqrt(v_hat) + eps) - wd * p.
// The decay is not scaled by lr.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, const TrainConfig& config);
  // Applies one update from the accumulated gradients. Throws kStability if a
  // parameter becomes non-finite.
  void Step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

struct TrainHistory {
  std::vector<double> train_loss;  // mean minibatch loss per epoch
  std::vector<double> val_auprc;   // NaN when the validation split lacks a class
  std::size_t best_epoch = 0;
};

struct TrainResult {
  Model model;  // parameters of the selected epoch
  TrainHistory history;
};

// Minibatch training on the train split. The checkpoint with the best
// validation AUPRC is kept; without a usable validation split the last epoch
// is kept.
TrainResult Train(Model model, const WindowSet& windows, const Splits& splits,
                  const TrainConfig& config, std::uint64_t seed);

struct Scored {
  std::vector<double> scores;
  std::vector<int> labels;
};
Scored ScoreSamples(const Model& model, const WindowSet& windows, std::span<const std::size_t> samples);

// Creates a model from the "init" stream of `seed` and trains it on the
// "train" sub-seed.
TrainResult TrainFromSeed(ModelKind kind, const ModelConfig& model_config,
                          const std::optional<AdjacencyMatrix>& adjacency, const WindowSet& windows,
                          const Splits& splits, const TrainConfig& config, std::uint64_t seed);

// Scores every model on the untouched test split, which must contain both classes.
EvalReport Evaluate(const std::vector<Model>& models, std::span<const std::uint64_t> seeds,
                    const WindowSet& windows);

// Trains one model per seed and evaluates each on the untouched test split.
// The test split must contain both classes.
EvalReport TrainAndEvaluate(ModelKind kind, const ModelConfig& model_config,
                            const std::optional<AdjacencyMatrix>& adjacency, const WindowSet& windows,
                            const TrainConfig& config, std::vector<Model>* models = nullptr,
                            std::vector<TrainHistory>* histories = nullptr);

}  // namespace cgnn
