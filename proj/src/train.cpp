#include "cgnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "cgnn/error.hpp"

namespace cgnn {

void TrainConfig::Validate() const {
  CGNN_CHECK(lr >= 0.0 && std::isfinite(lr), ErrorKind::kConfig, "lr must be finite and >= 0");
  CGNN_CHECK(weight_decay >= 0.0 && weight_decay < 1.0, ErrorKind::kConfig, "weight_decay must be in [0,1)");
  CGNN_CHECK(neg_pos_ratio >= 1, ErrorKind::kConfig, "neg_pos_ratio must be >= 1");
  CGNN_CHECK(batch_size >= 1, ErrorKind::kConfig, "batch_size must be >= 1");
  CGNN_CHECK(!seeds.empty(), ErrorKind::kConfig, "at least one seed is required");
  CGNN_CHECK(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0, ErrorKind::kConfig,
             "invalid Adam constants");
}

nlohmann::json ToJson(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"neg_pos_ratio", c.neg_pos_ratio},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seeds", c.seeds},
          {"resample_each_epoch", c.resample_each_epoch},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps}};
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig c) {
  try {
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.neg_pos_ratio = j.value("neg_pos_ratio", c.neg_pos_ratio);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seeds = j.value("seeds", c.seeds);
    c.resample_each_epoch = j.value("resample_each_epoch", c.resample_each_epoch);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("train config: ") + e.what());
  }
  return c;
}

std::vector<std::size_t> Resample(std::span<const std::size_t> samples, std::span<const int> labels,
                                  std::size_t ratio, Rng& rng) {
  CGNN_CHECK(samples.size() == labels.size(), ErrorKind::kDimension, "samples and labels differ in length");
  CGNN_CHECK(ratio >= 1, ErrorKind::kConfig, "ratio must be >= 1");
  std::vector<std::size_t> pos, neg;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    CGNN_CHECK(labels[k] == 0 || labels[k] == 1, ErrorKind::kLabel, "labels must be 0 or 1");
    (labels[k] ? pos : neg).push_back(samples[k]);
  }
  CGNN_CHECK(!pos.empty(), ErrorKind::kUnsatisfiableRatio, "cannot resample a split with no positives");
  const std::size_t keep = std::min(neg.size(), ratio * pos.size());
  // Partial Fisher-Yates: the first `keep` slots become a uniform draw.
  for (std::size_t k = 0; k < keep; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, neg.size() - 1);
    std::swap(neg[k], neg[pick(rng)]);
  }
  std::vector<std::size_t> out = pos;
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(out.begin(), out.end());
  return out;
}

AdamW::AdamW(std::vector<Tensor> params, const TrainConfig& config)
    : params_(std::move(params)),
      lr_(config.lr),
      wd_(config.weight_decay),
      b1_(config.beta1),
      b2_(config.beta2),
      eps_(config.eps) {
  for (const auto& p : params_) {
    CGNN_CHECK(p.requires_grad(), ErrorKind::kContract, "optimizer given a constant tensor");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::Step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].mutable_values();
    const auto g = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      const double step = lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      w[i] = w[i] - step - wd_ * w[i];
      CGNN_CHECK(std::isfinite(w[i]), ErrorKind::kStability,
                 "parameter became non-finite at optimizer step " + std::to_string(t_));
    }
  }
}

namespace {

std::vector<int> LabelsOf(const WindowSet& windows, std::span<const std::size_t> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (auto s : samples) out.push_back(windows.label(s));
  return out;
}

bool HasBothClasses(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(labels.size());
}

std::vector<std::vector<double>> SnapshotValues(const ModelParams& params) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : params.Named()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

void RestoreValues(ModelParams& params, const std::vector<std::vector<double>>& values) {
  auto named = params.Named();
  for (std::size_t k = 0; k < named.size(); ++k) {
    auto dst = named[k].second.mutable_values();
    std::copy(values[k].begin(), values[k].end(), dst.begin());
  }
}

}  // namespace

Scored ScoreSamples(const Model& model, const WindowSet& windows, std::span<const std::size_t> samples) {
  Scored out;
  out.labels = LabelsOf(windows, samples);
  if (samples.empty()) return out;
  out.scores = model.Predict(windows.MakeBatch(samples));
  return out;
}

TrainResult Train(Model model, const WindowSet& windows, const Splits& splits,
                  const TrainConfig& config, std::uint64_t seed) {
  config.Validate();
  const SeedStreams streams(seed);
  Rng resample_rng = streams.Stream("resample");
  Rng shuffle_rng = streams.Stream("shuffle");

  const auto train_labels = LabelsOf(windows, splits.train);
  CGNN_CHECK(!splits.train.empty(), ErrorKind::kInsufficientData, "empty training split");

  // Validation is subsampled once so model selection compares like with like.
  std::vector<std::size_t> val;
  const auto val_labels_raw = LabelsOf(windows, splits.val);
  if (HasBothClasses(val_labels_raw)) {
    Rng val_rng = streams.Stream("validation");
    val = Resample(splits.val, val_labels_raw, config.neg_pos_ratio, val_rng);
  } else {
    spdlog::warn("validation split lacks a class; keeping the last epoch");
  }

  std::vector<Tensor> params;
  for (const auto& [name, t] : model.params().Named()) params.push_back(t);
  AdamW opt(params, config);

  TrainResult result{model, {}};
  std::vector<std::vector<double>> best = SnapshotValues(model.params());
  double best_auprc = -1.0;
  std::vector<std::size_t> epoch_samples = Resample(splits.train, train_labels, config.neg_pos_ratio, resample_rng);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0 && config.resample_each_epoch)
      epoch_samples = Resample(splits.train, train_labels, config.neg_pos_ratio, resample_rng);
    std::vector<std::size_t> order = epoch_samples;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const Batch batch = windows.MakeBatch(std::span(order).subspan(begin, end - begin));
      for (auto& p : params) p.ZeroGrad();
      Tape tape;
      const auto fwd = model.Forward(tape, batch);
      const auto ce = SoftmaxCrossEntropy(tape, fwd.logits, batch.labels);
      const double loss = ce.loss.item();
      CGNN_CHECK(std::isfinite(loss), ErrorKind::kNumerical,
                 "loss is not finite at epoch " + std::to_string(epoch));
      tape.Backward(ce.loss);
      opt.Step();
      loss_sum += loss;
      ++batches;
    }
    result.history.train_loss.push_back(loss_sum / static_cast<double>(batches));

    double val_auprc = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      const Scored s = ScoreSamples(model, windows, val);
      val_auprc = Auprc(s.scores, s.labels);
      if (val_auprc > best_auprc) {
        best_auprc = val_auprc;
        best = SnapshotValues(model.params());
        result.history.best_epoch = epoch;
      }
    }
    result.history.val_auprc.push_back(val_auprc);
    spdlog::debug("{} seed {} epoch {}: loss {:.5f} val_auprc {:.4f}", ToString(model.kind()), seed,
                  epoch, result.history.train_loss.back(), val_auprc);
  }
  if (val.empty()) {
    best = SnapshotValues(model.params());
    result.history.best_epoch = config.epochs == 0 ? 0 : config.epochs - 1;
  }
  RestoreValues(model.mutable_params(), best);
  result.model = model;
  return result;
}

TrainResult TrainFromSeed(ModelKind kind, const ModelConfig& model_config,
                          const std::optional<AdjacencyMatrix>& adjacency, const WindowSet& windows,
                          const Splits& splits, const TrainConfig& config, std::uint64_t seed) {
  const SeedStreams streams(seed);
  Rng init = streams.Stream("init");
  Model model = Model::Create(kind, model_config, init, adjacency);
  return Train(model, windows, splits, config, streams.SubSeed("train"));
}

EvalReport Evaluate(const std::vector<Model>& models, std::span<const std::uint64_t> seeds,
                    const WindowSet& windows) {
  CGNN_CHECK(!models.empty() && models.size() == seeds.size(), ErrorKind::kContract,
             "need one seed per model");
  const Splits splits = windows.ChronologicalSplits();
  const auto test_labels = LabelsOf(windows, splits.test);
  CGNN_CHECK(HasBothClasses(test_labels), ErrorKind::kUndefinedMetric,
             "test split needs both classes for AUPRC/AUROC");
  EvalReport report;
  report.model = ToString(models.front().kind());
  report.horizon = windows.spec().horizon;
  report.num_samples = test_labels.size();
  report.num_positives = static_cast<std::size_t>(std::count(test_labels.begin(), test_labels.end(), 1));
  report.positive_fraction = PositiveFraction(test_labels);
  const Batch test_batch = windows.MakeBatch(splits.test);
  for (std::size_t k = 0; k < models.size(); ++k) {
    CGNN_CHECK(models[k].kind() == models.front().kind(), ErrorKind::kContract, "models of mixed kinds");
    SeedResult r;
    r.seed = seeds[k];
    const auto scores = models[k].Predict(test_batch);
    r.auprc = Auprc(scores, test_labels);
    r.auroc = Auroc(scores, test_labels);
    r.pr_curve = PrCurve(scores, test_labels);
    r.roc_curve = RocCurve(scores, test_labels);
    spdlog::info("{} seed {}: test AUPRC {:.4f} AUROC {:.4f}", report.model, r.seed, r.auprc, r.auroc);
    report.seeds.push_back(std::move(r));
  }
  return report;
}

EvalReport TrainAndEvaluate(ModelKind kind, const ModelConfig& model_config,
                            const std::optional<AdjacencyMatrix>& adjacency, const WindowSet& windows,
                            const TrainConfig& config, std::vector<Model>* models,
                            std::vector<TrainHistory>* histories) {
  config.Validate();
  const Splits splits = windows.ChronologicalSplits();
  CGNN_CHECK(HasBothClasses(LabelsOf(windows, splits.test)), ErrorKind::kUndefinedMetric,
             "test split needs both classes for AUPRC/AUROC");
  std::vector<Model> trained;
  for (auto seed : config.seeds) {
    TrainResult r = TrainFromSeed(kind, model_config, adjacency, windows, splits, config, seed);
    spdlog::debug("{} seed {}: best epoch {}", ToString(kind), seed, r.history.best_epoch);
    trained.push_back(r.model);
    if (histories) histories->push_back(std::move(r.history));
  }
  EvalReport report = Evaluate(trained, config.seeds, windows);
  if (models) models->insert(models->end(), trained.begin(), trained.end());
  return report;
}

}  // namespace cgnn
