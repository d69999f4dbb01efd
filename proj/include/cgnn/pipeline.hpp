#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgnn/explain.hpp"
#include "cgnn/metrics.hpp"
#include "cgnn/models.hpp"
#include "cgnn/pcmci.hpp"
#include "cgnn/synthdata.hpp"
#include "cgnn/train.hpp"
#include "cgnn/windows.hpp"

namespace cgnn {

struct DataConfig {
  std::string preset = "fig6-default";
  // Inline SCM; takes precedence over the preset when present.
  std::optional<nlohmann::json> scm;
  std::size_t num_steps = 2000;
  // Existing dataset CSV; empty means <out>/data.csv.
  std::string path;
};

struct ExplainConfig {
  std::size_t permutations = 200;
  std::size_t background = 100;
  std::size_t max_samples = 0;  // 0 = every positive test sample
  bool scaled = true;
  // Checkpoint prefix; empty means the first training seed of the model.
  std::string checkpoint;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  DataConfig data;
  PcmciConfig pcmci;
  bool allow_target_autolinks = false;
  WindowSpec windows;
  ModelKind model = ModelKind::kGnnCausal;
  ModelConfig model_config;  // variable counts and windows are filled from the data
  TrainConfig train;
  ExplainConfig explain;

  std::filesystem::path out_dir() const { return out; }
  std::filesystem::path dataset_path() const;
  ScmSpec Scm() const;
  // Effective seed of training run `run_seed`, derived from `seed`.
  std::uint64_t TrainSeed(std::uint64_t run_seed) const;
};

// Every field is written, so the snapshot reproduces the run on its own.
nlohmann::json ToJson(const RunConfig& config);
// Missing keys keep their defaults; unknown keys raise kConfig.
RunConfig RunConfigFromJson(const nlohmann::json& json, RunConfig defaults = {});

// Writes <out>/config.<command>.json.
void WriteConfigSnapshot(const RunConfig& config, const std::string& command);

struct GenerateOutput {
  std::filesystem::path csv;
  double positive_rate = 0.0;
  double label_bias = 0.0;
};
GenerateOutput CmdGenerate(const RunConfig& config);

struct DiscoverOutput {
  CausalGraph graph;
  std::optional<EdgeScore> score;  // when the sidecar carries a ground truth
};
// Writes graph.json, graph.dot and adjacency.csv.
DiscoverOutput CmdDiscover(const RunConfig& config);

// One checkpoint per training seed under <out>/checkpoints.
std::vector<std::filesystem::path> CmdTrain(const RunConfig& config);

// Writes eval_<model>.json and curves_<model>.csv.
EvalReport CmdEvaluate(const RunConfig& config);

struct ExplainOutput {
  std::size_t num_samples = 0;
  LagAggregate aggregate;
};
// Writes shap_<model>.csv and shap_lag_<model>.csv.
ExplainOutput CmdExplain(const RunConfig& config);

std::filesystem::path CheckpointPrefix(const RunConfig& config, std::uint64_t run_seed);

}  // namespace cgnn
