#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cgnn/graph_builder.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/tensor.hpp"
#include "cgnn/windows.hpp"

namespace cgnn {

enum class ModelKind { kLstm, kGru, kGnnCorr, kGnnFull, kGnnCausal };

const char* ToString(ModelKind kind);
ModelKind ParseModelKind(const std::string& name);
bool IsGraphModel(ModelKind kind);

struct ModelConfig {
  std::size_t hidden_dim = 32;
  std::size_t gnn_hidden = 64;
  std::size_t num_classes = 2;
  double leaky_slope = 0.01;
  std::size_t num_local = 3;
  std::size_t num_oci = 3;
  std::size_t local_window = 39;
  std::size_t oci_window = 10;
  std::size_t horizon = 1;

  std::size_t num_nodes() const { return num_local + num_oci; }
  void Validate() const;
};

nlohmann::json ToJson(const ModelConfig& config);
ModelConfig ModelConfigFromJson(const nlohmann::json& json, ModelConfig defaults = {});

enum class CellKind { kLstm, kGru };

// Single-layer recurrent cell with scalar input. Gate blocks are laid out
// along columns: LSTM [i | f | g | o], GRU [r | z | n].
struct RecurrentParams {
  CellKind cell = CellKind::kLstm;
  Tensor w_input;   // [1 x G*H]
  Tensor w_hidden;  // [H x G*H]
  Tensor b_input;   // [G*H]
  Tensor b_hidden;  // [G*H], GRU only

  std::size_t hidden() const { return w_hidden.rows(); }
};

// Final hidden state [N x H] of each row of series [N x L], from zero state.
Tensor RecurrentEncode(Tape& tape, const RecurrentParams& params, const Tensor& series);

struct GcnLayerParams {
  Tensor kernel;  // [d_in x d_out]
  Tensor ln_gamma;
  Tensor ln_beta;
};

// LeakyReLU(LayerNorm(mix(adj, nodes) * kernel)) for nodes stacked per sample.
Tensor GcnLayer(Tape& tape, const Tensor& nodes, const AdjacencyMatrix& adjacency,
                const GcnLayerParams& params, double slope);

struct ModelParams {
  RecurrentParams encoder;
  GcnLayerParams gcn1;  // graph models only
  GcnLayerParams gcn2;
  Tensor cls_weight;  // [H x num_classes]
  Tensor cls_bias;    // [num_classes]

  // Every defined parameter in a fixed order.
  std::vector<std::pair<std::string, Tensor>> Named() const;
  std::size_t NumScalars() const;
};

// Zero-mean normal with variance 2 / (fan_in + fan_out) for a rank-2 shape.
Tensor XavierNormal(std::size_t fan_in, std::size_t fan_out, Rng& rng);

ModelParams InitParams(ModelKind kind, const ModelConfig& config, Rng& rng);

struct ForwardResult {
  Tensor logits;                  // [B x num_classes]
  std::vector<double> confidence;  // softmax probability of class 1
};

std::vector<double> PositiveConfidence(const Tensor& logits);

// Copies share parameter storage, like Tensor handles.
class Model {
 public:
  // `adjacency` is the raw (unnormalized) matrix for gnn_causal and is
  // ignored by the other kinds.
  Model(ModelKind kind, const ModelConfig& config, ModelParams params,
        std::optional<AdjacencyMatrix> adjacency = std::nullopt);

  static Model Create(ModelKind kind, const ModelConfig& config, Rng& rng,
                      std::optional<AdjacencyMatrix> adjacency = std::nullopt);

  ModelKind kind() const { return kind_; }
  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }
  // Raw adjacency used by the graph convolution (none for baselines and corr).
  const std::optional<AdjacencyMatrix>& adjacency() const { return adjacency_; }

  ForwardResult Forward(Tape& tape, const Batch& batch) const;
  // Inference in chunks; one confidence per sample.
  std::vector<double> Predict(const Batch& batch, std::size_t chunk = 256) const;

 private:
  Tensor EncodeNodes(Tape& tape, const Batch& batch) const;

  ModelKind kind_;
  ModelConfig config_;
  ModelParams params_;
  std::optional<AdjacencyMatrix> adjacency_;
  Tensor norm_adjacency_;  // constant, for causal and full kinds
};

// Flat little-endian float64 file `<prefix>.bin` plus manifest `<prefix>.json`
// (kind, config, parameter names and shapes, adjacency, caller metadata).
void SaveCheckpoint(const std::filesystem::path& prefix, const Model& model,
                    const nlohmann::json& metadata = nlohmann::json::object());
Model LoadCheckpoint(const std::filesystem::path& prefix, nlohmann::json* metadata = nullptr);

}  // namespace cgnn
