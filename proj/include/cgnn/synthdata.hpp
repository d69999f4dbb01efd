#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgnn/dataset.hpp"
#include "cgnn/pcmci.hpp"
#include "cgnn/rng.hpp"

namespace cgnn {

struct ScmVariable {
  std::string name;
  VariableKind kind = VariableKind::kLocal;
  double noise_std = 1.0;
  double seasonal_amplitude = 0.0;
  double seasonal_phase = 0.0;  // radians
};

// x_target(t) += weight * x_source(t - lag), lag in fine steps.
struct ScmLink {
  std::size_t source = 0;
  std::size_t lag = 1;
  std::size_t target = 0;
  double weight = 0.0;
};

// Terms of the label logit for y(u), evaluated at t = u - horizon.
struct LabelTerm {
  std::size_t var = 0;
  std::size_t lag = 0;  // x_var(t - lag)
  double weight = 0.0;
};

struct SynergyTerm {
  std::size_t a = 0;
  std::size_t lag_a = 0;
  std::size_t b = 0;
  std::size_t lag_b = 0;
  double weight = 0.0;
};

struct LabelRule {
  std::vector<LabelTerm> linear;
  std::vector<SynergyTerm> synergy;
  double bias = 0.0;
  // When > 0 the bias is calibrated so the realized positive rate matches.
  double target_rate = 0.0;
};

// Linear VAR over fine steps. Non-target variables follow
//   x_j(t) = sum_links w * x_i(t - lag) + noise_std * e_j(t),
// OCIs only update every `cadence` steps and hold in between, and the
// observed value adds sin seasonality. The target is the label series.
struct ScmSpec {
  std::string name = "custom";
  std::vector<ScmVariable> variables;
  std::vector<ScmLink> links;
  LabelRule label;
  std::size_t horizon = 1;
  std::size_t cadence = 4;
  std::size_t seasonal_period = 48;
  std::size_t burn_in = 200;

  std::size_t num_vars() const { return variables.size(); }
  std::size_t target_index() const;
  std::vector<VariableKind> kinds() const;
  std::vector<std::string> names() const;
  // Largest lag over links and label terms (label terms shifted by horizon).
  std::size_t MaxLag() const;
  // Spectral radius of the companion matrix of the link VAR.
  double SpectralRadius() const;
  // Structure, ordering and stability; throws kConfig or kStability.
  void Validate() const;
  // The generating graph: links plus (var, horizon + lag) -> target for
  // every label term. mci holds the structural weight.
  CausalGraph GroundTruth() const;
};

nlohmann::json ToJson(const ScmSpec& spec);
ScmSpec ScmSpecFromJson(const nlohmann::json& json);
std::uint64_t SpecHash(const ScmSpec& spec);

// Seven-variable mediator-ordered SCM (three OCIs, three locals, one fire
// target) with the requested positive rate.
ScmSpec Fig6Spec(double positive_rate);
// "fig6-default", "mediterranean" or "boreal".
ScmSpec PresetSpec(const std::string& preset);

struct LabelResult {
  std::vector<int> labels;  // one per row; rows whose terms reach before row 0 are 0
  double bias = 0.0;
  double positive_rate = 0.0;  // over rows with a defined logit
};

// y(u) ~ Bernoulli(sigmoid(eta(u - h) + b)). One uniform is drawn per row, so
// labels at u depend only on values at rows <= u - h and on draw u.
LabelResult LabelFire(const Matrix& values, const LabelRule& rule, std::size_t horizon, Rng& rng);

struct GeneratedData {
  TimeSeriesDataset dataset;  // fine steps, target column = labels
  CausalGraph truth;
  LabelResult label;
};

// Simulates burn_in + T steps and drops the burn-in. The label stream is
// separate from the noise stream.
GeneratedData Generate(const ScmSpec& spec, std::size_t num_steps, std::uint64_t seed);

// `<stem>.csv` (wide, header = names) and `<stem>.json` sidecar.
void WriteDataset(const std::filesystem::path& stem, const GeneratedData& data, const ScmSpec& spec,
                  std::uint64_t seed);
// Reads a CSV and its sidecar (kinds, cadence, period). Missing sidecar kinds
// raise kConfig.
struct LoadedDataset {
  TimeSeriesDataset dataset;
  nlohmann::json sidecar;
};
LoadedDataset ReadDataset(const std::filesystem::path& csv_path);

}  // namespace cgnn
