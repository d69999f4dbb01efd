#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cgnn/models.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/stats.hpp"

namespace cgnn {

// Maps feature rows to scalar values; evaluated in batches.
using ValueFunction = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

struct FeatureGroup {
  std::string name;
  std::string variable;
  VariableKind kind = VariableKind::kLocal;
  int lag = -1;  // OCI block lag, 0 = most recent; -1 for a whole window
  std::vector<std::size_t> coords;
};

struct Attribution {
  std::vector<double> values;  // one per group
  double baseline = 0.0;       // f(background mean)
  double prediction = 0.0;     // f(sample)
};

// Positive-class confidence of a model on flat feature rows (Batch::Features layout).
ValueFunction ModelValueFunction(const Model& model);

// One group per local variable (its whole window) and one per (OCI, block lag).
std::vector<FeatureGroup> DefaultGroups(const std::vector<std::string>& local_names,
                                        std::size_t local_window,
                                        const std::vector<std::string>& oci_names,
                                        std::size_t oci_window);

// Coalition values replace absent groups by the background mean. Every
// permutation telescopes from the baseline to the prediction, so the values
// always sum to prediction - baseline.
Attribution ShapleyEstimate(const ValueFunction& f, const std::vector<double>& sample,
                            const std::vector<std::vector<double>>& background,
                            const std::vector<FeatureGroup>& groups, std::size_t n_permutations,
                            Rng& rng);

// Enumerates all 2^k coalitions; k <= 12.
Attribution ExactShapley(const ValueFunction& f, const std::vector<double>& sample,
                         const std::vector<std::vector<double>>& background,
                         const std::vector<FeatureGroup>& groups);

struct LagAggregate {
  std::vector<std::string> oci_names;
  Matrix oci;  // [C_oci x L_oci] mean |value|, column = block lag
  std::vector<std::string> local_names;
  std::vector<double> local;  // mean |value| per local group
};

// Mean absolute attribution per group cell over samples. With `scaled`, each
// OCI row is min-max scaled to [0, 1].
LagAggregate AggregateAbsByLag(const std::vector<Attribution>& attributions,
                               const std::vector<FeatureGroup>& groups, bool scaled);

// Rows = groups, columns = samples.
void WriteAttributionCsv(const std::filesystem::path& path, const std::vector<FeatureGroup>& groups,
                         const std::vector<Attribution>& attributions);
// Columns variable,kind,lag0..lag{L-1},window. OCI rows fill the lag cells,
// local rows the window cell.
void WriteLagAggregateCsv(const std::filesystem::path& path, const LagAggregate& aggregate);

}  // namespace cgnn
