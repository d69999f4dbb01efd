#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cgnn/stats.hpp"

namespace cgnn {

enum class VariableKind { kTarget, kLocal, kOci };

const char* ToString(VariableKind kind);
VariableKind ParseVariableKind(const std::string& name);

// Aligned multivariate series, one column per variable and one row per step.
struct TimeSeriesDataset {
  Matrix values;  // T x C
  std::vector<std::string> names;
  std::vector<VariableKind> kinds;

  std::size_t num_steps() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t num_vars() const { return static_cast<std::size_t>(values.cols()); }
  std::size_t target_index() const;
  // Indices of every non-target variable, locals first, then OCIs, each group
  // in column order. This is the node order of every adjacency matrix.
  std::vector<std::size_t> NodeOrder() const;
  std::size_t IndexOf(const std::string& name) const;

  // Shape consistency, finite values, exactly one target.
  void Validate() const;
};

struct PreprocessOptions {
  // Raw steps averaged into one coarse step (1 = no resampling).
  std::size_t block = 1;
  // Seasonal period in coarse steps; values < 2 skip deseasonalization.
  std::size_t period = 12;
};

// Block-mean resampling, removal of the per-phase climatological mean, then
// per-column centering. The output satisfies |column mean| < 1e-9.
TimeSeriesDataset PreprocessCausalStationarity(const TimeSeriesDataset& raw,
                                                const PreprocessOptions& options);

}  // namespace cgnn
