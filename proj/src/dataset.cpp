#include "cgnn/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "cgnn/error.hpp"

namespace cgnn {

const char* ToString(VariableKind kind) {
  switch (kind) {
    case VariableKind::kTarget: return "target";
    case VariableKind::kLocal: return "local";
    case VariableKind::kOci: return "oci";
  }
  return "?";
}

VariableKind ParseVariableKind(const std::string& name) {
  if (name == "target") return VariableKind::kTarget;
  if (name == "local") return VariableKind::kLocal;
  if (name == "oci") return VariableKind::kOci;
  throw Error(ErrorKind::kConfig, "unknown variable kind '" + name + "'");
}

std::size_t TimeSeriesDataset::target_index() const {
  const auto it = std::find(kinds.begin(), kinds.end(), VariableKind::kTarget);
  CGNN_CHECK(it != kinds.end(), ErrorKind::kContract, "dataset has no target variable");
  return static_cast<std::size_t>(it - kinds.begin());
}

std::vector<std::size_t> TimeSeriesDataset::NodeOrder() const {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < kinds.size(); ++i)
    if (kinds[i] == VariableKind::kLocal) order.push_back(i);
  for (std::size_t i = 0; i < kinds.size(); ++i)
    if (kinds[i] == VariableKind::kOci) order.push_back(i);
  return order;
}

std::size_t TimeSeriesDataset::IndexOf(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  CGNN_CHECK(it != names.end(), ErrorKind::kConfig, "unknown variable '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

void TimeSeriesDataset::Validate() const {
  CGNN_CHECK(names.size() == num_vars() && kinds.size() == num_vars(), ErrorKind::kDimension,
             "dataset metadata does not match its column count");
  CGNN_CHECK(std::count(kinds.begin(), kinds.end(), VariableKind::kTarget) == 1,
             ErrorKind::kContract, "dataset must have exactly one target variable");
  CGNN_CHECK(values.allFinite(), ErrorKind::kInsufficientData, "dataset has missing values");
}

TimeSeriesDataset PreprocessCausalStationarity(const TimeSeriesDataset& raw,
                                                const PreprocessOptions& options) {
  raw.Validate();
  CGNN_CHECK(options.block >= 1, ErrorKind::kConfig, "resampling block must be >= 1");
  const std::size_t coarse = raw.num_steps() / options.block;
  const std::size_t period = options.period >= 2 ? options.period : 1;
  CGNN_CHECK(coarse >= 2 * period && coarse >= 2, ErrorKind::kInsufficientData,
             "need at least two seasonal cycles after resampling (have " +
                 std::to_string(coarse) + " steps)");

  TimeSeriesDataset out;
  out.names = raw.names;
  out.kinds = raw.kinds;
  out.values.resize(static_cast<Eigen::Index>(coarse), raw.values.cols());
  for (std::size_t s = 0; s < coarse; ++s) {
    out.values.row(static_cast<Eigen::Index>(s)) =
        raw.values.middleRows(static_cast<Eigen::Index>(s * options.block),
                              static_cast<Eigen::Index>(options.block))
            .colwise()
            .mean();
  }

  if (period >= 2) {
    for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
      std::vector<double> sum(period, 0.0);
      std::vector<std::size_t> count(period, 0);
      for (std::size_t s = 0; s < coarse; ++s) {
        sum[s % period] += out.values(static_cast<Eigen::Index>(s), c);
        ++count[s % period];
      }
      for (std::size_t s = 0; s < coarse; ++s)
        out.values(static_cast<Eigen::Index>(s), c) -=
            sum[s % period] / static_cast<double>(count[s % period]);
    }
  }
  out.values.rowwise() -= out.values.colwise().mean();
  return out;
}

}  // namespace cgnn
