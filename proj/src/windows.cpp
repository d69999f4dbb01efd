#include "cgnn/windows.hpp"

#include <algorithm>
#include <cmath>

#include "cgnn/error.hpp"

namespace cgnn {

std::vector<double> Batch::Features(std::size_t b) const {
  CGNN_CHECK(b < size, ErrorKind::kContract, "sample index out of range");
  const std::size_t nl = num_local * local_window;
  const std::size_t no = num_oci * oci_window;
  std::vector<double> out(nl + no);
  std::copy_n(local.begin() + static_cast<std::ptrdiff_t>(b * nl), nl, out.begin());
  std::copy_n(oci.begin() + static_cast<std::ptrdiff_t>(b * no), no,
              out.begin() + static_cast<std::ptrdiff_t>(nl));
  return out;
}

Batch Batch::FromFeatures(const std::vector<std::vector<double>>& rows, std::size_t num_local,
                          std::size_t local_window, std::size_t num_oci, std::size_t oci_window) {
  Batch b;
  b.size = rows.size();
  b.num_local = num_local;
  b.local_window = local_window;
  b.num_oci = num_oci;
  b.oci_window = oci_window;
  const std::size_t nl = num_local * local_window;
  for (const auto& r : rows) {
    CGNN_CHECK(r.size() == b.num_features(), ErrorKind::kDimension, "feature vector length mismatch");
    b.local.insert(b.local.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(nl));
    b.oci.insert(b.oci.end(), r.begin() + static_cast<std::ptrdiff_t>(nl), r.end());
  }
  b.labels.assign(rows.size(), 0);
  return b;
}

void Batch::Validate() const {
  CGNN_CHECK(size >= 1, ErrorKind::kContract, "empty batch");
  CGNN_CHECK(local.size() == size * num_local * local_window &&
                 oci.size() == size * num_oci * oci_window && labels.size() == size,
             ErrorKind::kDimension, "batch buffers do not match their dimensions");
  for (int y : labels) CGNN_CHECK(y == 0 || y == 1, ErrorKind::kLabel, "labels must be 0 or 1");
}

std::size_t WindowSpec::span() const { return std::max(local_window, stride * oci_window); }

void WindowSpec::Validate() const {
  CGNN_CHECK(local_window >= 1 && oci_window >= 1 && stride >= 1, ErrorKind::kConfig,
             "window lengths and stride must be >= 1");
  CGNN_CHECK(horizon >= 1, ErrorKind::kContract, "horizon must be >= 1");
  CGNN_CHECK(train_fraction > 0 && val_fraction >= 0 && train_fraction + val_fraction < 1,
             ErrorKind::kConfig, "split fractions must leave room for a test split");
}

WindowSet::WindowSet(const TimeSeriesDataset& data, const WindowSpec& spec) : spec_(spec) {
  spec.Validate();
  data.Validate();
  const std::size_t t_total = data.num_steps();
  CGNN_CHECK(t_total >= spec.span() + spec.horizon, ErrorKind::kInsufficientData,
             "series too short for the lag windows and horizon");
  for (auto v : data.NodeOrder()) {
    (data.kinds[v] == VariableKind::kLocal ? local_vars_ : oci_vars_).push_back(v);
    node_names_.push_back(data.names[v]);
  }
  CGNN_CHECK(!node_names_.empty(), ErrorKind::kEmptyGraph, "dataset has no input variables");
  values_ = data.values;
  const auto target = static_cast<Eigen::Index>(data.target_index());
  labels_.resize(t_total);
  for (std::size_t t = 0; t < t_total; ++t) {
    const double y = data.values(static_cast<Eigen::Index>(t), target);
    CGNN_CHECK(y == 0.0 || y == 1.0, ErrorKind::kLabel, "target column must be binary");
    labels_[t] = static_cast<int>(y);
  }
  first_anchor_ = spec.span() - 1;
  count_ = t_total - spec.span() - spec.horizon + 1;
}

Batch WindowSet::MakeBatch(std::span<const std::size_t> samples) const {
  Batch b;
  b.size = samples.size();
  b.num_local = num_local();
  b.local_window = spec_.local_window;
  b.num_oci = num_oci();
  b.oci_window = spec_.oci_window;
  b.local.reserve(b.size * b.num_local * b.local_window);
  b.oci.reserve(b.size * b.num_oci * b.oci_window);
  const std::size_t k = spec_.stride;
  for (auto s : samples) {
    CGNN_CHECK(s < count_, ErrorKind::kContract, "sample index out of range");
    const std::size_t t = anchor(s);
    for (auto v : local_vars_)
      for (std::size_t l = 0; l < spec_.local_window; ++l)
        b.local.push_back(values_(static_cast<Eigen::Index>(t + 1 - spec_.local_window + l),
                                  static_cast<Eigen::Index>(v)));
    for (auto v : oci_vars_)
      for (std::size_t m = 0; m < spec_.oci_window; ++m) {
        // Block m covers fine steps (t - k*(L - m), t - k*(L - m - 1)].
        const std::size_t end = t + 1 - k * (spec_.oci_window - m - 1);
        double acc = 0.0;
        for (std::size_t u = end - k; u < end; ++u)
          acc += values_(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v));
        b.oci.push_back(acc / static_cast<double>(k));
      }
    b.labels.push_back(label(s));
  }
  return b;
}

Splits WindowSet::ChronologicalSplits() const {
  const std::size_t t_total = labels_.size();
  Splits out;
  out.train_end = static_cast<std::size_t>(std::floor(spec_.train_fraction * static_cast<double>(t_total)));
  out.val_end = static_cast<std::size_t>(
      std::floor((spec_.train_fraction + spec_.val_fraction) * static_cast<double>(t_total)));
  for (std::size_t i = 0; i < count_; ++i) {
    const std::size_t lo = input_begin(i), hi = label_time(i);
    if (hi < out.train_end)
      out.train.push_back(i);
    else if (lo >= out.train_end && hi < out.val_end)
      out.val.push_back(i);
    else if (lo >= out.val_end)
      out.test.push_back(i);
  }
  return out;
}

}  // namespace cgnn
