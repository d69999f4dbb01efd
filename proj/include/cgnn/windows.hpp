#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cgnn/dataset.hpp"

namespace cgnn {

// Lag windows for a batch of samples. local holds [B][C_l][L_l] and oci holds
// [B][C_oci][L_oci], both row-major and oldest step first.
struct Batch {
  std::size_t size = 0;
  std::size_t num_local = 0;
  std::size_t local_window = 0;
  std::size_t num_oci = 0;
  std::size_t oci_window = 0;
  std::vector<double> local;
  std::vector<double> oci;
  std::vector<int> labels;

  std::size_t num_features() const { return num_local * local_window + num_oci * oci_window; }
  // Flat feature vector of one sample: the local block, then the OCI block.
  std::vector<double> Features(std::size_t b) const;
  // Inverse of Features; labels are set to 0.
  static Batch FromFeatures(const std::vector<std::vector<double>>& rows, std::size_t num_local,
                            std::size_t local_window, std::size_t num_oci, std::size_t oci_window);
  void Validate() const;
};

struct WindowSpec {
  std::size_t local_window = 39;
  // Number of OCI block means, each averaging `stride` fine steps.
  std::size_t oci_window = 10;
  std::size_t stride = 4;
  std::size_t horizon = 1;
  double train_fraction = 0.70;
  double val_fraction = 0.15;

  // Fine steps covered by the inputs of one sample.
  std::size_t span() const;
  void Validate() const;
};

struct Splits {
  std::vector<std::size_t> train, val, test;  // sample indices, chronological
  std::size_t train_end = 0;                  // first fine step of validation
  std::size_t val_end = 0;                    // first fine step of test
};

// Every sample anchored at fine step t uses inputs from [t - span + 1, t] and
// the label at t + horizon, read from the dataset's binary target column.
class WindowSet {
 public:
  WindowSet(const TimeSeriesDataset& data, const WindowSpec& spec);

  std::size_t size() const { return count_; }
  const WindowSpec& spec() const { return spec_; }
  std::size_t num_local() const { return local_vars_.size(); }
  std::size_t num_oci() const { return oci_vars_.size(); }
  // Node names in node order (locals, then OCIs).
  const std::vector<std::string>& node_names() const { return node_names_; }

  std::size_t anchor(std::size_t i) const { return first_anchor_ + i; }
  std::size_t input_begin(std::size_t i) const { return anchor(i) + 1 - spec_.span(); }
  std::size_t label_time(std::size_t i) const { return anchor(i) + spec_.horizon; }
  int label(std::size_t i) const { return labels_[label_time(i)]; }

  Batch MakeBatch(std::span<const std::size_t> samples) const;
  // Chronological train/val/test split over fine time. A sample belongs to a
  // split only when its inputs and its label both fall inside it.
  Splits ChronologicalSplits() const;

 private:
  WindowSpec spec_;
  Matrix values_;
  std::vector<std::size_t> local_vars_, oci_vars_;
  std::vector<std::string> node_names_;
  std::vector<int> labels_;
  std::size_t first_anchor_ = 0;
  std::size_t count_ = 0;
};

}  // namespace cgnn
