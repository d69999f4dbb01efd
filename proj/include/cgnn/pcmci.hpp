#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgnn/dataset.hpp"
#include "cgnn/stats.hpp"

namespace cgnn {

// A lagged variable X^{var}_{t - lag}.
struct LaggedVar {
  std::size_t var = 0;
  int lag = 0;

  friend auto operator<=>(const LaggedVar&, const LaggedVar&) = default;
};

// A-priori admissible links (source, -lag) -> target.
class LinkAssumptions {
 public:
  LinkAssumptions() = default;
  LinkAssumptions(std::size_t num_vars, int tau_max);

  // Mediator ordering: OCIs may drive OCIs, locals and the
  // target; locals may drive locals and the target; the target drives
  // nothing unless allow_target_autolinks is set.
  static LinkAssumptions MediatorOrdering(const std::vector<VariableKind>& kinds, int tau_max,
                                          bool allow_target_autolinks = false);
  // Every lagged pair plus every contemporaneous pair between distinct variables.
  static LinkAssumptions Complete(std::size_t num_vars, int tau_max);

  void Allow(std::size_t source, int lag, std::size_t target);
  void ForbidAllInto(std::size_t target);

  bool Allows(std::size_t source, int lag, std::size_t target) const;
  // Sorted by (var, lag).
  const std::vector<LaggedVar>& CandidatesOf(std::size_t target) const;
  std::size_t num_vars() const { return allowed_.size(); }
  int tau_max() const { return tau_max_; }
  std::size_t CountLagged() const;

 private:
  int tau_max_ = 0;
  std::vector<std::vector<LaggedVar>> allowed_;
};

struct CausalLink {
  std::size_t source = 0;
  int lag = 0;
  std::size_t target = 0;
  double mci = 0.0;
  double pvalue = 1.0;

  // Lag-0 links are kept for diagnostics only and carry no direction.
  bool undirected() const { return lag == 0; }
};

struct CausalGraph {
  std::vector<std::string> variables;
  std::vector<VariableKind> kinds;
  int tau_max = 0;
  double alpha = 0.05;
  std::vector<CausalLink> links;

  bool Contains(std::size_t source, int lag, std::size_t target) const;
  // Directed (lag >= 1) variable pairs, ignoring lags.
  std::vector<std::pair<std::size_t, std::size_t>> DirectedPairs() const;
};

struct PcmciConfig {
  int tau_max = 6;
  double alpha = 0.05;
  double alpha_pc = 0.2;
  int p_max = 10;  // largest PC1 conditioning set
  int p_x = 10;    // source parents used in MCI
};

// Parents found by the PC1 phase, sorted by decreasing minimum |r|.
struct ParentSet {
  std::vector<LaggedVar> parents;
  std::map<LaggedVar, double> min_abs_r;
  std::map<LaggedVar, double> max_pvalue;
};

// Rows t in [2*tau_max, T) of every lagged column. The 2*tau_max offset keeps
// the sample identical for MCI tests, whose source parents reach that far back.
class LaggedDesign {
 public:
  LaggedDesign(const TimeSeriesDataset& data, int tau_max);

  std::size_t num_samples() const { return n_; }
  Vector Column(const LaggedVar& v) const;
  Matrix Columns(const std::vector<LaggedVar>& vars) const;

 private:
  const TimeSeriesDataset& data_;
  int tau_max_;
  std::size_t start_;
  std::size_t n_;
};

ParentSet Pc1SelectParents(const TimeSeriesDataset& data, std::size_t target,
                           const LinkAssumptions& assumptions, const PcmciConfig& config);

CITestResult MciTest(const TimeSeriesDataset& data, const LaggedVar& source, std::size_t target,
                     const std::vector<LaggedVar>& parents_of_target,
                     const std::vector<LaggedVar>& parents_of_source, int p_x, int tau_max);

// Every allowed link with its MCI statistic, before thresholding.
std::vector<CausalLink> RunMci(const TimeSeriesDataset& data, const LinkAssumptions& assumptions,
                               const std::vector<ParentSet>& parents, const PcmciConfig& config);

CausalGraph ThresholdLinks(const TimeSeriesDataset& data, std::vector<CausalLink> tested,
                           int tau_max, double alpha);

CausalGraph RunPcmci(const TimeSeriesDataset& data, const LinkAssumptions& assumptions,
                     const PcmciConfig& config = {});

nlohmann::json GraphToJson(const CausalGraph& graph);
CausalGraph GraphFromJson(const nlohmann::json& json);
std::string GraphToDot(const CausalGraph& graph);

struct EdgeScore {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};
// Compares directed variable pairs (lags >= 1 collapsed).
EdgeScore ScoreEdges(const CausalGraph& estimated, const CausalGraph& truth);

}  // namespace cgnn
