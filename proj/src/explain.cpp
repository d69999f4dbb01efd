#include "cgnn/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cgnn/error.hpp"
#include "cgnn/io.hpp"

namespace cgnn {

namespace {

constexpr std::size_t kMaxExactGroups = 12;

std::vector<double> BackgroundMean(const std::vector<std::vector<double>>& background, std::size_t dim) {
  CGNN_CHECK(!background.empty(), ErrorKind::kContract, "background set is empty");
  std::vector<double> mean(dim, 0.0);
  for (const auto& row : background) {
    CGNN_CHECK(row.size() == dim, ErrorKind::kDimension, "background row length mismatch");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += row[i];
  }
  for (auto& m : mean) m /= static_cast<double>(background.size());
  return mean;
}

void CheckPartition(const std::vector<FeatureGroup>& groups, std::size_t dim) {
  CGNN_CHECK(!groups.empty(), ErrorKind::kContract, "no feature groups");
  std::vector<int> seen(dim, 0);
  for (const auto& g : groups) {
    CGNN_CHECK(!g.coords.empty(), ErrorKind::kContract, "feature group '" + g.name + "' is empty");
    for (auto c : g.coords) {
      CGNN_CHECK(c < dim, ErrorKind::kContract, "feature group '" + g.name + "' is out of range");
      CGNN_CHECK(++seen[c] == 1, ErrorKind::kContract, "feature groups overlap at coordinate " + std::to_string(c));
    }
  }
  CGNN_CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }), ErrorKind::kContract,
             "feature groups do not cover every coordinate");
}

std::vector<double> Evaluate(const ValueFunction& f, const std::vector<std::vector<double>>& rows) {
  auto out = f(rows);
  CGNN_CHECK(out.size() == rows.size(), ErrorKind::kContract, "value function returned the wrong count");
  return out;
}

}  // namespace

ValueFunction ModelValueFunction(const Model& model) {
  return [model](const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return std::vector<double>{};
    const auto& c = model.config();
    return model.Predict(Batch::FromFeatures(rows, c.num_local, c.local_window, c.num_oci, c.oci_window));
  };
}

std::vector<FeatureGroup> DefaultGroups(const std::vector<std::string>& local_names,
                                        std::size_t local_window,
                                        const std::vector<std::string>& oci_names,
                                        std::size_t oci_window) {
  std::vector<FeatureGroup> groups;
  std::size_t offset = 0;
  for (const auto& name : local_names) {
    FeatureGroup g{name, name, VariableKind::kLocal, -1, {}};
    for (std::size_t l = 0; l < local_window; ++l) g.coords.push_back(offset++);
    groups.push_back(std::move(g));
  }
  for (const auto& name : oci_names) {
    for (std::size_t m = 0; m < oci_window; ++m) {
      const int lag = static_cast<int>(oci_window - 1 - m);
      groups.push_back({name + "@lag" + std::to_string(lag), name, VariableKind::kOci, lag, {offset++}});
    }
  }
  return groups;
}

Attribution ShapleyEstimate(const ValueFunction& f, const std::vector<double>& sample,
                            const std::vector<std::vector<double>>& background,
                            const std::vector<FeatureGroup>& groups, std::size_t n_permutations,
                            Rng& rng) {
  CGNN_CHECK(n_permutations >= 1, ErrorKind::kContract, "need at least one permutation");
  const auto base = BackgroundMean(background, sample.size());
  CheckPartition(groups, sample.size());
  const std::size_t k = groups.size();
  Attribution out;
  out.values.assign(k, 0.0);
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<double>> rows(k + 1);
  for (std::size_t p = 0; p < n_permutations; ++p) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> z = base;
    rows[0] = z;
    for (std::size_t q = 0; q < k; ++q) {
      for (auto c : groups[perm[q]].coords) z[c] = sample[c];
      rows[q + 1] = z;
    }
    const auto v = Evaluate(f, rows);
    for (std::size_t q = 0; q < k; ++q) out.values[perm[q]] += v[q + 1] - v[q];
    if (p == 0) {
      out.baseline = v.front();
      out.prediction = v.back();
    }
  }
  for (auto& x : out.values) x /= static_cast<double>(n_permutations);
  return out;
}

Attribution ExactShapley(const ValueFunction& f, const std::vector<double>& sample,
                         const std::vector<std::vector<double>>& background,
                         const std::vector<FeatureGroup>& groups) {
  CGNN_CHECK(groups.size() <= kMaxExactGroups, ErrorKind::kComplexityGuard,
             "exact Shapley enumeration is limited to " + std::to_string(kMaxExactGroups) + " groups");
  const auto base = BackgroundMean(background, sample.size());
  CheckPartition(groups, sample.size());
  const std::size_t k = groups.size();
  const std::size_t n = std::size_t{1} << k;
  std::vector<std::vector<double>> rows(n, base);
  for (std::size_t mask = 0; mask < n; ++mask)
    for (std::size_t g = 0; g < k; ++g)
      if (mask >> g & 1U)
        for (auto c : groups[g].coords) rows[mask][c] = sample[c];
  const auto v = Evaluate(f, rows);

  // weight(s) = s! (k - s - 1)! / k!
  std::vector<double> weight(k);
  for (std::size_t s = 0; s < k; ++s)
    weight[s] = std::exp(std::lgamma(static_cast<double>(s) + 1) +
                         std::lgamma(static_cast<double>(k - s)) - std::lgamma(static_cast<double>(k) + 1));
  Attribution out;
  out.values.assign(k, 0.0);
  for (std::size_t mask = 0; mask < n; ++mask) {
    const auto s = static_cast<std::size_t>(__builtin_popcountll(mask));
    for (std::size_t g = 0; g < k; ++g)
      if (!(mask >> g & 1U)) out.values[g] += weight[s] * (v[mask | (std::size_t{1} << g)] - v[mask]);
  }
  out.baseline = v.front();
  out.prediction = v.back();
  return out;
}

LagAggregate AggregateAbsByLag(const std::vector<Attribution>& attributions,
                               const std::vector<FeatureGroup>& groups, bool scaled) {
  LagAggregate agg;
  int max_lag = -1;
  for (const auto& g : groups) {
    if (g.kind == VariableKind::kOci) {
      CGNN_CHECK(g.lag >= 0, ErrorKind::kContract, "OCI group without a lag");
      if (std::find(agg.oci_names.begin(), agg.oci_names.end(), g.variable) == agg.oci_names.end())
        agg.oci_names.push_back(g.variable);
      max_lag = std::max(max_lag, g.lag);
    } else {
      agg.local_names.push_back(g.name);
    }
  }
  agg.oci = Matrix::Zero(static_cast<Eigen::Index>(agg.oci_names.size()), max_lag + 1);
  agg.local.assign(agg.local_names.size(), 0.0);
  if (attributions.empty()) return agg;
  for (const auto& a : attributions) {
    CGNN_CHECK(a.values.size() == groups.size(), ErrorKind::kContract,
               "attribution does not match the feature groups");
    std::size_t local_idx = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double v = std::abs(a.values[g]);
      if (groups[g].kind == VariableKind::kOci) {
        const auto row = std::find(agg.oci_names.begin(), agg.oci_names.end(), groups[g].variable) -
                         agg.oci_names.begin();
        agg.oci(row, groups[g].lag) += v;
      } else {
        agg.local[local_idx++] += v;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(attributions.size());
  agg.oci *= inv;
  for (auto& x : agg.local) x *= inv;
  if (scaled) {
    for (Eigen::Index r = 0; r < agg.oci.rows(); ++r) {
      const double lo = agg.oci.row(r).minCoeff(), hi = agg.oci.row(r).maxCoeff();
      if (hi > lo)
        agg.oci.row(r) = (agg.oci.row(r).array() - lo) / (hi - lo);
      else
        agg.oci.row(r).setZero();
    }
  }
  return agg;
}

void WriteAttributionCsv(const std::filesystem::path& path, const std::vector<FeatureGroup>& groups,
                         const std::vector<Attribution>& attributions) {
  std::vector<std::string> header{"feature"};
  for (std::size_t s = 0; s < attributions.size(); ++s) header.push_back("sample" + std::to_string(s));
  Matrix values(static_cast<Eigen::Index>(groups.size()), static_cast<Eigen::Index>(attributions.size()));
  std::vector<std::string> labels;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    labels.push_back(groups[g].name);
    for (std::size_t s = 0; s < attributions.size(); ++s)
      values(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(s)) = attributions[s].values.at(g);
  }
  WriteLabeledCsv(path, header, labels, values);
}

void WriteLagAggregateCsv(const std::filesystem::path& path, const LagAggregate& agg) {
  std::ostringstream os;
  os << "variable,kind";
  for (Eigen::Index l = 0; l < agg.oci.cols(); ++l) os << ",lag" << l;
  os << ",window\n";
  for (std::size_t r = 0; r < agg.oci_names.size(); ++r) {
    os << agg.oci_names[r] << ",oci";
    for (Eigen::Index l = 0; l < agg.oci.cols(); ++l)
      os << ',' << FormatDouble(agg.oci(static_cast<Eigen::Index>(r), l));
    os << ",\n";
  }
  for (std::size_t r = 0; r < agg.local_names.size(); ++r) {
    os << agg.local_names[r] << ",local";
    for (Eigen::Index l = 0; l < agg.oci.cols(); ++l) os << ',';
    os << ',' << FormatDouble(agg.local[r]) << '\n';
  }
  WriteText(path, os.str());
}

}  // namespace cgnn
