#include "cgnn/pcmci.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cgnn/error.hpp"

namespace cgnn {

// --- LinkAssumptions ----------------------------------------------------------

LinkAssumptions::LinkAssumptions(std::size_t num_vars, int tau_max)
    : tau_max_(tau_max), allowed_(num_vars) {
  CGNN_CHECK(tau_max >= 0, ErrorKind::kConfig, "tau_max must be nonnegative");
}

LinkAssumptions LinkAssumptions::MediatorOrdering(const std::vector<VariableKind>& kinds,
                                                  int tau_max, bool allow_target_autolinks) {
  LinkAssumptions out(kinds.size(), tau_max);
  for (std::size_t j = 0; j < kinds.size(); ++j) {
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      bool ok = false;
      switch (kinds[i]) {
        case VariableKind::kOci:
          ok = true;
          break;
        case VariableKind::kLocal:
          ok = kinds[j] != VariableKind::kOci;
          break;
        case VariableKind::kTarget:
          ok = allow_target_autolinks && i == j;
          break;
      }
      if (!ok) continue;
      for (int lag = 0; lag <= tau_max; ++lag) {
        if (lag == 0 && i == j) continue;
        out.Allow(i, lag, j);
      }
    }
  }
  return out;
}

LinkAssumptions LinkAssumptions::Complete(std::size_t num_vars, int tau_max) {
  LinkAssumptions out(num_vars, tau_max);
  for (std::size_t j = 0; j < num_vars; ++j)
    for (std::size_t i = 0; i < num_vars; ++i)
      for (int lag = 0; lag <= tau_max; ++lag)
        if (lag > 0 || i != j) out.Allow(i, lag, j);
  return out;
}

void LinkAssumptions::Allow(std::size_t source, int lag, std::size_t target) {
  CGNN_CHECK(source < allowed_.size() && target < allowed_.size(), ErrorKind::kConfig,
             "link assumption references an unknown variable");
  CGNN_CHECK(lag >= 0 && lag <= tau_max_, ErrorKind::kConfig, "link lag outside [0, tau_max]");
  CGNN_CHECK(lag > 0 || source != target, ErrorKind::kConfig, "a variable cannot cause itself at lag 0");
  auto& list = allowed_[target];
  const LaggedVar v{source, lag};
  const auto it = std::lower_bound(list.begin(), list.end(), v);
  if (it == list.end() || *it != v) list.insert(it, v);
}

void LinkAssumptions::ForbidAllInto(std::size_t target) {
  CGNN_CHECK(target < allowed_.size(), ErrorKind::kConfig, "unknown variable");
  allowed_[target].clear();
}

bool LinkAssumptions::Allows(std::size_t source, int lag, std::size_t target) const {
  if (target >= allowed_.size()) return false;
  return std::binary_search(allowed_[target].begin(), allowed_[target].end(),
                            LaggedVar{source, lag});
}

const std::vector<LaggedVar>& LinkAssumptions::CandidatesOf(std::size_t target) const {
  CGNN_CHECK(target < allowed_.size(), ErrorKind::kConfig, "unknown variable");
  return allowed_[target];
}

std::size_t LinkAssumptions::CountLagged() const {
  std::size_t n = 0;
  for (const auto& list : allowed_)
    n += static_cast<std::size_t>(
        std::count_if(list.begin(), list.end(), [](const LaggedVar& v) { return v.lag > 0; }));
  return n;
}

// --- CausalGraph --------------------------------------------------------------

bool CausalGraph::Contains(std::size_t source, int lag, std::size_t target) const {
  return std::any_of(links.begin(), links.end(), [&](const CausalLink& l) {
    return l.source == source && l.lag == lag && l.target == target;
  });
}

std::vector<std::pair<std::size_t, std::size_t>> CausalGraph::DirectedPairs() const {
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& l : links)
    if (!l.undirected()) pairs.emplace(l.source, l.target);
  return {pairs.begin(), pairs.end()};
}

// --- lagged design ------------------------------------------------------------

LaggedDesign::LaggedDesign(const TimeSeriesDataset& data, int tau_max)
    : data_(data), tau_max_(tau_max), start_(2 * static_cast<std::size_t>(tau_max)), n_(0) {
  CGNN_CHECK(data.num_steps() > start_, ErrorKind::kInsufficientData,
             "series shorter than 2 * tau_max");
  n_ = data.num_steps() - start_;
}

Vector LaggedDesign::Column(const LaggedVar& v) const {
  CGNN_CHECK(v.lag >= 0 && v.lag <= 2 * tau_max_, ErrorKind::kContract, "lag beyond design range");
  return data_.values.col(static_cast<Eigen::Index>(v.var))
      .segment(static_cast<Eigen::Index>(start_ - static_cast<std::size_t>(v.lag)),
               static_cast<Eigen::Index>(n_));
}

Matrix LaggedDesign::Columns(const std::vector<LaggedVar>& vars) const {
  Matrix z(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(vars.size()));
  for (std::size_t c = 0; c < vars.size(); ++c) z.col(static_cast<Eigen::Index>(c)) = Column(vars[c]);
  return z;
}

namespace {

// CI test used inside discovery. A residual with no variance means X or Y is
// fully explained by the conditioning set, which counts as independence.
CITestResult SweepTest(const LaggedDesign& design, const LaggedVar& x, const LaggedVar& y,
                       const std::vector<LaggedVar>& conds) {
  const std::size_t n = design.num_samples();
  CGNN_CHECK(n > conds.size() + 2, ErrorKind::kInsufficientData,
             "not enough samples for a conditioning set of " + std::to_string(conds.size()));
  CITestResult res;
  res.dof = static_cast<int>(n) - 2 - static_cast<int>(conds.size());
  const auto r = TryPartialCorrelation(design.Column(x), design.Column(y), design.Columns(conds));
  if (!r) {
    res.statistic = 0.0;
    res.pvalue = 1.0;
    return res;
  }
  res.statistic = *r;
  res.pvalue = ParCorrPValue(*r, n, conds.size());
  return res;
}

void SortByStrength(std::vector<LaggedVar>& parents, const std::map<LaggedVar, double>& strength) {
  // Stable on a (var, lag)-sorted list, so ties keep lexicographic order.
  std::sort(parents.begin(), parents.end());
  std::stable_sort(parents.begin(), parents.end(), [&](const LaggedVar& a, const LaggedVar& b) {
    return strength.at(a) > strength.at(b);
  });
}

}  // namespace

// --- PC1 ----------------------------------------------------------------------

ParentSet Pc1SelectParents(const TimeSeriesDataset& data, std::size_t target,
                           const LinkAssumptions& assumptions, const PcmciConfig& config) {
  CGNN_CHECK(config.tau_max >= 1, ErrorKind::kConfig, "tau_max must be >= 1");
  CGNN_CHECK(config.alpha_pc > 0.0 && config.alpha_pc < 1.0, ErrorKind::kConfig,
             "alpha_pc must be in (0,1)");
  CGNN_CHECK(assumptions.tau_max() <= config.tau_max, ErrorKind::kConfig,
             "link assumptions reach beyond tau_max");
  const LaggedDesign design(data, config.tau_max);

  ParentSet out;
  for (const auto& c : assumptions.CandidatesOf(target)) {
    if (c.lag < 1) continue;
    out.parents.push_back(c);
    out.min_abs_r[c] = std::numeric_limits<double>::infinity();
    out.max_pvalue[c] = 0.0;
  }
  const std::size_t max_conds = static_cast<std::size_t>(std::max(config.p_max, 0));
  CGNN_CHECK(design.num_samples() > std::min(max_conds, out.parents.size()) + 2,
             ErrorKind::kInsufficientData, "effective sample too short for PC1");
  const LaggedVar y{target, 0};

  for (std::size_t q = 0; q <= max_conds; ++q) {
    if (out.parents.empty() || q > out.parents.size() - 1) break;
    std::vector<LaggedVar> removed;
    for (const auto& parent : out.parents) {
      std::vector<LaggedVar> conds;
      for (const auto& other : out.parents) {
        if (conds.size() == q) break;
        if (other != parent) conds.push_back(other);
      }
      const CITestResult res = SweepTest(design, parent, y, conds);
      auto& strength = out.min_abs_r[parent];
      strength = std::min(strength, std::abs(res.statistic));
      auto& pmax = out.max_pvalue[parent];
      pmax = std::max(pmax, res.pvalue);
      if (res.pvalue > config.alpha_pc) removed.push_back(parent);
    }
    for (const auto& r : removed) {
      out.parents.erase(std::find(out.parents.begin(), out.parents.end(), r));
      out.min_abs_r.erase(r);
      out.max_pvalue.erase(r);
    }
    SortByStrength(out.parents, out.min_abs_r);
  }
  return out;
}

// --- MCI ----------------------------------------------------------------------

CITestResult MciTest(const TimeSeriesDataset& data, const LaggedVar& source, std::size_t target,
                     const std::vector<LaggedVar>& parents_of_target,
                     const std::vector<LaggedVar>& parents_of_source, int p_x, int tau_max) {
  CGNN_CHECK(source.lag >= 0 && source.lag <= tau_max, ErrorKind::kContract,
             "tested lag outside [0, tau_max]");
  const LaggedDesign design(data, tau_max);
  std::vector<LaggedVar> conds;
  for (const auto& p : parents_of_target)
    if (p != source) conds.push_back(p);
  const std::size_t take = std::min(parents_of_source.size(), static_cast<std::size_t>(std::max(p_x, 0)));
  for (std::size_t k = 0; k < take; ++k) {
    const LaggedVar shifted{parents_of_source[k].var, parents_of_source[k].lag + source.lag};
    if (shifted == source || (shifted.var == target && shifted.lag == 0)) continue;
    if (std::find(conds.begin(), conds.end(), shifted) == conds.end()) conds.push_back(shifted);
  }
  return SweepTest(design, source, LaggedVar{target, 0}, conds);
}

std::vector<CausalLink> RunMci(const TimeSeriesDataset& data, const LinkAssumptions& assumptions,
                               const std::vector<ParentSet>& parents, const PcmciConfig& config) {
  CGNN_CHECK(parents.size() == data.num_vars(), ErrorKind::kContract,
             "need one parent set per variable");
  std::vector<CausalLink> tested;
  for (std::size_t j = 0; j < data.num_vars(); ++j) {
    for (const auto& cand : assumptions.CandidatesOf(j)) {
      const auto res = MciTest(data, cand, j, parents[j].parents, parents[cand.var].parents,
                               config.p_x, config.tau_max);
      tested.push_back({cand.var, cand.lag, j, res.statistic, res.pvalue});
    }
  }
  return tested;
}

CausalGraph ThresholdLinks(const TimeSeriesDataset& data, std::vector<CausalLink> tested,
                           int tau_max, double alpha) {
  CausalGraph g;
  g.variables = data.names;
  g.kinds = data.kinds;
  g.tau_max = tau_max;
  g.alpha = alpha;
  for (auto& l : tested)
    if (l.pvalue <= alpha) g.links.push_back(l);
  std::sort(g.links.begin(), g.links.end(), [](const CausalLink& a, const CausalLink& b) {
    return std::tie(a.target, a.source, a.lag) < std::tie(b.target, b.source, b.lag);
  });
  return g;
}

CausalGraph RunPcmci(const TimeSeriesDataset& data, const LinkAssumptions& assumptions,
                     const PcmciConfig& config) {
  data.Validate();
  CGNN_CHECK(assumptions.num_vars() == data.num_vars(), ErrorKind::kConfig,
             "link assumptions do not match the dataset");
  CGNN_CHECK(config.alpha > 0.0 && config.alpha <= 1.0, ErrorKind::kConfig, "alpha must be in (0,1]");
  std::vector<ParentSet> parents;
  parents.reserve(data.num_vars());
  for (std::size_t j = 0; j < data.num_vars(); ++j) {
    parents.push_back(Pc1SelectParents(data, j, assumptions, config));
    spdlog::debug("pc1: {} keeps {} parents", data.names[j], parents.back().parents.size());
  }
  return ThresholdLinks(data, RunMci(data, assumptions, parents, config), config.tau_max,
                        config.alpha);
}

// --- serialization ------------------------------------------------------------

nlohmann::json GraphToJson(const CausalGraph& graph) {
  nlohmann::json j;
  j["variables"] = graph.variables;
  std::vector<std::string> kinds;
  for (auto k : graph.kinds) kinds.emplace_back(ToString(k));
  j["kinds"] = kinds;
  j["tau_max"] = graph.tau_max;
  j["alpha"] = graph.alpha;
  auto links = nlohmann::json::array();
  for (const auto& l : graph.links) {
    links.push_back({{"source", graph.variables.at(l.source)},
                     {"lag", l.lag},
                     {"target", graph.variables.at(l.target)},
                     {"mci", l.mci},
                     {"pvalue", l.pvalue}});
  }
  j["links"] = links;
  return j;
}

CausalGraph GraphFromJson(const nlohmann::json& json) {
  try {
    CausalGraph g;
    g.variables = json.at("variables").get<std::vector<std::string>>();
    if (json.contains("kinds")) {
      for (const auto& k : json.at("kinds")) g.kinds.push_back(ParseVariableKind(k.get<std::string>()));
    }
    g.tau_max = json.at("tau_max").get<int>();
    g.alpha = json.at("alpha").get<double>();
    auto index = [&](const std::string& name) {
      const auto it = std::find(g.variables.begin(), g.variables.end(), name);
      CGNN_CHECK(it != g.variables.end(), ErrorKind::kConfig, "graph link names unknown variable " + name);
      return static_cast<std::size_t>(it - g.variables.begin());
    };
    for (const auto& l : json.at("links")) {
      CausalLink link;
      link.source = index(l.at("source").get<std::string>());
      link.lag = l.at("lag").get<int>();
      link.target = index(l.at("target").get<std::string>());
      link.mci = l.at("mci").get<double>();
      link.pvalue = l.at("pvalue").get<double>();
      g.links.push_back(link);
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed graph JSON: ") + e.what());
  }
}

std::string GraphToDot(const CausalGraph& graph) {
  std::ostringstream os;
  os << "digraph causal {\n";
  for (std::size_t i = 0; i < graph.variables.size(); ++i) {
    os << "  \"" << graph.variables[i] << "\"";
    if (i < graph.kinds.size()) os << " [kind=\"" << ToString(graph.kinds[i]) << "\"]";
    os << ";\n";
  }
  for (const auto& l : graph.links) {
    os << "  \"" << graph.variables[l.source] << "\" -> \"" << graph.variables[l.target]
       << "\" [label=\"" << l.lag << "\", mci=" << l.mci << ", color=\""
       << (l.mci >= 0 ? "red" : "blue") << "\"";
    if (l.undirected()) os << ", dir=none";
    os << "];\n";
  }
  os << "}\n";
  return os.str();
}

EdgeScore ScoreEdges(const CausalGraph& estimated, const CausalGraph& truth) {
  const auto est = estimated.DirectedPairs();
  const auto ref = truth.DirectedPairs();
  EdgeScore s;
  for (const auto& p : est) {
    if (std::binary_search(ref.begin(), ref.end(), p))
      ++s.true_positives;
    else
      ++s.false_positives;
  }
  s.false_negatives = ref.size() - s.true_positives;
  s.precision = est.empty() ? 1.0 : static_cast<double>(s.true_positives) / static_cast<double>(est.size());
  s.recall = ref.empty() ? 1.0 : static_cast<double>(s.true_positives) / static_cast<double>(ref.size());
  return s;
}

}  // namespace cgnn
