#include "cgnn/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include "cgnn/error.hpp"
#include "cgnn/io.hpp"

namespace cgnn {

namespace {

constexpr double kDivergenceBound = 1e8;

double Sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

// --- spec ---------------------------------------------------------------------

std::size_t ScmSpec::target_index() const {
  std::size_t idx = variables.size();
  for (std::size_t i = 0; i < variables.size(); ++i)
    if (variables[i].kind == VariableKind::kTarget) {
      CGNN_CHECK(idx == variables.size(), ErrorKind::kConfig, "SCM has more than one target");
      idx = i;
    }
  CGNN_CHECK(idx < variables.size(), ErrorKind::kConfig, "SCM has no target");
  return idx;
}

std::vector<VariableKind> ScmSpec::kinds() const {
  std::vector<VariableKind> out;
  for (const auto& v : variables) out.push_back(v.kind);
  return out;
}

std::vector<std::string> ScmSpec::names() const {
  std::vector<std::string> out;
  for (const auto& v : variables) out.push_back(v.name);
  return out;
}

std::size_t ScmSpec::MaxLag() const {
  std::size_t m = 0;
  for (const auto& l : links) m = std::max(m, l.lag);
  for (const auto& t : label.linear) m = std::max(m, horizon + t.lag);
  for (const auto& s : label.synergy) m = std::max({m, horizon + s.lag_a, horizon + s.lag_b});
  return m;
}

double ScmSpec::SpectralRadius() const {
  std::size_t p = 0;
  for (const auto& l : links) p = std::max(p, l.lag);
  if (p == 0) return 0.0;
  const std::size_t c = variables.size();
  const auto n = static_cast<Eigen::Index>(c * p);
  Matrix companion = Matrix::Zero(n, n);
  for (const auto& l : links)
    companion(static_cast<Eigen::Index>(l.target), static_cast<Eigen::Index>((l.lag - 1) * c + l.source)) += l.weight;
  for (Eigen::Index r = static_cast<Eigen::Index>(c); r < n; ++r) companion(r, r - static_cast<Eigen::Index>(c)) = 1.0;
  const Eigen::EigenSolver<Matrix> es(companion, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void ScmSpec::Validate() const {
  const std::size_t target = target_index();
  CGNN_CHECK(horizon >= 1, ErrorKind::kConfig, "horizon must be >= 1");
  CGNN_CHECK(cadence >= 1, ErrorKind::kConfig, "cadence must be >= 1");
  for (const auto& v : variables)
    CGNN_CHECK(v.noise_std >= 0.0 && std::isfinite(v.seasonal_amplitude), ErrorKind::kConfig,
               "invalid noise or seasonality for " + v.name);
  CGNN_CHECK(seasonal_period >= 1, ErrorKind::kConfig, "seasonal_period must be >= 1");
  const auto kinds = this->kinds();
  for (const auto& l : links) {
    CGNN_CHECK(l.source < num_vars() && l.target < num_vars(), ErrorKind::kConfig, "link references an unknown variable");
    CGNN_CHECK(l.lag >= 1, ErrorKind::kConfig, "SCM links need lag >= 1");
    CGNN_CHECK(l.source != target && l.target != target, ErrorKind::kConfig,
               "the target is produced by the label rule, not by links");
    CGNN_CHECK(!(kinds[l.source] == VariableKind::kLocal && kinds[l.target] == VariableKind::kOci),
               ErrorKind::kConfig, "local variables cannot drive an OCI");
  }
  for (const auto& t : label.linear)
    CGNN_CHECK(t.var < num_vars() && t.var != target, ErrorKind::kConfig, "label term references an invalid variable");
  for (const auto& s : label.synergy)
    CGNN_CHECK(s.a < num_vars() && s.b < num_vars() && s.a != target && s.b != target, ErrorKind::kConfig,
               "synergy term references an invalid variable");
  CGNN_CHECK(label.target_rate >= 0.0 && label.target_rate < 1.0, ErrorKind::kConfig, "target_rate must be in [0,1)");
  const double rho = SpectralRadius();
  CGNN_CHECK(rho < 1.0, ErrorKind::kStability, "SCM is unstable (spectral radius " + std::to_string(rho) + ")");
}

CausalGraph ScmSpec::GroundTruth() const {
  CausalGraph g;
  g.variables = names();
  g.kinds = kinds();
  g.alpha = 0.0;
  const std::size_t target = target_index();
  for (const auto& l : links) g.links.push_back({l.source, static_cast<int>(l.lag), l.target, l.weight, 0.0});
  auto add_label_link = [&](std::size_t var, std::size_t lag, double w) {
    const int full = static_cast<int>(horizon + lag);
    if (!g.Contains(var, full, target)) g.links.push_back({var, full, target, w, 0.0});
  };
  for (const auto& t : label.linear) add_label_link(t.var, t.lag, t.weight);
  for (const auto& s : label.synergy) {
    add_label_link(s.a, s.lag_a, s.weight);
    add_label_link(s.b, s.lag_b, s.weight);
  }
  std::sort(g.links.begin(), g.links.end(), [](const CausalLink& a, const CausalLink& b) {
    return std::tie(a.target, a.source, a.lag) < std::tie(b.target, b.source, b.lag);
  });
  for (const auto& l : g.links) g.tau_max = std::max(g.tau_max, l.lag);
  return g;
}

nlohmann::json ToJson(const ScmSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["horizon"] = s.horizon;
  j["cadence"] = s.cadence;
  j["seasonal_period"] = s.seasonal_period;
  j["burn_in"] = s.burn_in;
  auto vars = nlohmann::json::array();
  for (const auto& v : s.variables)
    vars.push_back({{"name", v.name},
                    {"kind", ToString(v.kind)},
                    {"noise_std", v.noise_std},
                    {"seasonal_amplitude", v.seasonal_amplitude},
                    {"seasonal_phase", v.seasonal_phase}});
  j["variables"] = vars;
  auto links = nlohmann::json::array();
  for (const auto& l : s.links)
    links.push_back({{"source", l.source}, {"lag", l.lag}, {"target", l.target}, {"weight", l.weight}});
  j["links"] = links;
  auto linear = nlohmann::json::array();
  for (const auto& t : s.label.linear) linear.push_back({{"var", t.var}, {"lag", t.lag}, {"weight", t.weight}});
  auto synergy = nlohmann::json::array();
  for (const auto& t : s.label.synergy)
    synergy.push_back({{"a", t.a}, {"lag_a", t.lag_a}, {"b", t.b}, {"lag_b", t.lag_b}, {"weight", t.weight}});
  j["label"] = {{"linear", linear}, {"synergy", synergy}, {"bias", s.label.bias}, {"target_rate", s.label.target_rate}};
  return j;
}

ScmSpec ScmSpecFromJson(const nlohmann::json& j) {
  try {
    ScmSpec s;
    s.name = j.value("name", s.name);
    s.horizon = j.value("horizon", s.horizon);
    s.cadence = j.value("cadence", s.cadence);
    s.seasonal_period = j.value("seasonal_period", s.seasonal_period);
    s.burn_in = j.value("burn_in", s.burn_in);
    for (const auto& v : j.at("variables"))
      s.variables.push_back({v.at("name").get<std::string>(), ParseVariableKind(v.at("kind").get<std::string>()),
                             v.value("noise_std", 1.0), v.value("seasonal_amplitude", 0.0),
                             v.value("seasonal_phase", 0.0)});
    for (const auto& l : j.value("links", nlohmann::json::array()))
      s.links.push_back({l.at("source").get<std::size_t>(), l.at("lag").get<std::size_t>(),
                         l.at("target").get<std::size_t>(), l.at("weight").get<double>()});
    const auto& lab = j.at("label");
    for (const auto& t : lab.value("linear", nlohmann::json::array()))
      s.label.linear.push_back({t.at("var").get<std::size_t>(), t.at("lag").get<std::size_t>(), t.at("weight").get<double>()});
    for (const auto& t : lab.value("synergy", nlohmann::json::array()))
      s.label.synergy.push_back({t.at("a").get<std::size_t>(), t.at("lag_a").get<std::size_t>(),
                                 t.at("b").get<std::size_t>(), t.at("lag_b").get<std::size_t>(),
                                 t.at("weight").get<double>()});
    s.label.bias = lab.value("bias", 0.0);
    s.label.target_rate = lab.value("target_rate", 0.0);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("SCM spec: ") + e.what());
  }
}

std::uint64_t SpecHash(const ScmSpec& spec) { return Fnv1a64(ToJson(spec).dump()); }

ScmSpec Fig6Spec(double positive_rate) {
  enum : std::size_t { kNino, kNao, kAo, kT2m, kVpd, kTp, kFire };
  ScmSpec s;
  s.name = "fig6";
  s.variables = {
      {"nino34", VariableKind::kOci, 1.0, 0.0, 0.0},
      {"nao", VariableKind::kOci, 1.0, 0.0, 0.0},
      {"ao", VariableKind::kOci, 1.0, 0.0, 0.0},
      {"t2m", VariableKind::kLocal, 1.0, 1.0, 0.0},
      {"vpd", VariableKind::kLocal, 1.0, 0.7, 0.3},
      {"tp", VariableKind::kLocal, 1.0, 0.5, std::numbers::pi},
      {"fire", VariableKind::kTarget, 0.0, 0.0, 0.0},
  };
  const std::size_t k = s.cadence;
  s.links = {
      // OCI block: persistent indices and a nino34 -> nao -> ao chain.
      {kNino, k, kNino, 0.7},
      {kNao, k, kNao, 0.4},
      {kAo, k, kAo, 0.4},
      {kNino, k, kNao, 0.5},
      {kNao, k, kAo, 0.5},
      // Every OCI reaches every local one to three months later.
      {kNino, 2 * k, kT2m, 0.4},
      {kNao, k, kT2m, 0.3},
      {kAo, k, kT2m, 0.3},
      {kNino, k, kVpd, 0.3},
      {kNao, 2 * k, kVpd, 0.3},
      {kAo, k, kVpd, -0.3},
      {kNino, k, kTp, -0.4},
      {kNao, k, kTp, 0.3},
      {kAo, 2 * k, kTp, 0.3},
      // Local weather couples densely at the fine step.
      {kT2m, 1, kT2m, 0.4},
      {kVpd, 1, kVpd, 0.4},
      {kTp, 1, kTp, 0.4},
      {kT2m, 1, kVpd, 0.3},
      {kVpd, 1, kT2m, 0.2},
      {kT2m, 1, kTp, -0.2},
      {kTp, 1, kT2m, -0.15},
      {kVpd, 1, kTp, -0.2},
      {kTp, 1, kVpd, -0.15},
  };
  s.label.linear = {
      {kT2m, 4, 0.5}, {kVpd, 5, 0.5}, {kTp, 6, -0.5}, {kNino, 2 * k, 1.2}, {kNao, 2 * k, 1.2}, {kAo, 2 * k, -1.2},
  };
  s.label.synergy = {{kT2m, 4, kVpd, 5, 0.1}};
  s.label.target_rate = positive_rate;
  (void)kFire;
  return s;
}

ScmSpec PresetSpec(const std::string& preset) {
  if (preset == "fig6-default") {
    ScmSpec s = Fig6Spec(0.3);
    s.name = preset;
    return s;
  }
  if (preset == "mediterranean") {
    ScmSpec s = Fig6Spec(0.011);
    s.name = preset;
    return s;
  }
  if (preset == "boreal") {
    ScmSpec s = Fig6Spec(0.000737);
    s.name = preset;
    return s;
  }
  throw Error(ErrorKind::kConfig, "unknown preset '" + preset + "' (fig6-default, mediterranean, boreal)");
}

// --- labels -------------------------------------------------------------------

LabelResult LabelFire(const Matrix& values, const LabelRule& rule, std::size_t horizon, Rng& rng) {
  CGNN_CHECK(horizon >= 1, ErrorKind::kContract, "horizon must be >= 1");
  const auto cols = static_cast<std::size_t>(values.cols());
  std::size_t reach = 0;
  for (const auto& t : rule.linear) {
    CGNN_CHECK(t.var < cols, ErrorKind::kConfig, "label term references a missing variable");
    reach = std::max(reach, t.lag);
  }
  for (const auto& s : rule.synergy) {
    CGNN_CHECK(s.a < cols && s.b < cols, ErrorKind::kConfig, "synergy term references a missing variable");
    reach = std::max({reach, s.lag_a, s.lag_b});
  }
  const auto rows = static_cast<std::size_t>(values.rows());
  const std::size_t first = horizon + reach;
  std::vector<double> eta(rows, 0.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> u(rows);
  for (auto& x : u) x = unif(rng);
  auto at = [&](std::size_t t, std::size_t v) {
    return values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(v));
  };
  for (std::size_t r = first; r < rows; ++r) {
    const std::size_t t = r - horizon;
    double e = 0.0;
    for (const auto& term : rule.linear) e += term.weight * at(t - term.lag, term.var);
    for (const auto& s : rule.synergy) e += s.weight * at(t - s.lag_a, s.a) * at(t - s.lag_b, s.b);
    eta[r] = e;
  }
  const std::size_t valid = rows > first ? rows - first : 0;
  auto count_at = [&](double b) {
    std::size_t n = 0;
    for (std::size_t r = first; r < rows; ++r) n += u[r] < Sigmoid(eta[r] + b) ? 1 : 0;
    return n;
  };

  LabelResult out;
  out.bias = rule.bias;
  if (rule.target_rate > 0.0) {
    CGNN_CHECK(valid > 0, ErrorKind::kCalibration, "no rows to calibrate the label rate on");
    const double goal = rule.target_rate * static_cast<double>(valid);
    // The count is nondecreasing in b because the uniforms are fixed.
    double lo = -100.0, hi = 100.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (static_cast<double>(count_at(mid)) < goal ? lo : hi) = mid;
    }
    const std::size_t n_lo = count_at(lo), n_hi = count_at(hi);
    const bool pick_hi = std::abs(static_cast<double>(n_hi) - goal) <= std::abs(static_cast<double>(n_lo) - goal);
    out.bias = pick_hi ? hi : lo;
  }
  out.labels.assign(rows, 0);
  std::size_t positives = 0;
  for (std::size_t r = first; r < rows; ++r) {
    out.labels[r] = u[r] < Sigmoid(eta[r] + out.bias) ? 1 : 0;
    positives += static_cast<std::size_t>(out.labels[r]);
  }
  out.positive_rate = valid ? static_cast<double>(positives) / static_cast<double>(valid) : 0.0;
  if (rule.target_rate > 0.0) {
    const double rel = std::abs(out.positive_rate - rule.target_rate) / rule.target_rate;
    CGNN_CHECK(rel <= 0.10, ErrorKind::kCalibration,
               "cannot reach positive rate " + std::to_string(rule.target_rate) + " (closest " +
                   std::to_string(out.positive_rate) + " over " + std::to_string(valid) + " rows)");
  }
  return out;
}

// --- simulation ---------------------------------------------------------------

GeneratedData Generate(const ScmSpec& spec, std::size_t num_steps, std::uint64_t seed) {
  spec.Validate();
  const std::size_t max_lag = std::max<std::size_t>(spec.MaxLag(), 1);
  CGNN_CHECK(num_steps >= 10 * max_lag, ErrorKind::kInsufficientData,
             "num_steps must be at least 10 x the largest lag (" + std::to_string(10 * max_lag) + ")");
  const SeedStreams streams(seed);
  Rng noise_rng = streams.Stream("noise");
  Rng label_rng = streams.Stream("labels");
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t c = spec.num_vars();
  const std::size_t target = spec.target_index();
  const std::size_t total = spec.burn_in + num_steps;
  std::vector<std::vector<const ScmLink*>> into(c);
  for (const auto& l : spec.links) into[l.target].push_back(&l);

  Matrix dyn = Matrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(c));
  Matrix obs = Matrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(c));
  for (std::size_t t = 0; t < total; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    for (std::size_t j = 0; j < c; ++j) {
      const double e = normal(noise_rng);
      if (j == target) continue;
      const auto& var = spec.variables[j];
      const auto ji = static_cast<Eigen::Index>(j);
      if (var.kind == VariableKind::kOci && t % spec.cadence != 0) {
        dyn(ti, ji) = dyn(ti - 1, ji);
      } else {
        double x = var.noise_std * e;
        for (const auto* l : into[j])
          if (t >= l->lag) x += l->weight * dyn(static_cast<Eigen::Index>(t - l->lag), static_cast<Eigen::Index>(l->source));
        dyn(ti, ji) = x;
      }
      CGNN_CHECK(std::abs(dyn(ti, ji)) < kDivergenceBound, ErrorKind::kStability,
                 "simulation diverged at step " + std::to_string(t));
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(spec.seasonal_period);
      obs(ti, ji) = dyn(ti, ji) + var.seasonal_amplitude * std::sin(phase + var.seasonal_phase);
    }
  }

  GeneratedData out;
  LabelResult full = LabelFire(obs, spec.label, spec.horizon, label_rng);
  for (std::size_t t = 0; t < total; ++t)
    obs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(target)) = full.labels[t];

  out.dataset.names = spec.names();
  out.dataset.kinds = spec.kinds();
  out.dataset.values = obs.bottomRows(static_cast<Eigen::Index>(num_steps));
  out.label.labels.assign(full.labels.begin() + static_cast<std::ptrdiff_t>(spec.burn_in), full.labels.end());
  out.label.bias = full.bias;
  std::size_t pos = 0;
  for (int y : out.label.labels) pos += static_cast<std::size_t>(y);
  out.label.positive_rate = static_cast<double>(pos) / static_cast<double>(num_steps);
  out.truth = spec.GroundTruth();
  return out;
}

// --- files --------------------------------------------------------------------

void WriteDataset(const std::filesystem::path& stem, const GeneratedData& data, const ScmSpec& spec,
                  std::uint64_t seed) {
  std::filesystem::path csv = stem, json = stem;
  csv += ".csv";
  json += ".json";
  WriteCsv(csv, {data.dataset.names, data.dataset.values});
  nlohmann::json side;
  side["variables"] = data.dataset.names;
  std::vector<std::string> kinds;
  for (auto k : data.dataset.kinds) kinds.emplace_back(ToString(k));
  side["kinds"] = kinds;
  side["cadence"] = spec.cadence;
  side["seasonal_period"] = spec.seasonal_period;
  side["horizon"] = spec.horizon;
  side["num_steps"] = data.dataset.num_steps();
  side["seed"] = seed;
  side["spec_hash"] = SpecHash(spec);
  side["spec"] = ToJson(spec);
  side["positive_rate"] = data.label.positive_rate;
  side["label_bias"] = data.label.bias;
  side["ground_truth"] = GraphToJson(data.truth);
  WriteJson(json, side);
}

LoadedDataset ReadDataset(const std::filesystem::path& csv_path) {
  LoadedDataset out;
  const CsvTable table = ReadCsv(csv_path);
  std::filesystem::path side = csv_path;
  side.replace_extension(".json");
  CGNN_CHECK(std::filesystem::exists(side), ErrorKind::kConfig,
             "dataset sidecar " + side.string() + " is missing");
  out.sidecar = ReadJson(side);
  try {
    const auto names = out.sidecar.at("variables").get<std::vector<std::string>>();
    const auto kinds = out.sidecar.at("kinds").get<std::vector<std::string>>();
    CGNN_CHECK(names == table.header && kinds.size() == names.size(), ErrorKind::kConfig,
               "sidecar variables do not match the CSV header");
    out.dataset.names = names;
    for (const auto& k : kinds) out.dataset.kinds.push_back(ParseVariableKind(k));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("dataset sidecar: ") + e.what());
  }
  out.dataset.values = table.values;
  out.dataset.Validate();
  return out;
}

}  // namespace cgnn
