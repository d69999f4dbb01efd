#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cgnn/error.hpp"
#include "cgnn/synthdata.hpp"
#include "cgnn/windows.hpp"
#include "test_support.hpp"

namespace cgnn {
namespace {

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One local AR(1) process, one OCI and a fire target with a fixed bias.
ScmSpec ArSpec(double phi) {
  ScmSpec s;
  s.name = "ar";
  s.variables = {{"x", VariableKind::kLocal, 1.0, 0.0, 0.0},
                 {"o", VariableKind::kOci, 1.0, 0.0, 0.0},
                 {"fire", VariableKind::kTarget, 0.0, 0.0, 0.0}};
  s.links = {{0, 1, 0, phi}, {1, 4, 1, 0.5}};
  s.label.linear = {{0, 0, 1.0}};
  s.label.bias = -3.0;
  return s;
}

double Lag1Autocorr(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  const Eigen::VectorXd a = x.head(n - 1).array() - x.head(n - 1).mean();
  const Eigen::VectorXd b = x.tail(n - 1).array() - x.tail(n - 1).mean();
  return a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
}

TEST(Generate, ArOneMatchesCoefficientAndVariance) {
  const auto data = Generate(ArSpec(0.9), 20000, 1);
  const Eigen::VectorXd x = data.dataset.values.col(0);
  EXPECT_NEAR(Lag1Autocorr(x), 0.9, 0.02);
  const double var = (x.array() - x.mean()).square().mean();
  EXPECT_NEAR(var, 1.0 / (1.0 - 0.81), 0.15 / (1.0 - 0.81));
}

TEST(Generate, OciHoldsBetweenUpdates) {
  auto spec = ArSpec(0.5);
  spec.cadence = 4;
  const auto data = Generate(spec, 2000, 2);
  const auto& v = data.dataset.values;
  // burn_in is a multiple of the cadence, so updates land on rows r % 4 == 0.
  ASSERT_EQ(spec.burn_in % spec.cadence, 0u);
  for (Eigen::Index r = 1; r < v.rows(); ++r) {
    if (r % 4 != 0) {
      EXPECT_EQ(v(r, 1), v(r - 1, 1)) << r;
    }
  }
  int changes = 0;
  for (Eigen::Index r = 4; r < v.rows(); r += 4) changes += v(r, 1) != v(r - 1, 1);
  EXPECT_GT(changes, 490);
}

TEST(Generate, SeasonalityAddsSineOfThePeriod) {
  auto spec = ArSpec(0.5);
  spec.variables[0].noise_std = 0.0;
  spec.variables[0].seasonal_amplitude = 2.0;
  spec.variables[0].seasonal_phase = 0.25;
  spec.seasonal_period = 48;
  const auto data = Generate(spec, 480, 3);
  for (Eigen::Index r = 0; r < 480; ++r) {
    const double t = static_cast<double>(r + static_cast<Eigen::Index>(spec.burn_in));
    EXPECT_NEAR(data.dataset.values(r, 0), 2.0 * std::sin(2.0 * std::numbers::pi * t / 48.0 + 0.25), 1e-12);
  }
}

TEST(Generate, DeterministicPerSeed) {
  const auto spec = PresetSpec("fig6-default");
  const auto a = Generate(spec, 3000, 7), b = Generate(spec, 3000, 7), c = Generate(spec, 3000, 8);
  EXPECT_TRUE(a.dataset.values == b.dataset.values);
  EXPECT_EQ(a.label.bias, b.label.bias);
  EXPECT_FALSE(a.dataset.values == c.dataset.values);
}

TEST(Generate, CalibratesTheMediterraneanRate) {
  const auto spec = PresetSpec("mediterranean");
  const auto data = Generate(spec, 50000, 4);
  EXPECT_GE(data.label.positive_rate, 0.0099);
  EXPECT_LE(data.label.positive_rate, 0.0121);
  const auto fire = data.dataset.values.col(static_cast<Eigen::Index>(spec.target_index()));
  EXPECT_NEAR(fire.mean(), data.label.positive_rate, 1e-15);
  EXPECT_TRUE((fire.array() == 0.0 || fire.array() == 1.0).all());
}

TEST(Generate, UnstableSpecIsRejected) {
  try {
    Generate(ArSpec(1.05), 1000, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kStability);
  }
  EXPECT_LT(ArSpec(0.99).SpectralRadius(), 1.0);
  EXPECT_NEAR(ArSpec(0.9).SpectralRadius(), 0.9, 1e-9);
}

TEST(Generate, TooShortSeriesIsRejected) {
  try {
    Generate(ArSpec(0.5), 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInsufficientData);
  }
}

TEST(Label, ProbabilityFollowsTheLogit) {
  // Rows split into logit bins; the realized rate tracks the mean sigmoid.
  std::mt19937_64 gen(5);
  std::normal_distribution<double> d;
  Matrix v(60000, 3);
  for (auto& x : v.reshaped()) x = d(gen);
  LabelRule rule;
  rule.linear = {{0, 2, 0.8}};
  rule.synergy = {{0, 1, 1, 0, 1.5}};
  rule.bias = -1.0;
  Rng rng(6);
  const auto r = LabelFire(v, rule, 1, rng);
  std::vector<double> expected(4, 0.0), observed(4, 0.0), count(4, 0.0);
  for (Eigen::Index u = 3; u < v.rows(); ++u) {
    const Eigen::Index t = u - 1;
    const double eta = 0.8 * v(t - 2, 0) + 1.5 * v(t - 1, 0) * v(t, 1) - 1.0;
    const auto bin = static_cast<std::size_t>(std::clamp(std::floor((eta + 3.0) / 1.5), 0.0, 3.0));
    expected[bin] += Sigmoid(eta);
    observed[bin] += r.labels[u];
    count[bin] += 1.0;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const double sd = std::sqrt(count[k] * 0.25);
    EXPECT_NEAR(observed[k], expected[k], 4.0 * sd) << k;
  }
  for (Eigen::Index u = 0; u < 3; ++u) EXPECT_EQ(r.labels[u], 0);
}

TEST(Label, SynergyHasNoMarginalEffect) {
  // With a pure a*b term, E[y | a] stays flat while E[y | a*b] rises.
  std::mt19937_64 gen(7);
  std::normal_distribution<double> d;
  Matrix v(80000, 2);
  for (auto& x : v.reshaped()) x = d(gen);
  LabelRule rule;
  rule.synergy = {{0, 0, 1, 0, 2.0}};
  Rng rng(8);
  const auto r = LabelFire(v, rule, 1, rng);
  double pos_a = 0, n_a = 0, neg_a = 0, m_a = 0, hi = 0, n_hi = 0, lo = 0, n_lo = 0;
  for (Eigen::Index u = 1; u < v.rows(); ++u) {
    const double a = v(u - 1, 0), ab = a * v(u - 1, 1);
    (a > 0 ? pos_a : neg_a) += r.labels[u];
    (a > 0 ? n_a : m_a) += 1;
    if (ab > 0.5) hi += r.labels[u], n_hi += 1;
    if (ab < -0.5) lo += r.labels[u], n_lo += 1;
  }
  EXPECT_NEAR(pos_a / n_a, neg_a / m_a, 0.02);
  EXPECT_GT(hi / n_hi - lo / n_lo, 0.5);
}

TEST(Label, FutureValuesDoNotChangePastLabels) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> d;
  Matrix v(400, 3);
  for (auto& x : v.reshaped()) x = d(gen);
  LabelRule rule;
  rule.linear = {{0, 1, 1.0}, {2, 3, -0.5}};
  rule.synergy = {{1, 0, 2, 2, 0.7}};
  rule.bias = -0.5;
  const std::size_t h = 2;
  Rng r1(10);
  const auto base = LabelFire(v, rule, h, r1);
  for (Eigen::Index cut : {50, 200, 399}) {
    Matrix w = v;
    for (Eigen::Index r = cut - static_cast<Eigen::Index>(h) + 1; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < 3; ++c) w(r, c) = 100.0 * d(gen);
    Rng r2(10);
    const auto moved = LabelFire(w, rule, h, r2);
    for (Eigen::Index u = 0; u <= cut; ++u) EXPECT_EQ(moved.labels[u], base.labels[u]) << cut << " " << u;
  }
}

TEST(Label, VeryNegativeBiasGivesNoFires) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> d;
  Matrix v(5000, 2);
  for (auto& x : v.reshaped()) x = d(gen);
  LabelRule rule;
  rule.linear = {{0, 0, 3.0}};
  rule.bias = -1e9;
  Rng rng(12);
  const auto r = LabelFire(v, rule, 1, rng);
  EXPECT_EQ(r.positive_rate, 0.0);
  for (int y : r.labels) EXPECT_EQ(y, 0);
}

TEST(Label, ZeroHorizonIsAContractError) {
  Matrix v = Matrix::Zero(10, 2);
  LabelRule rule;
  Rng rng(1);
  try {
    LabelFire(v, rule, 0, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(Label, UnreachableRateIsACalibrationError) {
  Matrix v = Matrix::Zero(50, 2);
  LabelRule rule;
  rule.target_rate = 0.011;  // 49 rows cannot land within 10% of 0.54 fires
  Rng rng(1);
  try {
    LabelFire(v, rule, 1, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCalibration);
  }
}

TEST(GroundTruth, RespectsMediatorOrdering) {
  for (const std::string preset : {"fig6-default", "mediterranean", "boreal"}) {
    const auto spec = PresetSpec(preset);
    const auto truth = spec.GroundTruth();
    const auto allowed = LinkAssumptions::MediatorOrdering(spec.kinds(), static_cast<int>(spec.MaxLag()));
    ASSERT_FALSE(truth.links.empty());
    for (const auto& l : truth.links) {
      EXPECT_TRUE(allowed.Allows(l.source, l.lag, l.target)) << preset << " " << l.source << "->" << l.target;
      EXPECT_NE(l.source, spec.target_index());
    }
    // Every label term appears as a link into the target at horizon + lag.
    for (const auto& t : spec.label.linear)
      EXPECT_TRUE(truth.Contains(t.var, static_cast<int>(spec.horizon + t.lag), spec.target_index()));
  }
}

TEST(ScmSpec, PresetRates) {
  EXPECT_EQ(PresetSpec("mediterranean").label.target_rate, 0.011);
  EXPECT_EQ(PresetSpec("boreal").label.target_rate, 0.000737);
  EXPECT_EQ(PresetSpec("fig6-default").num_vars(), 7u);
  EXPECT_EQ(PresetSpec("fig6-default").cadence, 4u);
}

TEST(ScmSpec, JsonRoundTripAndHash) {
  const auto spec = PresetSpec("boreal");
  const auto back = ScmSpecFromJson(ToJson(spec));
  EXPECT_EQ(ToJson(back), ToJson(spec));
  EXPECT_EQ(SpecHash(back), SpecHash(spec));
  auto other = spec;
  other.links[0].weight += 0.01;
  EXPECT_NE(SpecHash(other), SpecHash(spec));
  EXPECT_THROW(PresetSpec("tropical"), Error);
  EXPECT_THROW(ScmSpecFromJson(nlohmann::json{{"variables", 3}}), Error);
}

TEST(ScmSpec, StructuralErrors) {
  auto s = ArSpec(0.5);
  s.links.push_back({0, 1, 1, 0.1});  // local -> OCI
  EXPECT_THROW(s.Validate(), Error);
  s = ArSpec(0.5);
  s.links.push_back({2, 1, 0, 0.1});  // target as a source
  EXPECT_THROW(s.Validate(), Error);
  s = ArSpec(0.5);
  s.links[0].lag = 0;
  EXPECT_THROW(s.Validate(), Error);
}

TEST(Windows, CountAndSplitsHaveNoLeakage) {
  const auto data = Generate(PresetSpec("fig6-default"), 3000, 13);
  WindowSpec w;
  w.horizon = 3;
  const WindowSet ws(data.dataset, w);
  ASSERT_EQ(w.span(), std::max<std::size_t>(39, 4 * 10));
  EXPECT_EQ(ws.size(), 3000 - w.span() - w.horizon + 1);
  EXPECT_EQ(ws.label_time(ws.size() - 1), 2999u);
  EXPECT_EQ(ws.input_begin(0), 0u);

  const auto s = ws.ChronologicalSplits();
  EXPECT_EQ(s.train_end, 2100u);
  EXPECT_EQ(s.val_end, 2550u);
  for (auto i : s.train) EXPECT_LT(ws.label_time(i), s.train_end);
  for (auto i : s.val) {
    EXPECT_GE(ws.input_begin(i), s.train_end);
    EXPECT_LT(ws.label_time(i), s.val_end);
  }
  for (auto i : s.test) EXPECT_GE(ws.input_begin(i), s.val_end);
  // Exhaustive: every sample that fits inside a split is assigned to it.
  std::size_t fits = 0;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const auto b = ws.input_begin(i), e = ws.label_time(i);
    fits += (e < s.train_end) || (b >= s.train_end && e < s.val_end) || (b >= s.val_end);
  }
  EXPECT_EQ(fits, s.train.size() + s.val.size() + s.test.size());
}

TEST(Windows, BatchMatchesTheRawSeries) {
  const auto data = Generate(PresetSpec("fig6-default"), 600, 14);
  WindowSpec w;
  w.local_window = 5;
  w.oci_window = 3;
  w.stride = 4;
  const WindowSet ws(data.dataset, w);
  const std::vector<std::size_t> idx{0, 17, ws.size() - 1};
  const auto batch = ws.MakeBatch(idx);
  const auto& v = data.dataset.values;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto a = static_cast<Eigen::Index>(ws.anchor(idx[b]));
    // First local is t2m (column 3); the last window entry is the anchor.
    EXPECT_EQ(batch.local[b * 3 * 5 + 4], v(a, 3));
    EXPECT_EQ(batch.local[b * 3 * 5 + 0], v(a - 4, 3));
    // Most recent OCI block of nino34 averages rows a-3..a.
    EXPECT_NEAR(batch.oci[b * 3 * 3 + 2], v.col(0).segment(a - 3, 4).mean(), 1e-15);
    EXPECT_NEAR(batch.oci[b * 3 * 3 + 0], v.col(0).segment(a - 11, 4).mean(), 1e-15);
    EXPECT_EQ(batch.labels[b], static_cast<int>(v(a + 1, 6)));
  }
}

TEST(Dataset, WriteReadRoundTrip) {
  testing::TempDir dir("synth_io");
  const auto spec = PresetSpec("fig6-default");
  const auto data = Generate(spec, 500, 15);
  WriteDataset(dir.path() / "toy", data, spec, 15);
  const auto back = ReadDataset(dir.path() / "toy.csv");
  EXPECT_EQ(back.dataset.names, data.dataset.names);
  EXPECT_EQ(back.dataset.kinds, data.dataset.kinds);
  EXPECT_TRUE(back.dataset.values == data.dataset.values);
  EXPECT_EQ(back.sidecar["seed"], 15);
  EXPECT_EQ(back.sidecar["spec_hash"], SpecHash(spec));
  EXPECT_EQ(GraphFromJson(back.sidecar["ground_truth"]).links.size(), data.truth.links.size());
  std::filesystem::remove(dir.path() / "toy.json");
  try {
    ReadDataset(dir.path() / "toy.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

}  // namespace
}  // namespace cgnn
