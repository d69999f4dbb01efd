#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cgnn/error.hpp"
#include "cgnn/models.hpp"
#include "test_support.hpp"

namespace cgnn {
namespace {

using testing::CheckGradient;
using testing::RandomTensor;

double Sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straightforward per-row recurrences written from the textbook gate
// equations, independent of the tape.
std::vector<double> ReferenceEncode(const RecurrentParams& p, const std::vector<double>& series) {
  const std::size_t hd = p.hidden();
  std::vector<double> h(hd, 0.0), c(hd, 0.0);
  auto wi = [&](std::size_t k) { return p.w_input.at(k); };
  auto wh = [&](std::size_t r, std::size_t k) { return p.w_hidden.at(r, k); };
  const std::size_t gates = p.cell == CellKind::kLstm ? 4 : 3;
  for (double x : series) {
    std::vector<double> gi(gates * hd), gh(gates * hd, 0.0);
    for (std::size_t k = 0; k < gates * hd; ++k) {
      gi[k] = wi(k) * x + p.b_input.at(k);
      for (std::size_t r = 0; r < hd; ++r) gh[k] += h[r] * wh(r, k);
      if (p.cell == CellKind::kGru) gh[k] += p.b_hidden.at(k);
    }
    std::vector<double> next(hd);
    for (std::size_t u = 0; u < hd; ++u) {
      if (p.cell == CellKind::kLstm) {
        auto pre = [&](std::size_t g) { return gi[g * hd + u] + gh[g * hd + u]; };
        c[u] = Sig(pre(1)) * c[u] + Sig(pre(0)) * std::tanh(pre(2));
        next[u] = Sig(pre(3)) * std::tanh(c[u]);
      } else {
        const double r = Sig(gi[u] + gh[u]);
        const double z = Sig(gi[hd + u] + gh[hd + u]);
        const double n = std::tanh(gi[2 * hd + u] + r * gh[2 * hd + u]);
        next[u] = (1.0 - z) * n + z * h[u];
      }
    }
    h = next;
  }
  return h;
}

RecurrentParams RandomCell(CellKind cell, std::size_t hd, Rng& rng) {
  const std::size_t g = cell == CellKind::kLstm ? 4 : 3;
  RecurrentParams p;
  p.cell = cell;
  p.w_input = RandomTensor({1, g * hd}, rng, 0.7);
  p.w_hidden = RandomTensor({hd, g * hd}, rng, 0.7);
  p.b_input = RandomTensor({g * hd}, rng, 0.3);
  if (cell == CellKind::kGru) p.b_hidden = RandomTensor({g * hd}, rng, 0.3);
  return p;
}

ModelConfig SmallConfig() {
  ModelConfig c;
  c.hidden_dim = 4;
  c.gnn_hidden = 6;
  c.num_local = 3;
  c.num_oci = 2;
  c.local_window = 5;
  c.oci_window = 3;
  return c;
}

Batch RandomBatch(const ModelConfig& c, std::size_t b, Rng& rng) {
  std::normal_distribution<double> d;
  Batch batch;
  batch.size = b;
  batch.num_local = c.num_local;
  batch.local_window = c.local_window;
  batch.num_oci = c.num_oci;
  batch.oci_window = c.oci_window;
  batch.local.resize(b * c.num_local * c.local_window);
  batch.oci.resize(b * c.num_oci * c.oci_window);
  for (auto& v : batch.local) v = d(rng);
  for (auto& v : batch.oci) v = d(rng);
  batch.labels.assign(b, 0);
  for (std::size_t i = 0; i < b; i += 2) batch.labels[i] = 1;
  return batch;
}

AdjacencyMatrix RandomCausal(std::size_t c, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AdjacencyMatrix a{Matrix(c, c), {}, AdjacencyKind::kCausal, false};
  for (std::size_t i = 0; i < c; ++i) a.nodes.push_back("n" + std::to_string(i));
  for (auto& v : a.weights.reshaped()) v = u(rng) < 0.5 ? 0.0 : u(rng);
  return a;
}

std::vector<Tensor> Params(const Model& m) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : m.params().Named()) out.push_back(t);
  return out;
}

TEST(Recurrent, ZeroWeightsGiveZeroState) {
  for (auto cell : {CellKind::kLstm, CellKind::kGru}) {
    const std::size_t g = cell == CellKind::kLstm ? 4 : 3;
    RecurrentParams p{cell, Tensor::Zeros({1, g * 3}), Tensor::Zeros({3, g * 3}), Tensor::Zeros({g * 3}),
                      cell == CellKind::kGru ? Tensor::Zeros({g * 3}) : Tensor()};
    Tape tape;
    const Tensor h = RecurrentEncode(tape, p, Tensor({2, 4}, {1, -2, 3, 4, 0.5, 9, -1, 2}));
    for (double v : h.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Recurrent, SingleStepLstmHandOracle) {
  // H = 1, gates [i f g o]: c = sig(0.5 x) tanh(-x + 0.1), h = sig(2x) tanh(c).
  RecurrentParams p{CellKind::kLstm, Tensor({1, 4}, {0.5, 3.0, -1.0, 2.0}), Tensor({1, 4}, {9, 9, 9, 9}),
                    Tensor({4}, {0.0, 0.0, 0.1, 0.0}), Tensor()};
  Tape tape;
  const double x = 0.8;
  const Tensor h = RecurrentEncode(tape, p, Tensor({1, 1}, {x}));
  const double c = Sig(0.5 * x) * std::tanh(-x + 0.1);
  EXPECT_NEAR(h.item(), Sig(2.0 * x) * std::tanh(c), 1e-15);
}

TEST(Recurrent, SingleStepGruHandOracle) {
  // H = 1, gates [r z n]: h = (1 - z) tanh(w_n x + b_n + r b_hn).
  RecurrentParams p{CellKind::kGru, Tensor({1, 3}, {1.0, -0.5, 0.7}), Tensor({1, 3}, {9, 9, 9}),
                    Tensor({3}, {0.1, 0.2, 0.3}), Tensor({3}, {-0.1, 0.4, 0.6})};
  Tape tape;
  const double x = -1.3;
  const Tensor h = RecurrentEncode(tape, p, Tensor({1, 1}, {x}));
  const double r = Sig(x + 0.1 - 0.1), z = Sig(-0.5 * x + 0.2 + 0.4);
  EXPECT_NEAR(h.item(), (1.0 - z) * std::tanh(0.7 * x + 0.3 + r * 0.6), 1e-15);
}

TEST(Recurrent, MatchesReferenceOverSeveralSteps) {
  Rng rng(1);
  for (auto cell : {CellKind::kLstm, CellKind::kGru}) {
    const auto p = RandomCell(cell, 3, rng);
    const Tensor series = RandomTensor({4, 6}, rng, 1.0, false);
    Tape tape(Tape::Mode::kInference);
    const Tensor h = RecurrentEncode(tape, p, series);
    for (std::size_t r = 0; r < 4; ++r) {
      const std::vector<double> row(series.values().begin() + r * 6, series.values().begin() + (r + 1) * 6);
      const auto ref = ReferenceEncode(p, row);
      for (std::size_t u = 0; u < 3; ++u) EXPECT_NEAR(h.at(r, u), ref[u], 1e-13);
    }
  }
}

TEST(Recurrent, GradientsMatchFiniteDifferencesThroughFiveSteps) {
  Rng rng(2);
  for (auto cell : {CellKind::kLstm, CellKind::kGru}) {
    const auto p = RandomCell(cell, 3, rng);
    const Tensor series = RandomTensor({2, 5}, rng, 1.0, false);
    const Tensor probe = RandomTensor({2, 3}, rng, 1.0, false);
    auto build = [&](Tape& tape) { return Sum(tape, Mul(tape, RecurrentEncode(tape, p, series), probe)); };
    std::vector<Tensor> all{p.w_input, p.w_hidden, p.b_input};
    if (p.b_hidden.defined()) all.push_back(p.b_hidden);
    for (const auto& t : all) EXPECT_LT(CheckGradient(build, all, t, 1e-5).max_rel_err, 1e-6);
  }
}

TEST(Gcn, IdentityAdjacencyKeepsNodesIndependent) {
  Rng rng(3);
  GcnLayerParams p{RandomTensor({4, 5}, rng), RandomTensor({5}, rng), RandomTensor({5}, rng)};
  AdjacencyMatrix id{Matrix::Zero(3, 3), {"a", "b", "c"}, AdjacencyKind::kCausal, false};
  const auto norm = Normalize(id);
  Tensor nodes = RandomTensor({6, 4}, rng, 1.0, false);
  Tape tape(Tape::Mode::kInference);
  const Tensor base = GcnLayer(tape, nodes, norm, p, 0.01);
  nodes.mutable_values()[4 * 4 + 2] += 1.0;  // sample 1, node 1
  const Tensor moved = GcnLayer(tape, nodes, norm, p, 0.01);
  for (std::size_t r = 0; r < 6; ++r) {
    double diff = 0.0;
    for (std::size_t k = 0; k < 5; ++k) diff += std::abs(base.at(r, k) - moved.at(r, k));
    if (r == 4)
      EXPECT_GT(diff, 1e-6);
    else
      EXPECT_EQ(diff, 0.0);
  }
}

TEST(Gcn, PerturbationReachesOnlyOutNeighbors) {
  Rng rng(4);
  GcnLayerParams p{RandomTensor({4, 5}, rng), RandomTensor({5}, rng), RandomTensor({5}, rng)};
  AdjacencyMatrix a{Matrix::Zero(3, 3), {"a", "b", "c"}, AdjacencyKind::kCausal, false};
  a.weights(0, 2) = 0.7;  // a -> c only
  const auto norm = Normalize(a);
  Tensor nodes = RandomTensor({3, 4}, rng, 1.0, false);
  Tape tape(Tape::Mode::kInference);
  const Tensor base = GcnLayer(tape, nodes, norm, p, 0.01);
  nodes.mutable_values()[1] += 1.0;  // node a
  const Tensor moved = GcnLayer(tape, nodes, norm, p, 0.01);
  auto changed = [&](std::size_t r) {
    double d = 0.0;
    for (std::size_t k = 0; k < 5; ++k) d += std::abs(base.at(r, k) - moved.at(r, k));
    return d > 1e-9;
  };
  EXPECT_TRUE(changed(0));
  EXPECT_FALSE(changed(1));
  EXPECT_TRUE(changed(2));
}

TEST(Gcn, UniformMixingGivesIdenticalNodes) {
  Rng rng(5);
  GcnLayerParams p{RandomTensor({4, 5}, rng), RandomTensor({5}, rng), RandomTensor({5}, rng)};
  const auto norm = Normalize(FullAdjacency({"a", "b", "c", "d"}));
  Tape tape(Tape::Mode::kInference);
  const Tensor out = GcnLayer(tape, RandomTensor({4, 4}, rng, 1.0, false), norm, p, 0.01);
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(out.at(r, k), out.at(0, k), 1e-14);
  EXPECT_THROW(GcnLayer(tape, RandomTensor({4, 4}, rng), FullAdjacency({"a", "b", "c", "d"}), p, 0.01), Error);
}

TEST(Model, SingleSampleBatchShape) {
  Rng rng(6);
  const auto cfg = SmallConfig();
  for (auto kind : {ModelKind::kLstm, ModelKind::kGru, ModelKind::kGnnCorr, ModelKind::kGnnFull,
                    ModelKind::kGnnCausal}) {
    std::optional<AdjacencyMatrix> adj;
    if (kind == ModelKind::kGnnCausal) adj = RandomCausal(cfg.num_nodes(), rng);
    const auto m = Model::Create(kind, cfg, rng, adj);
    Tape tape;
    const auto res = m.Forward(tape, RandomBatch(cfg, 1, rng));
    EXPECT_EQ(res.logits.shape(), (Shape{1, 2})) << ToString(kind);
    ASSERT_EQ(res.confidence.size(), 1u);
    EXPECT_GT(res.confidence[0], 0.0);
    EXPECT_LT(res.confidence[0], 1.0);
  }
}

TEST(Model, GradientsMatchFiniteDifferencesForEveryKind) {
  Rng rng(7);
  auto cfg = SmallConfig();
  cfg.local_window = 3;
  for (auto kind : {ModelKind::kLstm, ModelKind::kGru, ModelKind::kGnnCorr, ModelKind::kGnnFull,
                    ModelKind::kGnnCausal}) {
    std::optional<AdjacencyMatrix> adj;
    if (kind == ModelKind::kGnnCausal) adj = RandomCausal(cfg.num_nodes(), rng);
    const auto m = Model::Create(kind, cfg, rng, adj);
    const auto batch = RandomBatch(cfg, 3, rng);
    auto build = [&](Tape& tape) {
      return SoftmaxCrossEntropy(tape, m.Forward(tape, batch).logits, batch.labels).loss;
    };
    const auto all = Params(m);
    for (const auto& t : all) {
      std::vector<std::size_t> coords;
      for (std::size_t i = 0; i < std::min<std::size_t>(t.size(), 6); ++i) coords.push_back((i * 7) % t.size());
      EXPECT_LT(CheckGradient(build, all, t, 1e-5, coords).max_rel_err, 1e-5) << ToString(kind);
    }
  }
}

// Swaps local variables 0 and 1 in every sample.
Batch SwapLocals(Batch b) {
  const std::size_t w = b.local_window, stride = b.num_local * w;
  for (std::size_t s = 0; s < b.size; ++s)
    std::swap_ranges(b.local.begin() + s * stride, b.local.begin() + s * stride + w,
                     b.local.begin() + s * stride + w);
  return b;
}

TEST(Model, FullAndBaselineModelsAreNodePermutationInvariant) {
  Rng rng(8);
  const auto cfg = SmallConfig();
  const auto batch = RandomBatch(cfg, 4, rng);
  for (auto kind : {ModelKind::kLstm, ModelKind::kGru, ModelKind::kGnnFull, ModelKind::kGnnCorr}) {
    const auto m = Model::Create(kind, cfg, rng);
    const auto a = m.Predict(batch), b = m.Predict(SwapLocals(batch));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12) << ToString(kind);
  }
}

TEST(Model, CausalModelSeesNodeIdentity) {
  Rng rng(9);
  const auto cfg = SmallConfig();
  AdjacencyMatrix adj{Matrix::Zero(5, 5), {"a", "b", "c", "o1", "o2"}, AdjacencyKind::kCausal, false};
  adj.weights(0, 2) = 0.9;
  const auto m = Model::Create(ModelKind::kGnnCausal, cfg, rng, adj);
  const auto batch = RandomBatch(cfg, 4, rng);
  const auto a = m.Predict(batch), b = m.Predict(SwapLocals(batch));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 1e-9);
}

TEST(Model, ZeroClassifierWeightGivesBiasLogits) {
  Rng rng(10);
  const auto cfg = SmallConfig();
  auto m = Model::Create(ModelKind::kLstm, cfg, rng);
  for (auto& v : m.mutable_params().cls_weight.mutable_values()) v = 0.0;
  m.mutable_params().cls_bias.mutable_values()[0] = -0.3;
  m.mutable_params().cls_bias.mutable_values()[1] = 0.4;
  Tape tape(Tape::Mode::kInference);
  const auto res = m.Forward(tape, RandomBatch(cfg, 3, rng));
  for (std::size_t b = 0; b < 3; ++b) {
    EXPECT_EQ(res.logits.at(b, 0), -0.3);
    EXPECT_EQ(res.logits.at(b, 1), 0.4);
    EXPECT_NEAR(res.confidence[b], Sig(0.7), 1e-15);
  }
}

TEST(Model, SameSeedSameModel) {
  const auto cfg = SmallConfig();
  Rng r1(11), r2(11), data(12);
  const auto a = Model::Create(ModelKind::kGnnFull, cfg, r1);
  const auto b = Model::Create(ModelKind::kGnnFull, cfg, r2);
  const auto batch = RandomBatch(cfg, 5, data);
  EXPECT_EQ(a.Predict(batch), b.Predict(batch));
  EXPECT_EQ(a.Predict(batch, 2), a.Predict(batch));
}

TEST(Model, RejectsMismatchedInputs) {
  Rng rng(13);
  const auto cfg = SmallConfig();
  EXPECT_THROW(Model::Create(ModelKind::kGnnCausal, cfg, rng), Error);
  EXPECT_THROW(Model::Create(ModelKind::kGnnCausal, cfg, rng, RandomCausal(4, rng)), Error);
  const auto m = Model::Create(ModelKind::kLstm, cfg, rng);
  auto other = cfg;
  other.local_window = 6;
  Tape tape;
  EXPECT_THROW(m.Forward(tape, RandomBatch(other, 2, rng)), Error);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  testing::TempDir dir("checkpoint");
  Rng rng(14);
  const auto cfg = SmallConfig();
  const auto batch = RandomBatch(cfg, 6, rng);
  for (auto kind : {ModelKind::kGru, ModelKind::kGnnCausal}) {
    std::optional<AdjacencyMatrix> adj;
    if (kind == ModelKind::kGnnCausal) adj = RandomCausal(cfg.num_nodes(), rng);
    const auto m = Model::Create(kind, cfg, rng, adj);
    const auto prefix = dir.path() / ToString(kind);
    SaveCheckpoint(prefix, m, {{"seed", 42}});
    nlohmann::json meta;
    const auto back = LoadCheckpoint(prefix, &meta);
    EXPECT_EQ(back.kind(), kind);
    EXPECT_EQ(meta["seed"], 42);
    EXPECT_EQ(back.Predict(batch), m.Predict(batch));
    if (adj) {
      EXPECT_TRUE(back.adjacency()->weights == adj->weights);
    }
  }
  EXPECT_THROW(LoadCheckpoint(dir.path() / "missing"), Error);
}

}  // namespace
}  // namespace cgnn
