#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "cgnn/error.hpp"
#include "cgnn/graph_builder.hpp"
#include "test_support.hpp"

namespace cgnn {
namespace {

using K = VariableKind;

// Variables: fire (target), t2m, vpd (locals), nino (OCI). Node order is
// t2m, vpd, nino.
CausalGraph BaseGraph() {
  CausalGraph g;
  g.variables = {"fire", "t2m", "vpd", "nino"};
  g.kinds = {K::kTarget, K::kLocal, K::kLocal, K::kOci};
  g.tau_max = 4;
  return g;
}

double SpectralNorm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

TEST(CausalAdjacency, EmptyGraphGivesZeroMatrix) {
  const auto adj = CausalAdjacency(BaseGraph());
  EXPECT_EQ(adj.nodes, (std::vector<std::string>{"t2m", "vpd", "nino"}));
  EXPECT_TRUE(adj.weights.isZero(0.0));
  EXPECT_TRUE(Normalize(adj).weights.isIdentity(0.0));
}

TEST(CausalAdjacency, SingleLinkCarriesAbsoluteMci) {
  auto g = BaseGraph();
  g.links = {{3, 2, 1, -0.6, 1e-5}};
  const auto adj = CausalAdjacency(g);
  EXPECT_DOUBLE_EQ(adj.weights(2, 0), 0.6);
  EXPECT_DOUBLE_EQ(adj.weights.sum(), 0.6);
}

TEST(CausalAdjacency, MaxOverLagsAndNoContemporaneousEdges) {
  auto g = BaseGraph();
  g.links = {{1, 1, 2, 0.2, 0.01}, {1, 3, 2, -0.5, 0.01}, {2, 0, 1, 0.9, 0.0}, {1, 1, 1, 0.4, 0.0}};
  const auto adj = CausalAdjacency(g);
  EXPECT_DOUBLE_EQ(adj.weights(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(adj.weights(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(adj.weights(0, 0), 0.4);
}

TEST(CausalAdjacency, TargetIsMaskedOut) {
  auto g = BaseGraph();
  g.links = {{1, 1, 0, 0.7, 0.0}, {0, 1, 2, 0.7, 0.0}, {3, 2, 0, 0.3, 0.0}};
  const auto adj = CausalAdjacency(g);
  EXPECT_EQ(adj.size(), 3u);
  EXPECT_TRUE(adj.weights.isZero(0.0));
}

TEST(CausalAdjacency, EquivariantUnderVariableRelabeling) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CausalGraph g;
  g.variables = {"fire", "a", "b", "c", "o1", "o2"};
  g.kinds = {K::kTarget, K::kLocal, K::kLocal, K::kLocal, K::kOci, K::kOci};
  for (std::size_t i = 1; i < 6; ++i)
    for (std::size_t j = 1; j < 6; ++j)
      if (!(g.kinds[i] == K::kLocal && g.kinds[j] == K::kOci)) g.links.push_back({i, 1, j, u(rng), 0.0});
  const auto base = CausalAdjacency(g);

  // Swap columns b <-> c and o1 <-> o2 in the variable list.
  const std::vector<std::size_t> perm{0, 1, 3, 2, 5, 4};
  CausalGraph h = g;
  for (std::size_t v = 0; v < 6; ++v) {
    h.variables[perm[v]] = g.variables[v];
    h.kinds[perm[v]] = g.kinds[v];
  }
  for (auto& l : h.links) {
    l.source = perm[l.source];
    l.target = perm[l.target];
  }
  const auto moved = CausalAdjacency(h);
  const std::vector<Eigen::Index> node_perm{0, 2, 1, 4, 3};
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) EXPECT_EQ(moved.weights(node_perm[i], node_perm[j]), base.weights(i, j));
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(moved.nodes[node_perm[i]], base.nodes[i]);
}

TEST(FullAdjacency, NormalizesToUniformMixing) {
  const auto n = Normalize(FullAdjacency({"a", "b", "c", "d"}));
  EXPECT_TRUE(n.weights.isApprox(Matrix::Constant(4, 4, 0.25), 1e-15));
  EXPECT_TRUE(n.normalized);
  EXPECT_THROW(Normalize(n), Error);
}

TEST(CorrAdjacency, HandCasesAndDegenerateNode) {
  Matrix f(3, 4);
  f << 1, 2, 3, 4,  //
      -2, -4, -6, -8,  //
      5, 5, 5, 5;
  const auto adj = CorrAdjacency(f, {"a", "b", "c"});
  EXPECT_NEAR(adj.weights(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(adj.weights(1, 0), 1.0, 1e-12);
  EXPECT_NEAR(adj.weights(0, 0), 1.0, 1e-12);
  EXPECT_EQ(adj.weights.row(2).sum(), 0.0);
  EXPECT_EQ(adj.weights.col(2).sum(), 0.0);
  EXPECT_THROW(CorrAdjacency(Matrix::Ones(3, 1), {"a", "b", "c"}), Error);
}

TEST(CorrAdjacency, MatchesStatsCorrcoef) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  Matrix f(5, 9);
  for (auto& v : f.reshaped()) v = d(rng);
  const auto adj = CorrAdjacency(f, {"a", "b", "c", "d", "e"});
  EXPECT_TRUE(adj.weights.isApprox(CorrcoefMatrix(f).cwiseAbs(), 1e-12));
}

TEST(Normalize, SymmetricDegreeScalingHandCase) {
  AdjacencyMatrix a{Matrix::Zero(2, 2), {"a", "b"}, AdjacencyKind::kCausal, false};
  a.weights(0, 1) = 3.0;
  // offdiag + I = [[1,3],[0,1]], out degrees 4 and 1, in degrees 1 and 4.
  const auto n = Normalize(a);
  EXPECT_DOUBLE_EQ(n.weights(0, 0), 1.0 / std::sqrt(4.0 * 1.0));
  EXPECT_DOUBLE_EQ(n.weights(1, 1), 1.0 / std::sqrt(1.0 * 4.0));
  EXPECT_NEAR(n.weights(0, 1), 3.0 / std::sqrt(4.0 * 4.0), 1e-15);
  EXPECT_EQ(n.weights(1, 0), 0.0);
}

TEST(Normalize, SpectralNormBoundAndSymmetryForRandomGraphs) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index c = 2 + trial % 7;
    AdjacencyMatrix a{Matrix(c, c), std::vector<std::string>(c), AdjacencyKind::kCausal, false};
    for (auto& v : a.weights.reshaped()) v = u(rng) < 0.4 ? 0.0 : u(rng);
    const bool symmetric = trial % 2 == 0;
    if (symmetric) a.weights = (a.weights + a.weights.transpose()).eval();
    const auto n = Normalize(a);
    EXPECT_LE(SpectralNorm(n.weights), 1.0 + 1e-12);
    EXPECT_TRUE((n.weights.array() >= 0.0).all());
    const Matrix off = a.weights - Matrix(a.weights.diagonal().asDiagonal());
    EXPECT_EQ(n.weights.isApprox(n.weights.transpose(), 1e-14), off.isApprox(off.transpose(), 1e-14));
  }
}

TEST(AdjacencyCsv, RoundTrip) {
  testing::TempDir dir("adjacency_csv");
  auto g = BaseGraph();
  g.links = {{3, 2, 1, 0.123456789012345, 0.0}, {1, 1, 2, -0.5, 0.0}};
  const auto adj = Normalize(CausalAdjacency(g));
  const auto path = dir.path() / "adj.csv";
  WriteAdjacencyCsv(path, adj);
  const auto back = ReadAdjacencyCsv(path, AdjacencyKind::kCausal, true);
  EXPECT_EQ(back.nodes, adj.nodes);
  EXPECT_TRUE(back.weights == adj.weights);
}

}  // namespace
}  // namespace cgnn
