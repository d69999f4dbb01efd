#include "cgnn/graph_builder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cgnn/error.hpp"
#include "cgnn/io.hpp"

namespace cgnn {

const char* ToString(AdjacencyKind kind) {
  switch (kind) {
    case AdjacencyKind::kCausal:
      return "causal";
    case AdjacencyKind::kCorr:
      return "corr";
    case AdjacencyKind::kFull:
      return "full";
  }
  return "?";
}

Tensor AdjacencyMatrix::AsTensor() const {
  const std::size_t c = size();
  std::vector<double> v(c * c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j)
      v[i * c + j] = weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return Tensor({c, c}, std::move(v));
}

std::vector<std::size_t> GraphNodeOrder(const CausalGraph& graph) {
  CGNN_CHECK(graph.kinds.size() == graph.variables.size(), ErrorKind::kConfig,
             "causal graph lacks variable kinds");
  std::vector<std::size_t> order;
  for (auto kind : {VariableKind::kLocal, VariableKind::kOci})
    for (std::size_t i = 0; i < graph.kinds.size(); ++i)
      if (graph.kinds[i] == kind) order.push_back(i);
  return order;
}

AdjacencyMatrix CausalAdjacency(const CausalGraph& graph) {
  const auto order = GraphNodeOrder(graph);
  CGNN_CHECK(!order.empty(), ErrorKind::kEmptyGraph, "graph has no non-target variables");
  std::vector<int> node_of(graph.variables.size(), -1);
  for (std::size_t n = 0; n < order.size(); ++n) node_of[order[n]] = static_cast<int>(n);

  AdjacencyMatrix adj;
  adj.kind = AdjacencyKind::kCausal;
  for (auto v : order) adj.nodes.push_back(graph.variables[v]);
  adj.weights = Matrix::Zero(static_cast<Eigen::Index>(order.size()),
                             static_cast<Eigen::Index>(order.size()));
  for (const auto& link : graph.links) {
    if (link.undirected()) continue;
    CGNN_CHECK(std::abs(link.mci) <= 1.0, ErrorKind::kContract, "MCI value outside [-1, 1]");
    const int i = node_of.at(link.source);
    const int j = node_of.at(link.target);
    if (i < 0 || j < 0) continue;
    double& w = adj.weights(i, j);
    w = std::max(w, std::abs(link.mci));
  }
  return adj;
}

AdjacencyMatrix FullAdjacency(const std::vector<std::string>& nodes) {
  CGNN_CHECK(!nodes.empty(), ErrorKind::kEmptyGraph, "no nodes");
  const auto c = static_cast<Eigen::Index>(nodes.size());
  return {Matrix::Ones(c, c), nodes, AdjacencyKind::kFull, false};
}

AdjacencyMatrix CorrAdjacency(const Matrix& features, const std::vector<std::string>& nodes) {
  CGNN_CHECK(features.rows() == static_cast<Eigen::Index>(nodes.size()), ErrorKind::kDimension,
             "one feature row per node required");
  CGNN_CHECK(features.cols() >= 2, ErrorKind::kDegenerateInput, "corr adjacency needs d >= 2");
  Tape tape(Tape::Mode::kInference);
  std::vector<double> flat(static_cast<std::size_t>(features.size()));
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      flat[static_cast<std::size_t>(r * features.cols() + c)] = features(r, c);
  const Tensor rows({nodes.size(), static_cast<std::size_t>(features.cols())}, std::move(flat));
  const Tensor corr = AbsCorrcoef(tape, rows, nodes.size());
  AdjacencyMatrix adj{Matrix(features.rows(), features.rows()), nodes, AdjacencyKind::kCorr, false};
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = 0; j < nodes.size(); ++j)
      adj.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = corr.at(i, j);
  return adj;
}

AdjacencyMatrix Normalize(const AdjacencyMatrix& adjacency) {
  CGNN_CHECK(!adjacency.normalized, ErrorKind::kContract, "adjacency is already normalized");
  Tape tape(Tape::Mode::kInference);
  const Tensor norm = NormalizeAdjacency(tape, adjacency.AsTensor());
  AdjacencyMatrix out = adjacency;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out.size(); ++j)
      out.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = norm.at(i, j);
  out.normalized = true;
  return out;
}

void WriteAdjacencyCsv(const std::filesystem::path& path, const AdjacencyMatrix& adjacency) {
  std::vector<std::string> header{"node"};
  header.insert(header.end(), adjacency.nodes.begin(), adjacency.nodes.end());
  WriteLabeledCsv(path, header, adjacency.nodes, adjacency.weights);
}

AdjacencyMatrix ReadAdjacencyCsv(const std::filesystem::path& path, AdjacencyKind kind,
                                 bool normalized) {
  std::istringstream is(ReadText(path));
  std::string line;
  std::vector<std::vector<std::string>> cells;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    cells.push_back(std::move(row));
  }
  CGNN_CHECK(!cells.empty() && cells[0].size() >= 2, ErrorKind::kIo, "malformed adjacency CSV");
  AdjacencyMatrix adj;
  adj.kind = kind;
  adj.normalized = normalized;
  adj.nodes.assign(cells[0].begin() + 1, cells[0].end());
  const std::size_t c = adj.nodes.size();
  CGNN_CHECK(cells.size() == c + 1, ErrorKind::kIo, "adjacency CSV is not square");
  adj.weights.resize(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < c; ++i) {
    CGNN_CHECK(cells[i + 1].size() == c + 1 && cells[i + 1][0] == adj.nodes[i], ErrorKind::kIo,
               "adjacency CSV row does not match header");
    for (std::size_t j = 0; j < c; ++j)
      adj.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::stod(cells[i + 1][j + 1]);
  }
  return adj;
}

}  // namespace cgnn
