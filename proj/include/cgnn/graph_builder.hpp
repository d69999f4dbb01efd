#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cgnn/pcmci.hpp"
#include "cgnn/stats.hpp"
#include "cgnn/tensor.hpp"

namespace cgnn {

enum class AdjacencyKind { kCausal, kCorr, kFull };

const char* ToString(AdjacencyKind kind);

// Weights over the non-target variables in node order (locals, then OCIs).
// weights(i, j) is the strength of the message from node i to node j.
struct AdjacencyMatrix {
  Matrix weights;
  std::vector<std::string> nodes;
  AdjacencyKind kind = AdjacencyKind::kFull;
  bool normalized = false;

  std::size_t size() const { return nodes.size(); }
  Tensor AsTensor() const;
};

// Node order of the non-target variables of a graph: locals, then OCIs.
std::vector<std::size_t> GraphNodeOrder(const CausalGraph& graph);

// weights(i, j) = max over retained lags >= 1 of |mci| for i -> j. Auto-links
// land on the diagonal. The target never appears.
AdjacencyMatrix CausalAdjacency(const CausalGraph& graph);

AdjacencyMatrix FullAdjacency(const std::vector<std::string>& nodes);

// |corrcoef| between node feature rows (C x d, d >= 2). A node whose
// features have no variance gets an all-zero row and column.
AdjacencyMatrix CorrAdjacency(const Matrix& features, const std::vector<std::string>& nodes);

AdjacencyMatrix Normalize(const AdjacencyMatrix& adjacency);

// Header row "node,<names...>", then one labeled row per node.
void WriteAdjacencyCsv(const std::filesystem::path& path, const AdjacencyMatrix& adjacency);
AdjacencyMatrix ReadAdjacencyCsv(const std::filesystem::path& path, AdjacencyKind kind,
                                 bool normalized);

}  // namespace cgnn
